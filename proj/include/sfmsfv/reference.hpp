#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sfmsfv/grid.hpp"
#include "sfmsfv/kernels.hpp"

namespace sfv {

enum class PulseKind { ricker, gaussian_derivative };

// Point source forcing u_tt at the nearest node. The centre frequency follows
// from the target minimal wavelength: f_max = c_ref / wavelength = 2.5 f0.
struct SourceSpec {
  Point3 position{0, 0, 0};
  double wavelength = 0.78;
  double c_ref = 1.0;
  double amplitude = 1.0;
  PulseKind pulse = PulseKind::ricker;
  double delay = -1.0;  // negative: 1.2 / f0

  double center_frequency() const { return c_ref / (2.5 * wavelength); }
  double effective_delay() const { return delay >= 0.0 ? delay : 1.2 / center_frequency(); }
  double value(double t) const;
};

// Receivers evenly spaced on a segment parallel to one axis, snapped to nodes.
struct ReceiverLine {
  Point3 origin{0, 0, 0};
  int axis = 0;
  double length = 0.0;
  int count = 1;

  std::vector<Point3> points() const;
};

struct TraceRecord {
  std::vector<Point3> receivers;
  double dt = 0.0;  // sample spacing
  int steps = 0;    // samples per receiver, first one at t = 0
  std::vector<double> samples;  // [step][receiver]

  int receiver_count() const { return static_cast<int>(receivers.size()); }
  double at(int step, int r) const { return samples[static_cast<std::size_t>(step) * receivers.size() + r]; }
  double& at(int step, int r) { return samples[static_cast<std::size_t>(step) * receivers.size() + r]; }
};

struct LambdaEstimate {
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Power iteration for the largest eigenvalue of a self-adjoint positive
// semidefinite map in the given inner product.
struct PowerIterationProblem {
  int size = 0;
  std::function<void(const Vec&, Vec&)> apply;
  std::function<double(const Vec&, const Vec&)> dot;
};

LambdaEstimate power_iteration(const PowerIterationProblem& problem, int max_iterations = 10000,
                               double tolerance = 1e-8);

// Largest eigenvalue of -A.
LambdaEstimate estimate_lambda_max(const SpMat& a, int max_iterations = 10000, double tolerance = 1e-8);

inline double stability_limit(double lambda_max) { return 2.0 / std::sqrt(lambda_max); }

struct ReferenceOptions {
  Backend backend = Backend::openmp;
  int workers = 1;
  int output_every = 1;
  bool sponge = false;
  SpongeSpec sponge_spec;
  Point3 extents{1, 1, 1};
};

// Central differences on the undecomposed grid in the variable w = M^{1/2} C^{-1} u.
class ReferenceSolver {
 public:
  ReferenceSolver(const GlobalOperator& op, double dt, ReferenceOptions options = {});

  void set_initial(const Vec& w0, const Vec& v0);
  void set_source(const SourceSpec& source);
  void step();

  // 1/2 |(w - w_prev)/dt|^2 + 1/2 w^T (-A) w_prev
  double energy() const;
  double time() const { return t_; }
  double dt() const { return dt_; }
  const Vec& current() const { return cur_; }
  double physical(int node) const;

 private:
  const GlobalOperator& op_;
  kernels::CsrView view_;
  double dt_;
  ReferenceOptions options_;
  Vec prev_, cur_, next_;
  Vec damping_;
  int source_node_ = -1;
  double source_weight_ = 0.0;
  SourceSpec source_;
  double t_ = 0.0;
  double norm_ref_ = 0.0;
};

TraceRecord run_reference(const GlobalOperator& op, const SourceSpec& source, const ReceiverLine& receivers,
                          double dt, double t_end, const ReferenceOptions& options = {});

// Number of leapfrog steps that reaches t_end.
int step_count(double dt, double t_end);

}  // namespace sfv
