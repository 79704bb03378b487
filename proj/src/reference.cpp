#include "sfmsfv/reference.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "sfmsfv/log.hpp"

namespace sfv {

double SourceSpec::value(double t) const {
  const double f0 = center_frequency();
  const double tau = t - effective_delay();
  const double a = std::pow(std::numbers::pi * f0 * tau, 2);
  if (pulse == PulseKind::ricker) return amplitude * (1.0 - 2.0 * a) * std::exp(-a);
  // first derivative of a Gaussian, scaled to unit peak
  return amplitude * std::sqrt(2.0 * std::numbers::e) * std::numbers::pi * f0 * tau * std::exp(-a);
}

std::vector<Point3> ReceiverLine::points() const {
  std::vector<Point3> pts;
  for (int i = 0; i < count; ++i) {
    Point3 p = origin;
    if (count > 1) p[axis] += length * i / (count - 1);
    pts.push_back(p);
  }
  return pts;
}

LambdaEstimate power_iteration(const PowerIterationProblem& problem, int max_iterations, double tolerance) {
  LambdaEstimate est;
  if (problem.size == 0) {
    est.converged = true;
    return est;
  }
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vec x(problem.size), y(problem.size);
  for (int i = 0; i < problem.size; ++i) x[i] = dist(rng);
  x /= std::sqrt(problem.dot(x, x));
  double q_old = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    problem.apply(x, y);
    const double q = problem.dot(x, y);
    const double ny = std::sqrt(problem.dot(y, y));
    est.lambda = q;
    est.iterations = it;
    if (ny == 0.0) {
      est.converged = true;
      return est;
    }
    if (it > 1 && std::abs(q - q_old) <= tolerance * std::abs(q)) {
      est.converged = true;
      return est;
    }
    q_old = q;
    x = y / ny;
  }
  log_warning("power iteration did not converge in " + std::to_string(max_iterations) + " iterations");
  return est;
}

LambdaEstimate estimate_lambda_max(const SpMat& a, int max_iterations, double tolerance) {
  const auto v = kernels::view(a);
  PowerIterationProblem p;
  p.size = static_cast<int>(a.rows());
  p.apply = [&](const Vec& x, Vec& y) {
    y.resize(x.size());
    kernels::serial::spmv(v, x.data(), y.data());
    y = -y;
  };
  p.dot = [](const Vec& x, const Vec& y) { return x.dot(y); };
  return power_iteration(p, max_iterations, tolerance);
}

int step_count(double dt, double t_end) {
  return static_cast<int>(std::ceil(t_end / dt - 1e-9));
}

namespace {

double sponge_sigma(const Point3& p, const Point3& ext, const SpongeSpec& s) {
  double depth = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double d = std::min(p[a], ext[a] - p[a]);
    depth = std::max(depth, s.width - d);
  }
  if (depth <= 0.0) return 0.0;
  const double r = depth / s.width;
  return s.strength * r * r;
}

}  // namespace

ReferenceSolver::ReferenceSolver(const GlobalOperator& op, double dt, ReferenceOptions options)
    : op_(op), view_(kernels::view(op.matrix)), dt_(dt), options_(options) {
  if (!(dt > 0.0)) throw ConfigError("reference: dt must be positive");
  const int n = op.grid.size();
  prev_ = Vec::Zero(n);
  cur_ = Vec::Zero(n);
  next_ = Vec::Zero(n);
  if (options_.sponge) {
    damping_.resize(n);
    for (int g = 0; g < n; ++g)
      damping_[g] = std::exp(-sponge_sigma(op.grid.point(g), options_.extents, options_.sponge_spec) * dt);
  }
}

void ReferenceSolver::set_initial(const Vec& w0, const Vec& v0) {
  cur_ = w0;
  Vec aw(w0.size());
  kernels::serial::spmv(view_, w0.data(), aw.data());
  prev_ = w0 - dt_ * v0 + 0.5 * dt_ * dt_ * aw;
  norm_ref_ = cur_.norm();
}

void ReferenceSolver::set_source(const SourceSpec& source) {
  source_ = source;
  source_node_ = op_.grid.nearest_node(source.position);
  source_weight_ = std::sqrt(op_.mass[source_node_]) / op_.c[source_node_];
}

void ReferenceSolver::step() {
  kernels::leapfrog(options_.backend, options_.workers, view_, cur_.data(), prev_.data(), dt_ * dt_,
                    next_.data());
  if (source_node_ >= 0) next_[source_node_] += dt_ * dt_ * source_weight_ * source_.value(t_);
  if (options_.sponge) {
    next_.array() *= damping_.array();
    cur_.array() *= damping_.array();
  }
  std::swap(prev_, cur_);
  std::swap(cur_, next_);
  t_ += dt_;

  const double norm = std::sqrt(kernels::squared_norm(options_.backend, options_.workers, cur_.data(),
                                                      static_cast<int>(cur_.size())));
  if (!std::isfinite(norm)) throw NumericalError("reference solver: non-finite wavefield");
  if (norm_ref_ == 0.0 || (source_node_ >= 0 && t_ <= 2.0 * source_.effective_delay())) {
    norm_ref_ = std::max(norm_ref_, norm);
  } else if (norm > 1e6 * norm_ref_) {
    std::ostringstream os;
    os << "reference solver unstable at t=" << t_ << " (dt=" << dt_ << ")";
    throw NumericalError(os.str());
  }
}

double ReferenceSolver::energy() const {
  Vec aw(prev_.size());
  kernels::serial::spmv(view_, prev_.data(), aw.data());
  const double kinetic = (cur_ - prev_).squaredNorm() / (dt_ * dt_);
  return 0.5 * kinetic - 0.5 * cur_.dot(aw);
}

double ReferenceSolver::physical(int node) const {
  return op_.c[node] * cur_[node] / std::sqrt(op_.mass[node]);
}

TraceRecord run_reference(const GlobalOperator& op, const SourceSpec& source, const ReceiverLine& receivers,
                          double dt, double t_end, const ReferenceOptions& options) {
  if (!(t_end > 0.0)) throw ConfigError("reference: t_end must be positive");
  if (options.output_every < 1) throw ConfigError("reference: output interval must be >= 1");
  ReferenceSolver solver(op, dt, options);
  solver.set_source(source);
  std::vector<int> nodes;
  TraceRecord rec;
  for (const Point3& p : receivers.points()) {
    nodes.push_back(op.grid.nearest_node(p));
    rec.receivers.push_back(op.grid.point(nodes.back()));
  }
  rec.dt = dt * options.output_every;
  const int nsteps = step_count(dt, t_end);
  for (int k = 0; k <= nsteps; ++k) {
    if (k % options.output_every == 0) {
      for (int node : nodes) rec.samples.push_back(solver.physical(node));
      ++rec.steps;
    }
    if (k < nsteps) solver.step();
  }
  return rec;
}

}  // namespace sfv
