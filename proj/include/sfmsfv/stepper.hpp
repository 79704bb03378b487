#pragma once

#include <cstdint>
#include <vector>

#include "sfmsfv/kernels.hpp"
#include "sfmsfv/reference.hpp"
#include "sfmsfv/rom.hpp"

namespace sfv {

// Shared face between two subdomain models. The lower subdomain owns the
// update and writes both replicas.
struct FaceLink {
  int lo = 0, hi = 0;              // subdomain ids
  int lo_block = 0, hi_block = 0;  // index into face_blocks
  int m = 0;
  Mat coupling;  // ([Gamma_hat^lo_1]_ff^{-1} + [Gamma_hat^hi_1]_ff^{-1})^{-1}
};

struct SubdomainCoupling {
  std::vector<int> block_link;  // per face block: link index, -1 if exterior
  std::vector<int> block_side;  // 0: lo side of the link, 1: hi side
  std::vector<Mat> face_mass;   // [Gamma_hat_1]_ff
  std::vector<Mat> face_mass_inv;
  std::vector<Mat> layer_mass_inv;  // Gamma_hat_j^{-1}; entry 0 unused
};

struct CoupledModel {
  std::vector<SubdomainRom> roms;  // indexed by subdomain id
  std::vector<FaceLink> links;
  std::vector<SubdomainCoupling> coupling;
  double sponge_rate = 0.0;  // damping rate applied to exterior face modes

  int subdomain_count() const { return static_cast<int>(roms.size()); }
  int interface_face_count() const { return 2 * static_cast<int>(links.size()); }
};

// Pairs up face blocks across neighbours. sponge_rate > 0 damps exterior
// face blocks by exp(-sponge_rate dt) per step.
CoupledModel couple_models(std::vector<SubdomainRom> roms, double sponge_rate = 0.0);

struct CoupledState {
  std::vector<Vec> prev;
  std::vector<Vec> curr;
  double t = 0.0;
  std::int64_t step = 0;
};

CoupledState zero_state(const CoupledModel& model);

// Copy the owner's face replicas onto the neighbour's.
void synchronize_replicas(const CoupledModel& model, CoupledState& state);

// True when all shared face replicas are bitwise equal.
bool replicas_consistent(const CoupledModel& model, const CoupledState& state);

// --- per-subdomain pieces -------------------------------------------------

// q_j = Gamma_j (U_{j+1} - U_j), U_{L+1} = 0
Vec layer_fluxes(const SFractionModel& model, const Vec& u);

// Accelerations of layers 2..L (size (L-1)p):
// Gamma_hat_j (Gamma_j (U_{j+1}-U_j) - Gamma_{j-1} (U_j - U_{j-1}))
Vec interior_accel(const SFractionModel& model, const Vec& u);

// Shared face modes: S (flux_a + flux_b) with fluxes [Gamma_1 (U_2 - U_1)] on the face.
Vec boundary_accel(const SubdomainRom& a, const SubdomainRom& b, const Vec& ua, const Vec& ub, Face face_of_a);

// Face without neighbour: [Gamma_hat_1]_ff [Gamma_1 (U_2 - U_1)]_f
Vec exterior_accel(const SubdomainRom& rom, const Vec& u, int block);

// Full accelerations with zero sources (used for CFL and tests).
void coupled_accel(const CoupledModel& model, const std::vector<Vec>& u, std::vector<Vec>& acc);

// Mass-weighted inner product; shared blocks weigh in from both sides.
double coupled_dot(const CoupledModel& model, const std::vector<Vec>& a, const std::vector<Vec>& b);

// 1/2 |dU/dt|^2_M + 1/2 P(U_curr, U_prev), conserved by the scheme.
double coupled_energy(const CoupledModel& model, const CoupledState& state, double dt);

struct CflEstimate {
  double lambda = 0.0;
  double dt_max = 0.0;
  int iterations = 0;
  bool converged = false;
};

CflEstimate cfl_estimate_coupled(const CoupledModel& model, int max_iterations = 10000, double tolerance = 1e-8);

// --- sources and receivers ------------------------------------------------

// blockdiag(G_j) (VQ)^T b for the point forcing b = sqrt(mu)/c e_node.
Vec project_source(const SubdomainRom& rom, int local_node);

struct SourceForcing {
  SourceSpec spec;
  int subdomain = -1;
  Vec g;            // layer forcing of the owning subdomain
  std::vector<Vec> face_flux;  // per face block of the owner: [Gamma_hat_1]_ff^{-1} g_f
  bool active() const { return subdomain >= 0; }
};

SourceForcing make_source_forcing(const CoupledModel& model, const DomainPartition& partition,
                                  const SourceSpec& source);

struct ReceiverRow {
  int subdomain = 0;
  Eigen::RowVectorXd row;  // (c/sqrt(mu)) VQ(node,:) blockdiag(G_j^{-1})
};

std::vector<ReceiverRow> receiver_rows(const CoupledModel& model, const DomainPartition& partition,
                                       const std::vector<int>& global_nodes);

void sample_receivers(const std::vector<ReceiverRow>& rows, const CoupledState& state, double* out);

// Physical initial fields (global u and u_t) projected onto the layers.
CoupledState initial_state(const CoupledModel& model, const DomainPartition& partition, const Vec& u0,
                           const Vec& v0, double dt);

// --- time stepping --------------------------------------------------------

struct FaceMessage {
  int sender = -1;
  Face face = Face::x_lo;
  int link = -1;
  std::int64_t step = -1;
  Vec payload;  // m values
};

struct MessageCounters {
  std::int64_t messages = 0;
  std::int64_t floats = 0;
  std::int64_t steps = 0;
  std::vector<std::array<std::int64_t, 2>> per_link;
};

struct StepperOptions {
  Backend backend = Backend::openmp;
  int workers = 1;
};

class CoupledStepper {
 public:
  CoupledStepper(const CoupledModel& model, double dt, StepperOptions options = {});

  void set_source(SourceForcing forcing) { source_ = std::move(forcing); }

  // Algorithm phases; leapfrog_step runs them in order.
  void post_messages(const CoupledState& state);
  void update_interior(const CoupledState& state);
  void update_boundaries(const CoupledState& state);
  void finish_step(CoupledState& state);

  void leapfrog_step(CoupledState& state);

  std::vector<std::array<FaceMessage, 2>>& mailbox() { return mailbox_; }
  const MessageCounters& counters() const { return counters_; }
  double dt() const { return dt_; }

 private:
  double source_value(double t) const { return source_.active() ? source_.spec.value(t) : 0.0; }

  const CoupledModel& model_;
  double dt_;
  StepperOptions options_;
  SourceForcing source_;
  std::vector<Vec> flux_;  // per subdomain, layer fluxes without the source term
  std::vector<Vec> next_;
  std::vector<std::array<FaceMessage, 2>> mailbox_;
  double damping_ = 1.0;
  MessageCounters counters_;
  double norm_ref_ = 0.0;
};

}  // namespace sfv
