#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sfmsfv/log.hpp"
#include "sfmsfv/stepper.hpp"

using namespace sfv;

namespace {

struct Setup {
  DomainPartition partition;
  Vec c;
  CoupledModel model;
};

Setup make_setup(Index3 counts, Index3 nodes, Point3 ext, RomParams params, bool exterior = true, double c = 1.0) {
  DomainSpec spec;
  spec.subdomain_counts = counts;
  spec.nodes_per_subdomain = nodes;
  spec.extents = ext;
  spec.exterior_faces = exterior;
  Setup s;
  s.partition = build_partition(spec);
  s.c = Vec::Constant(s.partition.grid.size(), c);
  std::vector<SubdomainRom> roms;
  for (const auto& d : s.partition.subdomains)
    roms.push_back(build_subdomain_rom(assemble_subdomain_operator(s.partition, d, s.c), params));
  s.model = couple_models(std::move(roms));
  return s;
}

Mat block_diag(const std::vector<Mat>& blocks) {
  Eigen::Index n = 0;
  for (const Mat& b : blocks) n += b.rows();
  Mat d = Mat::Zero(n, n);
  Eigen::Index off = 0;
  for (const Mat& b : blocks) {
    d.block(off, off, b.rows(), b.cols()) = b;
    off += b.rows();
  }
  return d;
}

// Reduced operator of a single subdomain in U-coordinates, from the fine operator.
Mat dense_u_operator(const Setup& s) {
  const SubdomainRom& r = s.model.roms[0];
  const SubdomainOperator op = assemble_subdomain_operator(s.partition, s.partition.subdomains[0], s.c);
  const Mat t = r.vq.transpose() * (op.matrix * r.vq);
  const Mat d = block_diag(r.sfrac.g);
  return d * t * d.inverse();
}

Vec gaussian(const GridGeometry& g, const Point3& x0, double w) {
  Vec u(g.size());
  for (int i = 0; i < g.size(); ++i) {
    const Point3 p = g.point(i);
    double r2 = 0;
    for (int a = 0; a < 3; ++a) r2 += (p[a] - x0[a]) * (p[a] - x0[a]);
    u[i] = std::exp(-r2 / (w * w));
  }
  return u;
}

}  // namespace

TEST_CASE("interior acceleration on a two-layer scalar model") {
  SFractionModel m;
  m.gamma = {Mat::Constant(1, 1, 3.0), Mat::Constant(1, 1, 5.0)};
  m.gamma_hat = {Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 7.0)};
  m.g = {Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, std::sqrt(7.0))};
  Vec u(2);
  u << 1, 0;
  const Vec acc = interior_accel(m, u);
  REQUIRE(acc.size() == 1);
  CHECK(acc[0] == doctest::Approx(7.0 * 3.0));
  CHECK(interior_accel(m, Vec::Zero(2)).norm() == 0.0);
}

TEST_CASE("single subdomain: coupled acceleration is the dense U-coordinate operator") {
  const Setup s = make_setup({1, 1, 1}, {6, 5, 5}, {1, 1, 1}, {4, 2, 1.0});
  const Mat tu = dense_u_operator(s);
  std::mt19937_64 rng(4);
  const Vec u = oracle::random_matrix(static_cast<int>(tu.rows()), 1, rng);
  std::vector<Vec> acc;
  coupled_accel(s.model, {u}, acc);
  CHECK((acc[0] - tu * u).norm() < 1e-10 * (tu * u).norm());
  // Interior and exterior pieces separately.
  const SubdomainRom& r = s.model.roms[0];
  const Vec inner = interior_accel(r.sfrac, u);
  CHECK((inner - acc[0].tail(inner.size())).norm() < 1e-12 * inner.norm());
  for (int b = 0; b < 6; ++b) {
    const FaceBlock& fb = r.face_blocks[b];
    CHECK((exterior_accel(r, u, b) - acc[0].segment(fb.offset, fb.m)).norm() <= 1e-12 * acc[0].norm());
  }
}

TEST_CASE("single subdomain: stepper equals dense leapfrog and CFL matches the dense spectrum") {
  const Setup s = make_setup({1, 1, 1}, {6, 6, 6}, {1, 1, 1}, {4, 3, 1.0});
  const Mat tu = dense_u_operator(s);
  const Vec ev = Eigen::EigenSolver<Mat>(tu).eigenvalues().real();
  const double lambda = -ev.minCoeff();
  const CflEstimate cfl = cfl_estimate_coupled(s.model, 20000, 1e-12);
  CHECK(cfl.converged);
  CHECK(cfl.lambda == doctest::Approx(lambda).epsilon(1e-6));

  const SubdomainOperator op = assemble_subdomain_operator(s.partition, s.partition.subdomains[0], s.c);
  const double fine = estimate_lambda_max(op.matrix).lambda;
  CHECK(stability_limit(cfl.lambda) / stability_limit(fine) >= 1.0);

  const double dt = 0.9 * cfl.dt_max;
  std::mt19937_64 rng(9);
  CoupledState st = zero_state(s.model);
  st.curr[0] = oracle::random_matrix(static_cast<int>(tu.rows()), 1, rng);
  st.prev[0] = st.curr[0];
  Vec up = st.prev[0], uc = st.curr[0];
  CoupledStepper stepper(s.model, dt);
  for (int k = 0; k < 200; ++k) {
    stepper.leapfrog_step(st);
    const Vec un = 2 * uc - up + dt * dt * (tu * uc);
    up = uc;
    uc = un;
  }
  CHECK((st.curr[0] - uc).norm() < 1e-10 * uc.norm());
  CHECK(st.step == 200);
}

TEST_CASE("zero state with zero forcing stays zero") {
  Setup s = make_setup({2, 1, 1}, {6, 6, 6}, {2, 1, 1}, {4, 2, 1.0});
  CoupledState st = zero_state(s.model);
  CoupledStepper stepper(s.model, 0.01);
  SourceSpec src;
  src.position = {0.5, 0.5, 0.5};
  src.amplitude = 0.0;
  stepper.set_source(make_source_forcing(s.model, s.partition, src));
  for (int k = 0; k < 20; ++k) stepper.leapfrog_step(st);
  for (const Vec& v : st.curr) CHECK(v.norm() == 0.0);
}

TEST_CASE("complete models on a full interface reproduce the fine grid") {
  // 4^3 nodes per subdomain, only the 4x4 interface carries modes and all 16
  // of them are used; the Krylov space then spans each subdomain entirely.
  const Setup s = make_setup({2, 1, 1}, {4, 4, 4}, {2, 1, 1}, {16, 3, 1.0}, false);
  for (const auto& r : s.model.roms) CHECK(r.vq.cols() == 64);

  const GlobalOperator g = assemble_global_operator(s.partition, s.c);
  const double dt = 0.5 * stability_limit(estimate_lambda_max(g.matrix).lambda);
  const Vec u0 = gaussian(s.partition.grid, {0.7, 0.4, 0.5}, 0.4);
  const Vec v0 = Vec::Zero(u0.size());
  CoupledState st = initial_state(s.model, s.partition, u0, v0, dt);
  ReferenceSolver ref(g, dt, {Backend::serial, 1});
  ref.set_initial(u0.array() * g.mass.array().sqrt() / g.c.array(), v0);

  std::vector<int> all(s.partition.grid.size());
  for (int i = 0; i < s.partition.grid.size(); ++i) all[i] = i;
  const auto rows = receiver_rows(s.model, s.partition, all);
  Vec rom_u(all.size());
  sample_receivers(rows, st, rom_u.data());
  CHECK((rom_u - u0).norm() < 1e-10 * u0.norm());

  CoupledStepper stepper(s.model, dt);
  for (int k = 0; k < 100; ++k) {
    stepper.leapfrog_step(st);
    ref.step();
  }
  Vec ref_u(all.size());
  for (int i : all) ref_u[i] = ref.physical(i);
  sample_receivers(rows, st, rom_u.data());
  CHECK((rom_u - ref_u).norm() < 1e-9 * ref_u.norm());
}

TEST_CASE("replicas stay bitwise equal and each face sends one message per step") {
  Setup s = make_setup({2, 2, 1}, {6, 6, 6}, {2, 2, 1}, {4, 2, 1.0});
  CHECK(s.model.links.size() == 4);
  CHECK(s.model.interface_face_count() == 8);
  const Vec u0 = gaussian(s.partition.grid, {0.8, 0.9, 0.5}, 0.3);
  const double dt = 0.9 * cfl_estimate_coupled(s.model).dt_max;
  CoupledState st = initial_state(s.model, s.partition, u0, Vec::Zero(u0.size()), dt);
  CHECK(replicas_consistent(s.model, st));
  CoupledStepper stepper(s.model, dt);
  SourceSpec src;
  src.position = {0.5, 0.5, 0.5};
  src.wavelength = 0.5;
  stepper.set_source(make_source_forcing(s.model, s.partition, src));
  for (int k = 0; k < 50; ++k) {
    stepper.leapfrog_step(st);
    CHECK(replicas_consistent(s.model, st));
  }
  const MessageCounters& mc = stepper.counters();
  CHECK(mc.steps == 50);
  CHECK(mc.messages == 8 * 50);
  CHECK(mc.floats == 4 * 8 * 50);
  for (const auto& pl : mc.per_link) {
    CHECK(pl[0] == 50);
    CHECK(pl[1] == 50);
  }
  for (const auto& box : stepper.mailbox())
    for (const FaceMessage& m : box) CHECK(m.payload.size() == 4);

  // Breaking a replica is detected.
  st.curr[1][s.model.roms[1].face_blocks[s.model.links[0].hi_block].offset] += 1.0;
  CHECK_FALSE(replicas_consistent(s.model, st));
  synchronize_replicas(s.model, st);
  CHECK(replicas_consistent(s.model, st));
}

TEST_CASE("boundary update refuses stale or malformed messages") {
  Setup s = make_setup({2, 1, 1}, {6, 6, 6}, {2, 1, 1}, {4, 2, 1.0});
  CoupledState st = zero_state(s.model);
  st.curr[0].setOnes();
  synchronize_replicas(s.model, st);
  CoupledStepper stepper(s.model, 0.01);
  stepper.post_messages(st);
  stepper.update_interior(st);
  stepper.mailbox()[0][1].step = st.step - 1;
  CHECK_THROWS_AS(stepper.update_boundaries(st), ProtocolError);

  CoupledStepper fresh(s.model, 0.01);
  CHECK_THROWS_AS(fresh.update_boundaries(st), ProtocolError);  // nothing posted yet

  CoupledStepper short_payload(s.model, 0.01);
  short_payload.post_messages(st);
  short_payload.mailbox()[0][0].payload.resize(3);
  CHECK_THROWS_AS(short_payload.update_boundaries(st), ProtocolError);
}

TEST_CASE("boundary acceleration combines both one-sided fluxes") {
  Setup s = make_setup({2, 1, 1}, {6, 6, 6}, {2, 1, 1}, {4, 2, 1.0});
  std::mt19937_64 rng(12);
  CoupledState st = zero_state(s.model);
  for (auto& v : st.curr) v = oracle::random_matrix(static_cast<int>(v.size()), 1, rng);
  synchronize_replicas(s.model, st);
  std::vector<Vec> acc;
  coupled_accel(s.model, st.curr, acc);
  const FaceLink& l = s.model.links[0];
  const Vec b = boundary_accel(s.model.roms[0], s.model.roms[1], st.curr[0], st.curr[1], Face::x_hi);
  const int off = s.model.roms[0].face_blocks[l.lo_block].offset;
  CHECK((b - acc[0].segment(off, 4)).norm() < 1e-12 * b.norm());

  // Zero fluxes on both sides: U_2 = U_1 on the face, nothing else moves it.
  CoupledState flat = zero_state(s.model);
  const Vec zero_b = boundary_accel(s.model.roms[0], s.model.roms[1], flat.curr[0], flat.curr[1], Face::x_hi);
  CHECK(zero_b.norm() == 0.0);
}

TEST_CASE("coupled energy is conserved with reflecting walls") {
  Setup s = make_setup({2, 1, 1}, {6, 6, 6}, {2, 1, 1}, {4, 3, 1.0});
  const double dt = 0.9 * cfl_estimate_coupled(s.model).dt_max;
  const Vec u0 = gaussian(s.partition.grid, {0.6, 0.5, 0.5}, 0.3);
  CoupledState st = initial_state(s.model, s.partition, u0, Vec::Zero(u0.size()), dt);
  CoupledStepper stepper(s.model, dt);
  const double e0 = coupled_energy(s.model, st, dt);
  CHECK(e0 > 0.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    stepper.leapfrog_step(st);
    worst = std::max(worst, std::abs(coupled_energy(s.model, st, dt) - e0) / e0);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("coupled stepper detects instability above the CFL limit") {
  Setup s = make_setup({2, 1, 1}, {6, 6, 6}, {2, 1, 1}, {4, 2, 1.0});
  const double dt = 1.3 * cfl_estimate_coupled(s.model).dt_max;
  const Vec u0 = gaussian(s.partition.grid, {0.6, 0.5, 0.5}, 0.3);
  CoupledState st = initial_state(s.model, s.partition, u0, Vec::Zero(u0.size()), dt);
  CoupledStepper stepper(s.model, dt);
  CHECK_THROWS_AS(
      for (int k = 0; k < 20000; ++k) stepper.leapfrog_step(st), NumericalError);
}

TEST_CASE("serial and OpenMP stepping are bitwise identical") {
  Setup s = make_setup({2, 2, 1}, {6, 6, 6}, {2, 2, 1}, {4, 2, 1.0});
  SourceSpec src;
  src.position = {0.6, 1.5, 0.5};
  src.wavelength = 0.6;
  const double dt = 0.02;
  std::vector<CoupledState> finals;
  for (auto [b, w] : {std::pair{Backend::serial, 1}, std::pair{Backend::openmp, 2}, std::pair{Backend::openmp, 3}}) {
    CoupledState st = zero_state(s.model);
    CoupledStepper stepper(s.model, dt, {b, w});
    stepper.set_source(make_source_forcing(s.model, s.partition, src));
    for (int k = 0; k < 60; ++k) stepper.leapfrog_step(st);
    finals.push_back(st);
  }
  for (std::size_t i = 1; i < finals.size(); ++i)
    for (int d = 0; d < s.model.subdomain_count(); ++d) {
      CHECK(finals[i].curr[d] == finals[0].curr[d]);
      CHECK(finals[i].prev[d] == finals[0].prev[d]);
    }
  CHECK(finals[0].curr[2].norm() > 0.0);
}

TEST_CASE("source handling") {
  Setup s = make_setup({2, 1, 1}, {6, 6, 6}, {2, 1, 1}, {4, 2, 1.0});
  SourceSpec on_interface;
  on_interface.position = {1.0, 0.5, 0.5};
  CHECK_THROWS_AS(make_source_forcing(s.model, s.partition, on_interface), ConfigError);

  SourceSpec inside;
  inside.position = {1.5, 0.5, 0.5};
  const SourceForcing f = make_source_forcing(s.model, s.partition, inside);
  CHECK(f.subdomain == 1);
  const int node = s.partition.grid.nearest_node(inside.position);
  const int local = s.partition.subdomains[1].find_local(s.partition.grid, node);
  // Forcing equals G-scaled (VQ)^T of sqrt(mu)/c at the node.
  const SubdomainRom& r = s.model.roms[1];
  Vec b = Vec::Zero(r.nodes());
  b[local] = std::sqrt(r.mass[local]) / r.c[local];
  CHECK((f.g - to_layers(b, r.vq, r.sfrac)).norm() < 1e-13 * f.g.norm());

  // A source the basis cannot see only warns.
  s.model.roms[1].vq.row(local).setZero();
  int warnings = 0;
  auto old = set_log_sink([&](LogLevel l, const std::string&) { warnings += l == LogLevel::warning; });
  const SourceForcing blind = make_source_forcing(s.model, s.partition, inside);
  set_log_sink(old);
  CHECK(warnings == 1);
  CHECK(blind.g.norm() == 0.0);
}

TEST_CASE("receiver rows: zero state gives zero traces") {
  Setup s = make_setup({2, 1, 1}, {6, 6, 6}, {2, 1, 1}, {4, 2, 1.0});
  const auto rows = receiver_rows(s.model, s.partition, {0, 4, 8});
  CHECK(rows[1].subdomain == 0);  // interface node read from the lower subdomain
  CHECK(rows[2].subdomain == 1);
  double out[3] = {1, 1, 1};
  sample_receivers(rows, zero_state(s.model), out);
  CHECK(out[0] == 0.0);
  CHECK(out[2] == 0.0);
}

TEST_CASE("mismatched face layouts cannot be coupled") {
  Setup a = make_setup({2, 1, 1}, {6, 6, 6}, {2, 1, 1}, {4, 2, 1.0});
  Setup b = make_setup({2, 1, 1}, {6, 6, 6}, {2, 1, 1}, {1, 2, 1.0});
  std::vector<SubdomainRom> mixed{a.model.roms[0], b.model.roms[1]};
  CHECK_THROWS_AS(couple_models(mixed), ConfigError);
  std::vector<SubdomainRom> swapped{a.model.roms[1], a.model.roms[0]};
  CHECK_THROWS_AS(couple_models(swapped), ConfigError);
}
