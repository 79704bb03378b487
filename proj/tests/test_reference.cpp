#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sfmsfv/log.hpp"
#include "sfmsfv/reference.hpp"

using namespace sfv;

namespace {

GlobalOperator make_global(Index3 counts, Index3 nodes, Point3 ext, double c = 1.0) {
  DomainSpec spec;
  spec.subdomain_counts = counts;
  spec.nodes_per_subdomain = nodes;
  spec.extents = ext;
  const DomainPartition p = build_partition(spec);
  return assemble_global_operator(p, Vec::Constant(p.grid.size(), c));
}

}  // namespace

TEST_CASE("two-node oscillator follows the exact leapfrog recurrence") {
  // -A has eigenvalues 0 and lambda = 4/h^2; w0 = (1,-1) is the oscillating mode.
  const GlobalOperator op = make_global({1, 1, 1}, {2, 1, 1}, {0.5, 1, 1});
  const double lambda = 4.0 / (0.5 * 0.5);
  const double dt = 0.9 * 2.0 / std::sqrt(lambda);
  const double theta = std::acos(1.0 - 0.5 * dt * dt * lambda);
  ReferenceSolver s(op, dt, {Backend::serial, 1});
  Vec w0(2);
  w0 << 1, -1;
  s.set_initial(w0, Vec::Zero(2));
  for (int k = 1; k <= 200; ++k) {
    s.step();
    CHECK(s.current()[0] == doctest::Approx(std::cos(k * theta)).epsilon(1e-10).scale(1.0));
    CHECK(s.current()[1] == doctest::Approx(-std::cos(k * theta)).epsilon(1e-10).scale(1.0));
  }
  CHECK(s.time() == doctest::Approx(200 * dt));
}

TEST_CASE("lambda estimate agrees with the dense eigensolver") {
  const GlobalOperator op = make_global({1, 1, 1}, {6, 5, 4}, {1, 1, 1}, 1.3);
  const LambdaEstimate est = estimate_lambda_max(op.matrix, 20000, 1e-12);
  const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(-Mat(op.matrix)).eigenvalues();
  CHECK(est.converged);
  CHECK(est.lambda == doctest::Approx(ev.maxCoeff()).epsilon(1e-6));
  CHECK(stability_limit(4.0) == 1.0);
}

TEST_CASE("reference energy is conserved below the stability limit") {
  const GlobalOperator op = make_global({1, 1, 1}, {8, 7, 6}, {1, 1, 1});
  const double dt = 0.9 * stability_limit(estimate_lambda_max(op.matrix).lambda);
  ReferenceSolver s(op, dt, {Backend::openmp, 2});
  Vec w0 = Vec::Zero(op.grid.size());
  w0[op.grid.index(3, 3, 3)] = 1.0;
  w0[op.grid.index(4, 3, 3)] = -0.5;
  s.set_initial(w0, Vec::Zero(op.grid.size()));
  s.step();
  const double e0 = s.energy();
  for (int k = 0; k < 1000; ++k) s.step();
  CHECK(std::abs(s.energy() - e0) <= 1e-10 * e0);
}

TEST_CASE("reference detects instability above the limit") {
  const GlobalOperator op = make_global({1, 1, 1}, {6, 6, 6}, {1, 1, 1});
  const double dt = 1.2 * stability_limit(estimate_lambda_max(op.matrix).lambda);
  ReferenceSolver s(op, dt, {Backend::serial, 1});
  Vec w0 = Vec::Zero(op.grid.size());
  w0[7] = 1.0;
  s.set_initial(w0, Vec::Zero(op.grid.size()));
  CHECK_THROWS_AS(
      for (int k = 0; k < 5000; ++k) s.step(), NumericalError);
}

TEST_CASE("serial and OpenMP reference runs are bitwise identical") {
  const GlobalOperator op = make_global({2, 2, 1}, {6, 6, 5}, {2, 2, 1});
  SourceSpec src;
  src.position = {0.6, 0.8, 0.5};
  src.wavelength = 0.5;
  ReceiverLine rl{{0, 0.5, 0.5}, 0, 2.0, 9};
  const TraceRecord a = run_reference(op, src, rl, 0.02, 2.0, {Backend::serial, 1});
  const TraceRecord b = run_reference(op, src, rl, 0.02, 2.0, {Backend::openmp, 3});
  CHECK(a.samples == b.samples);
  CHECK(a.steps == step_count(0.02, 2.0) + 1);
  double peak = 0.0;
  for (double v : a.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak > 0.0);
}

TEST_CASE("output interval thins the samples") {
  const GlobalOperator op = make_global({1, 1, 1}, {5, 5, 5}, {1, 1, 1});
  SourceSpec src;
  src.position = {0.5, 0.5, 0.5};
  ReceiverLine rl{{0, 0, 0}, 1, 1.0, 3};
  ReferenceOptions o;
  o.output_every = 4;
  const TraceRecord r = run_reference(op, src, rl, 0.01, 1.0, o);
  CHECK(r.dt == doctest::Approx(0.04));
  CHECK(r.steps == 26);
  CHECK(r.receivers[2][1] == doctest::Approx(1.0));
}

TEST_CASE("sponge damps the field") {
  const GlobalOperator op = make_global({1, 1, 1}, {10, 10, 10}, {1, 1, 1});
  const double dt = 0.05;
  ReferenceOptions o;
  o.sponge = true;
  o.sponge_spec = {0.3, 5.0};
  ReferenceSolver damped(op, dt, o), free(op, dt);
  Vec w0 = Vec::Zero(op.grid.size());
  w0[op.grid.index(5, 5, 5)] = 1.0;
  damped.set_initial(w0, Vec::Zero(w0.size()));
  free.set_initial(w0, Vec::Zero(w0.size()));
  for (int k = 0; k < 400; ++k) {
    damped.step();
    free.step();
  }
  CHECK(damped.energy() < 0.5 * free.energy());
}

TEST_CASE("pulse shapes") {
  SourceSpec s;
  s.wavelength = 0.78;
  CHECK(s.center_frequency() == doctest::Approx(1.0 / (2.5 * 0.78)));
  CHECK(s.effective_delay() == doctest::Approx(1.2 * 2.5 * 0.78));
  CHECK(s.value(s.effective_delay()) == doctest::Approx(1.0));
  // Ricker zero crossings at pi f0 tau = 1/sqrt(2)
  const double tz = 1.0 / (std::sqrt(2.0) * std::numbers::pi * s.center_frequency());
  CHECK(std::abs(s.value(s.effective_delay() + tz)) < 1e-12);
  s.pulse = PulseKind::gaussian_derivative;
  const double tp = 1.0 / (std::sqrt(2.0) * std::numbers::pi * s.center_frequency());
  CHECK(s.value(s.effective_delay() + tp) == doctest::Approx(1.0));
  CHECK(s.value(s.effective_delay()) == 0.0);
  s.delay = 0.25;
  CHECK(s.effective_delay() == 0.25);
}

TEST_CASE("receiver line and step count") {
  ReceiverLine rl{{1, 2, 3}, 2, 4.0, 5};
  const auto pts = rl.points();
  REQUIRE(pts.size() == 5);
  CHECK(pts[4][2] == doctest::Approx(7.0));
  CHECK(pts[1][0] == 1.0);
  CHECK(step_count(0.1, 1.0) == 10);
  CHECK(step_count(0.3, 1.0) == 4);
}

TEST_CASE("power iteration warns when it runs out of iterations") {
  const GlobalOperator op = make_global({1, 1, 1}, {8, 8, 8}, {1, 1, 1});
  int warnings = 0;
  auto old = set_log_sink([&](LogLevel l, const std::string&) { warnings += l == LogLevel::warning; });
  const LambdaEstimate est = estimate_lambda_max(op.matrix, 3, 1e-15);
  set_log_sink(old);
  CHECK_FALSE(est.converged);
  CHECK(warnings == 1);
}
