// Serial vs OpenMP: fine-grid stencil kernels and one coupled ROM step.
// Second benchmark argument is the worker count (0 selects the serial path).

#include <benchmark/benchmark.h>

#include <algorithm>
#include <map>

#include "sfmsfv/config.hpp"
#include "sfmsfv/sim.hpp"

using namespace sfv;

namespace {

struct FineGrid {
  GlobalOperator op;
  Vec a, b, c;
};

// Cube with n nodes per axis split into 2x2x2 subdomains.
FineGrid& fine_grid(int n) {
  static std::map<int, FineGrid> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  DomainSpec spec;
  spec.subdomain_counts = {2, 2, 2};
  spec.nodes_per_subdomain = {n / 2 + 1, n / 2 + 1, n / 2 + 1};
  spec.extents = {1, 1, 1};
  const DomainPartition part = build_partition(spec);
  FineGrid g;
  g.op = assemble_global_operator(part, Vec::Ones(part.grid.size()));
  g.a = Vec::Random(part.grid.size());
  g.b = Vec::Random(part.grid.size());
  g.c = Vec::Zero(part.grid.size());
  return cache.emplace(n, std::move(g)).first->second;
}

Backend backend_of(int workers) { return workers == 0 ? Backend::serial : Backend::openmp; }

void BM_spmv(benchmark::State& state) {
  FineGrid& g = fine_grid(static_cast<int>(state.range(0)));
  const kernels::CsrView v = kernels::view(g.op.matrix);
  const int w = static_cast<int>(state.range(1));
  for (auto _ : state) {
    kernels::spmv(backend_of(w), std::max(w, 1), v, g.a.data(), g.c.data());
    benchmark::DoNotOptimize(g.c.data());
  }
  state.SetItemsProcessed(state.iterations() * g.op.matrix.nonZeros());
}

void BM_leapfrog(benchmark::State& state) {
  FineGrid& g = fine_grid(static_cast<int>(state.range(0)));
  const kernels::CsrView v = kernels::view(g.op.matrix);
  const int w = static_cast<int>(state.range(1));
  for (auto _ : state) {
    kernels::leapfrog(backend_of(w), std::max(w, 1), v, g.a.data(), g.b.data(), 1e-4, g.c.data());
    benchmark::DoNotOptimize(g.c.data());
  }
  state.SetItemsProcessed(state.iterations() * g.op.grid.size());
}

struct Coupled {
  DomainPartition part;
  CoupledModel model;
  double dt = 0.0;
};

// 4x4x2 subdomains of 12^3 nodes, m = 9, n = 3 (the desk-scale layout).
const Coupled& coupled() {
  static const Coupled c = [] {
    RunConfig cfg;
    cfg.domain.subdomain_counts = {4, 4, 2};
    cfg.domain.nodes_per_subdomain = {12, 12, 12};
    cfg.domain.extents = {4, 4, 2};
    cfg.rom = {9, 3, -1.0};
    cfg.time.t_end = 7.0;
    Coupled out;
    out.part = build_partition(cfg.domain);
    out.model = build_coupled_model(cfg, out.part, Vec::Ones(out.part.grid.size()), max_workers());
    out.dt = 0.9 * cfl_estimate_coupled(out.model).dt_max;
    return out;
  }();
  return c;
}

void BM_coupled_step(benchmark::State& state) {
  const Coupled& c = coupled();
  const int w = static_cast<int>(state.range(0));
  CoupledStepper stepper(c.model, c.dt, {backend_of(w), std::max(w, 1)});
  SourceSpec src;
  src.position = {2.5, 1.5, 0.5};
  src.wavelength = 1.45;
  stepper.set_source(make_source_forcing(c.model, c.part, src));
  CoupledState st = zero_state(c.model);
  for (auto _ : state) stepper.leapfrog_step(st);
  state.SetItemsProcessed(state.iterations() * c.model.subdomain_count());
}

void worker_args(benchmark::internal::Benchmark* b, bool with_size) {
  std::vector<int> ws{0, 1};
  if (max_workers() > 1) ws.push_back(max_workers());
  for (int w : ws) {
    if (with_size)
      for (int n : {32, 64, 128}) b->Args({n, w});
    else
      b->Args({w});
  }
}

}  // namespace

BENCHMARK(BM_spmv)->Apply([](auto* b) { worker_args(b, true); });
BENCHMARK(BM_leapfrog)->Apply([](auto* b) { worker_args(b, true); });
BENCHMARK(BM_coupled_step)->Apply([](auto* b) { worker_args(b, false); });

BENCHMARK_MAIN();
