#include "sfmsfv/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "sfmsfv/log.hpp"

namespace sfv {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string alpha_text(const Index3& a) {
  std::ostringstream os;
  os << "(" << a[0] << "," << a[1] << "," << a[2] << ")";
  return os.str();
}

RomParams rom_params(const RunConfig& cfg) { return {cfg.rom.m, cfg.rom.n, cfg.shift()}; }

std::string model_path(const std::string& dir, std::uint64_t key) {
  return (std::filesystem::path(dir) / rom_file_name(key)).string();
}

double sponge_rate(const RunConfig& cfg) {
  return cfg.domain.outer_bc == OuterBc::sponge ? cfg.domain.sponge.strength : 0.0;
}

std::vector<int> receiver_nodes(const RunConfig& cfg, const GridGeometry& grid) {
  std::vector<int> nodes;
  for (const Point3& p : cfg.receivers.points()) nodes.push_back(grid.nearest_node(p));
  return nodes;
}

}  // namespace

int resolve_workers(int requested) { return requested <= 0 ? max_workers() : requested; }

std::string cache_directory(const RunConfig& cfg) {
  if (const char* env = std::getenv("SFMSFV_CACHE"); env && *env) return env;
  return cfg.output.cache_dir;
}

OfflineReport run_offline(const RunConfig& cfg, const OfflineOptions& options) {
  const auto t0 = Clock::now();
  const DomainPartition part = build_partition(cfg.domain);
  const Vec c = sample_medium(cfg.medium, part);
  const RomParams params = rom_params(cfg);
  ensure_directory(options.cache_dir);

  const int n = static_cast<int>(part.subdomains.size());
  std::vector<std::string> failures(n), files(n);
  std::vector<char> hit(n, 0);
  for_each_index(Backend::openmp, resolve_workers(options.workers), n, [&](int i) {
    const SubdomainDesc& sub = part.subdomains[i];
    std::string stage = "assemble";
    try {
      const SubdomainOperator op = assemble_subdomain_operator(part, sub, c);
      stage = "hash";
      const std::uint64_t key = rom_cache_key(op, params);
      files[i] = model_path(options.cache_dir, key);
      if (rom_file_matches(files[i], key)) {
        hit[i] = 1;
        return;
      }
      stage = "reduce";
      const SubdomainRom rom = build_subdomain_rom(op, params);
      stage = "write";
      write_rom(files[i], rom, key);
    } catch (const std::exception& e) {
      failures[i] = "subdomain " + alpha_text(sub.alpha) + " [" + stage + "]: " + e.what();
    }
  });

  std::string all;
  for (const auto& f : failures)
    if (!f.empty()) all += "\n  " + f;
  if (!all.empty()) throw NumericalError("offline stage failed:" + all);

  OfflineReport rep;
  rep.subdomains = n;
  for (int i = 0; i < n; ++i) rep.cache_hits += hit[i];
  rep.built = n - rep.cache_hits;
  rep.files = files;
  rep.seconds = seconds_since(t0);
  return rep;
}

CoupledModel build_coupled_model(const RunConfig& cfg, const DomainPartition& part, const Vec& c, int workers) {
  const RomParams params = rom_params(cfg);
  const int n = static_cast<int>(part.subdomains.size());
  std::vector<SubdomainRom> roms(n);
  std::vector<std::string> failures(n);
  for_each_index(Backend::openmp, resolve_workers(workers), n, [&](int i) {
    try {
      roms[i] = build_subdomain_rom(assemble_subdomain_operator(part, part.subdomains[i], c), params);
    } catch (const std::exception& e) {
      failures[i] = "subdomain " + alpha_text(part.subdomains[i].alpha) + ": " + e.what();
    }
  });
  for (const auto& f : failures)
    if (!f.empty()) throw NumericalError(f);
  return couple_models(std::move(roms), sponge_rate(cfg));
}

Vec initial_displacement(const RunConfig& cfg, const GridGeometry& grid) {
  Vec u = Vec::Zero(grid.size());
  if (!cfg.initial.enabled) return u;
  const double w2 = cfg.initial.width * cfg.initial.width;
  for (int g = 0; g < grid.size(); ++g) {
    const Point3 p = grid.point(g);
    double r2 = 0.0;
    for (int a = 0; a < 3; ++a) r2 += (p[a] - cfg.initial.center[a]) * (p[a] - cfg.initial.center[a]);
    u[g] = cfg.initial.amplitude * std::exp(-r2 / w2);
  }
  return u;
}

OnlineResult run_online(const RunConfig& cfg, const OnlineOptions& options) {
  const auto t0 = Clock::now();
  const int workers = resolve_workers(options.workers);
  const DomainPartition part = build_partition(cfg.domain);
  const Vec c = sample_medium(cfg.medium, part);
  const RomParams params = rom_params(cfg);

  const int n = static_cast<int>(part.subdomains.size());
  std::vector<std::string> paths(n);
  std::vector<std::uint64_t> keys(n);
  for_each_index(Backend::openmp, workers, n, [&](int i) {
    const SubdomainOperator op = assemble_subdomain_operator(part, part.subdomains[i], c);
    keys[i] = rom_cache_key(op, params);
    paths[i] = model_path(options.cache_dir, keys[i]);
  });
  std::string missing;
  for (int i = 0; i < n; ++i)
    if (!rom_file_matches(paths[i], keys[i]))
      missing += "\n  " + paths[i] + " (subdomain " + alpha_text(part.subdomains[i].alpha) + ")";
  if (!missing.empty()) throw IoError("missing model files (run offline first):" + missing);

  // Without an initial pulse only the basis rows at receivers and at the
  // source are needed; the full bases would not fit in memory at large sizes.
  std::vector<std::vector<int>> needed(n);
  if (!cfg.initial.enabled) {
    std::vector<int> touched = receiver_nodes(cfg, part.grid);
    if (cfg.has_source) touched.push_back(part.grid.nearest_node(cfg.source.position));
    for (int node : touched)
      for (const auto& s : part.subdomains)
        if (const int l = s.find_local(part.grid, node); l >= 0) needed[s.id].push_back(l);
    for (auto& v : needed) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }
  std::vector<SubdomainRom> roms(n);
  for (int i = 0; i < n; ++i)
    roms[i] = cfg.initial.enabled ? read_rom(paths[i], keys[i]) : read_rom(paths[i], keys[i], &needed[i]);
  const CoupledModel model = couple_models(std::move(roms), sponge_rate(cfg));
  const double load_seconds = seconds_since(t0);

  const auto t1 = Clock::now();
  const GlobalOperator fine = assemble_global_operator(part, c);
  const LambdaEstimate fine_est = estimate_lambda_max(fine.matrix);
  const double fine_dt_max = stability_limit(fine_est.lambda);
  CflEstimate cfl = cfl_estimate_coupled(model);
  if (!cfl.converged) {
    log_warning("coupled CFL estimate did not converge; using the fine-grid limit");
    cfl.dt_max = fine_dt_max;
  }
  double dt = cfg.time.dt > 0.0 ? cfg.time.dt : cfg.time.cfl_factor * cfl.dt_max;
  if (dt > cfl.dt_max) {
    std::ostringstream os;
    os << "time.dt = " << dt << " exceeds the coupled stability limit " << cfl.dt_max;
    throw ConfigError(os.str());
  }
  const double cfl_seconds = seconds_since(t1);

  const auto t2 = Clock::now();
  CoupledStepper stepper(model, dt, {options.backend, workers});
  CoupledState state;
  if (cfg.initial.enabled)
    state = initial_state(model, part, initial_displacement(cfg, part.grid), Vec::Zero(part.grid.size()), dt);
  else
    state = zero_state(model);
  if (cfg.has_source) stepper.set_source(make_source_forcing(model, part, cfg.source));

  const std::vector<int> nodes = receiver_nodes(cfg, part.grid);
  const std::vector<ReceiverRow> rows = receiver_rows(model, part, nodes);
  OnlineResult res;
  res.dt = dt;
  for (int node : nodes) res.traces.receivers.push_back(part.grid.point(node));
  res.traces.dt = dt * cfg.time.output_every;

  const bool track_energy = !cfg.has_source;
  double e0 = 0.0, drift = 0.0;
  const int nsteps = step_count(dt, cfg.time.t_end);
  std::vector<double> row(nodes.size());
  for (int k = 0; k <= nsteps; ++k) {
    if (k % cfg.time.output_every == 0) {
      sample_receivers(rows, state, row.data());
      res.traces.samples.insert(res.traces.samples.end(), row.begin(), row.end());
      ++res.traces.steps;
    }
    if (k == nsteps) break;
    stepper.leapfrog_step(state);
    if (track_energy) {
      const double e = coupled_energy(model, state, dt);
      if (k == 0)
        e0 = e;
      else if (e0 != 0.0)
        drift = std::max(drift, std::abs(e - e0) / std::abs(e0));
    }
  }
  res.energy_drift = drift;
  res.counters = stepper.counters();
  const double step_seconds = seconds_since(t2);

  RunMetadata& m = res.meta;
  m.set("name", cfg.output.name);
  m.set("subdomains", n);
  m.set("rom.m", cfg.rom.m);
  m.set("rom.n", cfg.rom.n);
  m.set("rom.shift", params.shift);
  m.set("rom.layers", model.roms.empty() ? 0 : model.roms[0].layers());
  m.set("workers", workers);
  m.set("dt", dt);
  m.set("steps", static_cast<std::int64_t>(nsteps));
  m.set("lambda.rom", cfl.lambda);
  m.set("lambda.fine", fine_est.lambda);
  m.set("dt_max.rom", cfl.dt_max);
  m.set("dt_max.fine", fine_dt_max);
  m.set("dt_ratio", cfl.dt_max / fine_dt_max);
  m.set("cfl.converged", cfl.converged ? std::string("yes") : std::string("no"));
  m.set("links", static_cast<int>(model.links.size()));
  m.set("messages", res.counters.messages);
  m.set("message_floats", res.counters.floats);
  m.set("messages_expected", static_cast<std::int64_t>(model.interface_face_count()) * nsteps);
  if (track_energy) m.set("energy_drift", drift);
  m.set("seconds.load", load_seconds);
  m.set("seconds.cfl", cfl_seconds);
  m.set("seconds.step", step_seconds);
  return res;
}

ReferenceResult run_reference(const RunConfig& cfg, int workers, Backend backend) {
  const auto t0 = Clock::now();
  workers = resolve_workers(workers);
  const DomainPartition part = build_partition(cfg.domain);
  const Vec c = sample_medium(cfg.medium, part);
  const GlobalOperator op = assemble_global_operator(part, c);
  const LambdaEstimate est = estimate_lambda_max(op.matrix);
  const double dt_max = stability_limit(est.lambda);
  const double dt = cfg.time.dt > 0.0 ? std::min(cfg.time.dt, cfg.time.cfl_factor * dt_max)
                                      : cfg.time.cfl_factor * dt_max;

  ReferenceOptions ro;
  ro.backend = backend;
  ro.workers = workers;
  ro.sponge = cfg.domain.outer_bc == OuterBc::sponge;
  ro.sponge_spec = cfg.domain.sponge;
  ro.extents = cfg.domain.extents;
  ReferenceSolver solver(op, dt, ro);
  if (cfg.initial.enabled) {
    const Vec u0 = initial_displacement(cfg, part.grid);
    Vec w0(u0.size());
    for (Eigen::Index g = 0; g < u0.size(); ++g) w0[g] = std::sqrt(op.mass[g]) / op.c[g] * u0[g];
    solver.set_initial(w0, Vec::Zero(u0.size()));
  }
  if (cfg.has_source) solver.set_source(cfg.source);

  ReferenceResult res;
  res.dt = dt;
  const std::vector<int> nodes = receiver_nodes(cfg, part.grid);
  for (int node : nodes) res.traces.receivers.push_back(part.grid.point(node));
  res.traces.dt = dt * cfg.time.output_every;
  const int nsteps = step_count(dt, cfg.time.t_end);
  for (int k = 0; k <= nsteps; ++k) {
    if (k % cfg.time.output_every == 0) {
      for (int node : nodes) res.traces.samples.push_back(solver.physical(node));
      ++res.traces.steps;
    }
    if (k < nsteps) solver.step();
  }
  res.meta.set("name", cfg.output.name);
  res.meta.set("nodes", op.grid.size());
  res.meta.set("dt", dt);
  res.meta.set("steps", nsteps);
  res.meta.set("lambda.fine", est.lambda);
  res.meta.set("dt_max.fine", dt_max);
  res.meta.set("workers", workers);
  res.meta.set("seconds.total", seconds_since(t0));
  return res;
}

TraceRecord resample(const TraceRecord& rec, double dt, int steps) {
  TraceRecord out;
  out.receivers = rec.receivers;
  out.dt = dt;
  out.steps = steps;
  const int nr = rec.receiver_count();
  out.samples.assign(static_cast<std::size_t>(steps) * nr, 0.0);
  for (int k = 0; k < steps; ++k) {
    const double pos = k * dt / rec.dt;
    int i0 = static_cast<int>(std::floor(pos));
    double w = pos - i0;
    if (i0 >= rec.steps - 1) {
      i0 = rec.steps - 1;
      w = 0.0;
    }
    for (int r = 0; r < nr; ++r) {
      const double a = rec.at(i0, r);
      const double b = w > 0.0 ? rec.at(i0 + 1, r) : a;
      out.at(k, r) = (1.0 - w) * a + w * b;
    }
  }
  return out;
}

CompareReport compare_traces(const TraceRecord& a, const TraceRecord& b) {
  if (a.receiver_count() != b.receiver_count()) throw ConfigError("compare: receiver counts differ");
  for (int r = 0; r < a.receiver_count(); ++r)
    for (int k = 0; k < 3; ++k)
      if (std::abs(a.receivers[r][k] - b.receivers[r][k]) > 1e-9)
        throw ConfigError("compare: receiver geometry differs at receiver " + std::to_string(r));
  if (a.steps < 1 || b.steps < 1) throw ConfigError("compare: empty trace record");
  CompareReport rep;
  rep.receivers = a.receiver_count();
  rep.dt = std::max(a.dt, b.dt);
  const double t_end = std::min((a.steps - 1) * a.dt, (b.steps - 1) * b.dt);
  rep.steps = static_cast<int>(std::floor(t_end / rep.dt + 1e-9)) + 1;
  const TraceRecord ra = a.dt == rep.dt && a.steps >= rep.steps ? a : resample(a, rep.dt, rep.steps);
  const TraceRecord rb = b.dt == rep.dt && b.steps >= rep.steps ? b : resample(b, rep.dt, rep.steps);
  double num = 0.0, den = 0.0;
  for (int k = 0; k < rep.steps; ++k)
    for (int r = 0; r < rep.receivers; ++r) {
      const double d = ra.at(k, r) - rb.at(k, r);
      num += d * d;
      den += ra.at(k, r) * ra.at(k, r);
    }
  rep.relative_l2 = den > 0.0 ? std::sqrt(num / den) : (num > 0.0 ? INFINITY : 0.0);
  return rep;
}

Mat normalized_window(const TraceRecord& rec, double t0, double t1) {
  const int nr = rec.receiver_count();
  std::vector<double> s(nr, 0.0);
  for (int r = 1; r < nr; ++r) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) d2 += std::pow(rec.receivers[r][a] - rec.receivers[0][a], 2);
    s[r] = std::sqrt(d2);
  }
  std::vector<int> ks;
  for (int k = 0; k < rec.steps; ++k) {
    const double t = k * rec.dt;
    if (t >= t0 - 1e-12 && t <= t1 + 1e-12) ks.push_back(k);
  }
  Mat out(static_cast<Eigen::Index>(ks.size()), nr + 1);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const int k = ks[i];
    double integral = 0.0, peak = 0.0;
    for (int r = 0; r < nr; ++r) peak = std::max(peak, std::abs(rec.at(k, r)));
    for (int r = 1; r < nr; ++r) integral += 0.5 * (rec.at(k, r) + rec.at(k, r - 1)) * (s[r] - s[r - 1]);
    const double scale = std::abs(integral) > 1e-12 * std::max(peak, 1e-300) ? integral : 1.0;
    out(static_cast<Eigen::Index>(i), 0) = k * rec.dt;
    for (int r = 0; r < nr; ++r) out(static_cast<Eigen::Index>(i), r + 1) = rec.at(k, r) / scale;
  }
  return out;
}

}  // namespace sfv
