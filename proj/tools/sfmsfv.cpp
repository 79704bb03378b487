// Command-line driver: offline, online, reference, verify, compare, export-plot.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include "sfmsfv/ntd.hpp"
#include "sfmsfv/sim.hpp"

namespace {

using namespace sfv;

int exit_code(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 2;
  return 1;
}

std::string out_path(const RunConfig& cfg, const std::string& suffix) {
  return (std::filesystem::path(cfg.output.dir) / (cfg.output.name + suffix)).string();
}

Index3 parse_alpha(const std::string& s) {
  Index3 a{0, 0, 0};
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> a[0] >> c1 >> a[1] >> c2 >> a[2]) || c1 != ',' || c2 != ',')
    throw ConfigError("--subdomain expects i,j,k");
  return a;
}

struct VerifyRow {
  int n = 0;
  double ntd_error = 0.0;
  double chain_deviation = 0.0;
  double interpolation_error = 0.0;
};

int cmd_verify(const RunConfig& cfg, const std::string& alpha_text, int n_max, int count, double wmin,
               double wmax, const std::string& csv, const std::string& detail) {
  const DomainPartition part = build_partition(cfg.domain);
  const int id = part.subdomain_index(parse_alpha(alpha_text));
  if (id < 0) throw ConfigError("--subdomain outside the partition");
  const Vec c = sample_medium(cfg.medium, part);
  const SubdomainOperator op = assemble_subdomain_operator(part, part.subdomains[id], c);
  const SubdomainInputs in = build_subdomain_inputs(op, cfg.rom.m);
  const double shift = cfg.shift();

  if (wmax <= 0.0) wmax = 2.0 * std::numbers::pi * 2.5 * cfg.source.center_frequency();
  if (wmin <= 0.0) wmin = 0.1 * wmax;
  const std::vector<double> omegas = band_frequencies(wmin, wmax, count);
  std::vector<Mat> full;
  for (double w : omegas) full.push_back(ntd_full(op.matrix, in.f, w));
  const Mat full_interp = ntd_full_z(op.matrix, in.f, -shift);

  std::ofstream det;
  if (!detail.empty()) {
    det.open(detail);
    if (!det) throw IoError("cannot write " + detail);
    det << "n,omega,rom_error,tridiag_deviation,sfraction_deviation\n" << std::setprecision(10);
  }
  std::vector<VerifyRow> rows;
  for (int n = 1; n <= n_max; ++n) {
    const KrylovBasis kb = build_krylov_basis(op.matrix, in.f, n, shift);
    const ReducedPair rp = project(op.matrix, in.f, kb.v);
    const BlockTridiagonal tri = block_lanczos(rp.a, rp.f);
    const SFractionModel sf = sfraction_transform(tri);
    VerifyRow row;
    row.n = n;
    for (std::size_t i = 0; i < omegas.size(); ++i) {
      const Mat rom = ntd_rom(rp.a, rp.f, omegas[i]);
      const Mat td = ntd_tridiag(tri, omegas[i]);
      const Mat sfr = ntd_sfraction(sf, omegas[i]);
      const double e = (rom - full[i]).norm() / full[i].norm();
      const double d1 = (td - rom).norm() / rom.norm();
      const double d2 = (sfr - rom).norm() / rom.norm();
      row.ntd_error = std::max(row.ntd_error, e);
      row.chain_deviation = std::max({row.chain_deviation, d1, d2});
      if (det) det << n << ',' << omegas[i] << ',' << e << ',' << d1 << ',' << d2 << '\n';
    }
    row.interpolation_error = (ntd_rom_z(rp.a, rp.f, -shift) - full_interp).norm() / full_interp.norm();
    rows.push_back(row);
  }

  std::ostringstream os;
  os << "n,max_rel_ntd_error,max_chain_deviation,interpolation_error\n" << std::setprecision(6) << std::scientific;
  for (const auto& r : rows)
    os << r.n << ',' << r.ntd_error << ',' << r.chain_deviation << ',' << r.interpolation_error << '\n';
  if (csv.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(csv);
    if (!f) throw IoError("cannot write " + csv);
    f << os.str();
  }
  return 0;
}

int cmd_export(const std::string& trace, const std::string& out, double t0, double t1) {
  const TraceRecord rec = read_trace(trace);
  const Mat m = normalized_window(rec, t0, t1);
  std::ofstream f(out);
  if (!f) throw IoError("cannot write " + out);
  f << "t";
  for (const Point3& p : rec.receivers) f << ",x" << p[0] << "_y" << p[1] << "_z" << p[2];
  f << '\n' << std::setprecision(10);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) f << (c ? "," : "") << m(r, c);
    f << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"S-fraction multiscale finite-volume wave solver"};
  app.require_subcommand(1);

  std::string config, cache;
  int workers = -1;
  bool serial = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config, "run config (JSON)")->required();
    sub->add_option("--workers", workers, "worker threads (0 = all cores, default from config)");
  };

  CLI::App* off = app.add_subcommand("offline", "build and cache subdomain models");
  add_common(off);
  off->add_option("--cache", cache, "model cache directory");

  CLI::App* on = app.add_subcommand("online", "coupled run from cached models");
  add_common(on);
  on->add_option("--cache", cache, "model cache directory");
  on->add_flag("--serial", serial, "use the serial reference kernels");

  CLI::App* ref = app.add_subcommand("reference", "global fine-grid run");
  add_common(ref);
  ref->add_flag("--serial", serial, "use the serial reference kernels");

  std::string alpha = "0,0,0", csv, detail;
  int n_max = 5, count = 20;
  double wmin = 0.0, wmax = 0.0;
  CLI::App* ver = app.add_subcommand("verify", "NtD equivalence and convergence for one subdomain");
  add_common(ver);
  ver->add_option("--subdomain", alpha, "subdomain index i,j,k");
  ver->add_option("--n-max", n_max, "largest number of Krylov layers")->check(CLI::PositiveNumber);
  ver->add_option("--count", count, "frequencies in the band")->check(CLI::PositiveNumber);
  ver->add_option("--omega-min", wmin, "band start (default 0.1 omega-max)");
  ver->add_option("--omega-max", wmax, "band end (default 2 pi f_max of the source)");
  ver->add_option("--csv", csv, "summary CSV (default stdout)");
  ver->add_option("--detail", detail, "per-frequency CSV");

  std::string trace_a, trace_b;
  CLI::App* cmp = app.add_subcommand("compare", "relative L2 error between two trace files");
  cmp->add_option("reference", trace_a, "reference trace")->required();
  cmp->add_option("candidate", trace_b, "trace to compare")->required();

  std::string plot_in, plot_out;
  double t0 = 0.73, t1 = 8.2;
  CLI::App* exp = app.add_subcommand("export-plot", "per-time normalized CSV for plotting");
  exp->add_option("trace", plot_in, "trace file")->required();
  exp->add_option("--out", plot_out, "CSV output")->required();
  exp->add_option("--t0", t0, "window start");
  exp->add_option("--t1", t1, "window end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*cmp) {
      const CompareReport r = compare_traces(read_trace(trace_a), read_trace(trace_b));
      std::printf("relative L2 error: %.3f%%\n", 100.0 * r.relative_l2);
      std::printf("samples: %d x %d receivers at dt %.6g\n", r.steps, r.receivers, r.dt);
      return 0;
    }
    if (*exp) return cmd_export(plot_in, plot_out, t0, t1);

    RunConfig cfg = parse_config(config);
    if (workers >= 0) cfg.workers = workers;
    const std::string cache_dir = cache.empty() ? cache_directory(cfg) : cache;
    const Backend backend = serial ? Backend::serial : Backend::openmp;

    if (*off) {
      const OfflineReport r = run_offline(cfg, {cache_dir, cfg.workers});
      std::printf("offline: %d subdomains, %d built, %d cache hits, %.2f s\n", r.subdomains, r.built, r.cache_hits,
                  r.seconds);
      return 0;
    }
    if (*on) {
      const OnlineResult r = run_online(cfg, {cache_dir, cfg.workers, backend});
      write_trace(out_path(cfg, ".trc"), r.traces);
      write_metadata(out_path(cfg, ".meta.txt"), r.meta);
      std::printf("online: %d steps at dt %.6g, dt ratio %s, %lld messages -> %s\n",
                  static_cast<int>(r.counters.steps), r.dt, r.meta.find("dt_ratio")->c_str(),
                  static_cast<long long>(r.counters.messages), out_path(cfg, ".trc").c_str());
      return 0;
    }
    if (*ref) {
      const ReferenceResult r = run_reference(cfg, cfg.workers, backend);
      write_trace(out_path(cfg, "_reference.trc"), r.traces);
      write_metadata(out_path(cfg, "_reference.meta.txt"), r.meta);
      std::printf("reference: %d samples at dt %.6g -> %s\n", r.traces.steps, r.dt,
                  out_path(cfg, "_reference.trc").c_str());
      return 0;
    }
    if (*ver) return cmd_verify(cfg, alpha, n_max, count, wmin, wmax, csv, detail);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e);
  }
  return 1;
}
