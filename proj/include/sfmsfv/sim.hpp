#pragma once

#include <string>
#include <vector>

#include "sfmsfv/config.hpp"
#include "sfmsfv/io.hpp"
#include "sfmsfv/stepper.hpp"

namespace sfv {

// Worker count with 0 meaning all cores.
int resolve_workers(int requested);

// Cache directory: SFMSFV_CACHE overrides the config value.
std::string cache_directory(const RunConfig& cfg);

struct OfflineOptions {
  std::string cache_dir;
  int workers = 1;
};

struct OfflineReport {
  int subdomains = 0;
  int cache_hits = 0;
  int built = 0;  // models factorized and written in this run
  std::vector<std::string> files;
  double seconds = 0.0;
};

// Builds and caches every subdomain model. Failures are collected over all
// subdomains and reported together as a NumericalError.
OfflineReport run_offline(const RunConfig& cfg, const OfflineOptions& options);

struct OnlineOptions {
  std::string cache_dir;
  int workers = 1;
  Backend backend = Backend::openmp;
};

struct OnlineResult {
  TraceRecord traces;
  RunMetadata meta;
  MessageCounters counters;
  double dt = 0.0;
  double energy_drift = 0.0;  // relative, only meaningful without a source
};

// Loads the cached models (IoError listing any that are missing) and runs
// the coupled stepper to t_end.
OnlineResult run_online(const RunConfig& cfg, const OnlineOptions& options);

struct ReferenceResult {
  TraceRecord traces;
  RunMetadata meta;
  double dt = 0.0;
};

ReferenceResult run_reference(const RunConfig& cfg, int workers = 1, Backend backend = Backend::openmp);

// Models built in memory without the cache (tests, small runs).
CoupledModel build_coupled_model(const RunConfig& cfg, const DomainPartition& partition, const Vec& c,
                                 int workers = 1);

// Physical initial displacement from the config's pulse (zero if disabled).
Vec initial_displacement(const RunConfig& cfg, const GridGeometry& grid);

struct CompareReport {
  double relative_l2 = 0.0;
  double dt = 0.0;  // common sample spacing
  int steps = 0;
  int receivers = 0;
};

// |a - b| / |a| after resampling both records onto the coarser time grid.
CompareReport compare_traces(const TraceRecord& a, const TraceRecord& b);

// Linear interpolation onto t = k dt, k < steps.
TraceRecord resample(const TraceRecord& rec, double dt, int steps);

// Rows t in [t0, t1] of the record divided by the trapezoid integral of the
// trace along the receiver line at that time. Column 0 holds t.
Mat normalized_window(const TraceRecord& rec, double t0, double t1);

}  // namespace sfv
