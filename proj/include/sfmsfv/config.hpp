#pragma once

#include <string>

#include "sfmsfv/grid.hpp"
#include "sfmsfv/reference.hpp"

namespace sfv {

struct RomSpec {
  int m = 1;
  int n = 1;
  double shift = -1.0;  // negative: (2 pi / t_end)^2
};

struct TimeSpec {
  double t_end = 1.0;
  double dt = 0.0;  // 0: cfl_factor * stability limit
  double cfl_factor = 0.9;
  int output_every = 1;
};

// Optional Gaussian initial displacement a exp(-|x - x0|^2 / w^2).
struct InitialPulse {
  bool enabled = false;
  Point3 center{0, 0, 0};
  double width = 0.1;
  double amplitude = 1.0;
};

struct OutputSpec {
  std::string dir = "out";
  std::string name = "run";
  std::string cache_dir = "cache";
};

struct RunConfig {
  DomainSpec domain;
  MediumModel medium;
  RomSpec rom;
  bool has_source = false;
  SourceSpec source;
  ReceiverLine receivers;
  TimeSpec time;
  InitialPulse initial;
  OutputSpec output;
  int workers = 1;

  double shift() const;
  void validate() const;
};

// Strict JSON config: unknown keys are rejected, parse errors carry
// line/column, semantic errors carry the field path.
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig parse_config(const std::string& path);

}  // namespace sfv
