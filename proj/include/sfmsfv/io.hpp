#pragma once

#include <cstdint>
#include <string>
#include <vector>
#include <utility>
#include <vector>

#include "sfmsfv/reference.hpp"
#include "sfmsfv/rom.hpp"

namespace sfv {

// Trace file: "SFWV", u32 version, u32 receivers, u32 steps, f64 dt,
// receivers x 3 f64 coordinates, steps x receivers f64 samples. Little endian.
void write_trace(const std::string& path, const TraceRecord& rec);
TraceRecord read_trace(const std::string& path);

// ROM file, see README for the layout. The key is stored and checked on read.
void write_rom(const std::string& path, const SubdomainRom& rom, std::uint64_t key);
// rows: if given, only these local nodes' rows of VQ are kept (sorted, unique).
SubdomainRom read_rom(const std::string& path, std::uint64_t expected_key, const std::vector<int>* rows = nullptr);
// Cheap header check used for cache hits.
bool rom_file_matches(const std::string& path, std::uint64_t key);

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

// Content hash of everything a subdomain model depends on.
std::uint64_t rom_cache_key(const SubdomainOperator& op, const RomParams& params);
std::string rom_file_name(std::uint64_t key);

// Ordered key = value report.
struct RunMetadata {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  const std::string* find(const std::string& key) const;
};

void write_metadata(const std::string& path, const RunMetadata& meta);

void ensure_directory(const std::string& dir);

}  // namespace sfv
