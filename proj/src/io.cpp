#include "sfmsfv/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace sfv {
namespace {

constexpr std::uint32_t kTraceVersion = 1;
constexpr std::uint32_t kRomVersion = 1;

class Writer {
 public:
  void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void matrix(const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string path) : buf_(std::move(data)), path_(std::move(path)) {}

  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) throw IoError(path_ + ": truncated file");
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  Mat matrix(Eigen::Index rows, Eigen::Index cols) {
    need(static_cast<std::size_t>(rows * cols) * 8);
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
    return m;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write through a temporary so readers never see partial files.
void dump(const std::string& path, const std::string& data) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) ensure_directory(target.parent_path().string());
  std::ostringstream tmp_name;
  tmp_name << path << ".tmp" << std::hex << fnv1a(data.data(), std::min<std::size_t>(data.size(), 4096));
  const std::string tmp = tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

}  // namespace

void ensure_directory(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_trace(const std::string& path, const TraceRecord& rec) {
  const std::size_t nr = rec.receivers.size();
  if (rec.samples.size() != nr * static_cast<std::size_t>(rec.steps))
    throw IoError("trace record has inconsistent sample count");
  Writer w;
  w.bytes("SFWV", 4);
  w.u32(kTraceVersion);
  w.u32(static_cast<std::uint32_t>(nr));
  w.u32(static_cast<std::uint32_t>(rec.steps));
  w.f64(rec.dt);
  for (const Point3& p : rec.receivers)
    for (double x : p) w.f64(x);
  for (double s : rec.samples) w.f64(s);
  dump(path, w.data());
}

TraceRecord read_trace(const std::string& path) {
  Reader r(slurp(path), path);
  if (r.bytes(4) != "SFWV") throw IoError(path + ": not a trace file");
  if (r.u32() != kTraceVersion) throw IoError(path + ": unsupported trace version");
  TraceRecord rec;
  const std::uint32_t nr = r.u32();
  rec.steps = static_cast<int>(r.u32());
  rec.dt = r.f64();
  r.need((static_cast<std::size_t>(nr) * 3 + static_cast<std::size_t>(nr) * rec.steps) * 8);
  rec.receivers.resize(nr);
  for (auto& p : rec.receivers)
    for (double& x : p) x = r.f64();
  rec.samples.resize(static_cast<std::size_t>(nr) * rec.steps);
  for (double& s : rec.samples) s = r.f64();
  if (!r.done()) throw IoError(path + ": trailing bytes after declared payload");
  return rec;
}

void write_rom(const std::string& path, const SubdomainRom& rom, std::uint64_t key) {
  if (!rom.full_basis()) throw IoError(path + ": refusing to write a model with a partial basis");
  Writer w;
  w.bytes("SFRM", 4);
  w.u32(kRomVersion);
  w.u64(key);
  w.i32(rom.id);
  for (int a : rom.alpha) w.i32(a);
  w.i32(rom.m);
  w.i32(rom.n);
  w.f64(rom.shift);
  w.u32(static_cast<std::uint32_t>(rom.block_ranks.size()));
  for (int r : rom.block_ranks) w.i32(r);
  w.u32(static_cast<std::uint32_t>(rom.face_blocks.size()));
  for (const FaceBlock& fb : rom.face_blocks) {
    w.i32(static_cast<int>(fb.face));
    w.i32(fb.offset);
    w.i32(fb.m);
    w.i32(fb.neighbor);
  }
  w.u32(static_cast<std::uint32_t>(rom.layers()));
  w.u32(static_cast<std::uint32_t>(rom.width()));
  for (int j = 0; j < rom.layers(); ++j) {
    w.matrix(rom.sfrac.gamma[j]);
    w.matrix(rom.sfrac.gamma_hat[j]);
    w.matrix(rom.sfrac.g[j]);
  }
  w.u32(static_cast<std::uint32_t>(rom.vq.rows()));
  w.u32(static_cast<std::uint32_t>(rom.vq.cols()));
  w.matrix(rom.vq);
  for (Eigen::Index i = 0; i < rom.c.size(); ++i) w.f64(rom.c[i]);
  for (Eigen::Index i = 0; i < rom.mass.size(); ++i) w.f64(rom.mass[i]);
  dump(path, w.data());
}

SubdomainRom read_rom(const std::string& path, std::uint64_t expected_key, const std::vector<int>* rows) {
  Reader r(slurp(path), path);
  if (r.bytes(4) != "SFRM") throw IoError(path + ": not a model file");
  if (r.u32() != kRomVersion) throw IoError(path + ": unsupported model version");
  if (r.u64() != expected_key) throw IoError(path + ": model key does not match its content hash");
  SubdomainRom rom;
  rom.id = r.i32();
  for (int& a : rom.alpha) a = r.i32();
  rom.m = r.i32();
  rom.n = r.i32();
  rom.shift = r.f64();
  rom.block_ranks.resize(r.u32());
  for (int& v : rom.block_ranks) v = r.i32();
  rom.face_blocks.resize(r.u32());
  for (FaceBlock& fb : rom.face_blocks) {
    const int f = r.i32();
    if (f < 0 || f > 5) throw IoError(path + ": bad face id");
    fb.face = static_cast<Face>(f);
    fb.offset = r.i32();
    fb.m = r.i32();
    fb.neighbor = r.i32();
  }
  const std::uint32_t L = r.u32(), p = r.u32();
  for (std::uint32_t j = 0; j < L; ++j) {
    rom.sfrac.gamma.push_back(r.matrix(p, p));
    rom.sfrac.gamma_hat.push_back(r.matrix(p, p));
    rom.sfrac.g.push_back(r.matrix(p, p));
  }
  const std::uint32_t N = r.u32(), K = r.u32();
  if (K != L * p) throw IoError(path + ": inconsistent reduced size");
  if (rows) {
    rom.vq.resize(static_cast<Eigen::Index>(rows->size()), K);
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < rows->size(); ++i) {
      const int row = (*rows)[i];
      if (row < static_cast<int>(next) || row >= static_cast<int>(N)) throw IoError(path + ": bad basis row request");
      r.skip(static_cast<std::size_t>(row - next) * K * 8);
      rom.vq.row(static_cast<Eigen::Index>(i)) = r.matrix(1, K);
      next = row + 1;
    }
    r.skip(static_cast<std::size_t>(N - next) * K * 8);
    rom.vq_rows = *rows;
    rom.basis_complete = false;
  } else {
    rom.vq = r.matrix(N, K);
  }
  rom.c = r.matrix(N, 1);
  rom.mass = r.matrix(N, 1);
  if (!r.done()) throw IoError(path + ": trailing bytes after declared payload");
  return rom;
}

bool rom_file_matches(const std::string& path, std::uint64_t key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char head[16];
  in.read(head, 16);
  if (in.gcount() != 16) return false;
  Reader r(std::string(head, 16), path);
  return r.bytes(4) == "SFRM" && r.u32() == kRomVersion && r.u64() == key;
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t rom_cache_key(const SubdomainOperator& op, const RomParams& params) {
  Writer w;
  w.bytes("sfmsfv-rom", 10);
  w.u32(kRomVersion);
  w.i32(op.id);
  for (int a : op.alpha) w.i32(a);
  for (int d : op.dims) w.i32(d);
  for (double h : op.h) w.f64(h);
  const SpMat& a = op.matrix;
  for (Eigen::Index i = 0; i <= a.outerSize(); ++i) w.i32(a.outerIndexPtr()[i]);
  for (Eigen::Index i = 0; i < a.nonZeros(); ++i) {
    w.i32(a.innerIndexPtr()[i]);
    w.f64(a.valuePtr()[i]);
  }
  for (Eigen::Index i = 0; i < op.c.size(); ++i) w.f64(op.c[i]);
  for (const FaceNodes& fn : op.faces) {
    w.i32(fn.active);
    w.i32(fn.interface);
    w.i32(fn.neighbor);
    w.i32(fn.d1);
    w.i32(fn.d2);
    for (int n : fn.nodes) w.i32(n);
  }
  w.i32(params.m);
  w.i32(params.n);
  w.f64(params.shift);
  return fnv1a(w.data().data(), w.data().size());
}

std::string rom_file_name(std::uint64_t key) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << key << ".rom";
  return os.str();
}

void RunMetadata::set(const std::string& key, const std::string& value) {
  for (auto& e : entries)
    if (e.first == key) {
      e.second = value;
      return;
    }
  entries.emplace_back(key, value);
}

void RunMetadata::set(const std::string& key, double value) {
  std::ostringstream os;
  os << std::setprecision(17) << value;
  set(key, os.str());
}

void RunMetadata::set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }

const std::string* RunMetadata::find(const std::string& key) const {
  for (const auto& e : entries)
    if (e.first == key) return &e.second;
  return nullptr;
}

void write_metadata(const std::string& path, const RunMetadata& meta) {
  std::ostringstream os;
  for (const auto& e : meta.entries) os << e.first << " = " << e.second << '\n';
  dump(path, os.str());
}

}  // namespace sfv
