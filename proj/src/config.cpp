#include "sfmsfv/config.hpp"

#include <json.hpp>

#include "sfmsfv/rom.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace sfv {
namespace {

using json = nlohmann::json;

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!ok.count(it.key())) throw ConfigError(join(it.key()) + ": unknown key");
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section sub(const char* key) const {
    if (!has(key)) fail(key, "required section missing");
    return Section(j_.at(key), join(key));
  }

  const json& raw(const char* key) const { return j_.at(key); }
  std::string path(const std::string& key) const { return join(key); }

  double number(const char* key) const {
    need(key);
    const json& v = j_.at(key);
    if (!v.is_number()) fail(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(key, "must be finite");
    return d;
  }
  double number(const char* key, double def) const { return has(key) ? number(key) : def; }

  int integer(const char* key) const {
    need(key);
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    return v.get<int>();
  }
  int integer(const char* key, int def) const { return has(key) ? integer(key) : def; }

  bool boolean(const char* key, bool def) const {
    if (!has(key)) return def;
    if (!j_.at(key).is_boolean()) fail(key, "expected true or false");
    return j_.at(key).get<bool>();
  }

  std::string text(const char* key, const std::string& def) const {
    if (!has(key)) return def;
    if (!j_.at(key).is_string()) fail(key, "expected a string");
    return j_.at(key).get<std::string>();
  }

  Point3 point(const char* key) const {
    need(key);
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 3) fail(key, "expected an array of 3 numbers");
    Point3 p;
    for (int a = 0; a < 3; ++a) {
      if (!v[a].is_number()) fail(key, "expected an array of 3 numbers");
      p[a] = v[a].get<double>();
    }
    return p;
  }

  Index3 triple(const char* key) const {
    need(key);
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 3) fail(key, "expected an array of 3 integers");
    Index3 p;
    for (int a = 0; a < 3; ++a) {
      if (!v[a].is_number_integer()) fail(key, "expected an array of 3 integers");
      p[a] = v[a].get<int>();
    }
    return p;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(join(key) + ": " + what);
  }

 private:
  void need(const char* key) const {
    if (!has(key)) fail(key, "required field missing");
  }
  std::string join(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
};

int parse_axis(const Section& s, const char* key) {
  if (!s.has(key)) return 0;
  const json& v = s.raw(key);
  if (v.is_string()) {
    const std::string a = v.get<std::string>();
    if (a == "x") return 0;
    if (a == "y") return 1;
    if (a == "z") return 2;
  } else if (v.is_number_integer()) {
    const int a = v.get<int>();
    if (a >= 0 && a < 3) return a;
  }
  s.fail(key, "expected \"x\", \"y\", \"z\" or 0..2");
}

void line_column(const std::string& text, std::size_t byte, std::size_t& line, std::size_t& col) {
  line = 1;
  col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
}

}  // namespace

double RunConfig::shift() const { return rom.shift >= 0.0 ? rom.shift : default_shift(time.t_end); }

void RunConfig::validate() const {
  domain.validate();
  medium.validate();
  if (rom.m < 1) throw ConfigError("rom.m: must be >= 1");
  const int k = static_cast<int>(std::lround(std::sqrt(double(rom.m))));
  if (k * k != rom.m) throw ConfigError("rom.m: must be a perfect square");
  if (rom.n < 1) throw ConfigError("rom.n: must be >= 1");
  if (!(time.t_end > 0.0)) throw ConfigError("time.t_end: must be positive");
  if (time.dt < 0.0) throw ConfigError("time.dt: must be non-negative");
  if (!(time.cfl_factor > 0.0) || time.cfl_factor > 1.0) throw ConfigError("time.cfl_factor: must be in (0, 1]");
  if (time.output_every < 1) throw ConfigError("time.output_every: must be >= 1");
  if (workers < 0) throw ConfigError("workers: must be >= 0 (0 = all cores)");
  auto inside = [&](const Point3& p) {
    for (int a = 0; a < 3; ++a)
      if (p[a] < 0.0 || p[a] > domain.extents[a]) return false;
    return true;
  };
  if (has_source) {
    if (!inside(source.position)) throw ConfigError("source.position: outside the domain");
    if (!(source.wavelength > 0.0)) throw ConfigError("source.wavelength: must be positive");
    if (!(source.c_ref > 0.0)) throw ConfigError("source.c_ref: must be positive");
  }
  if (receivers.count < 1) throw ConfigError("receivers.count: must be >= 1");
  for (const Point3& p : receivers.points())
    if (!inside(p)) throw ConfigError("receivers: line leaves the domain");
  if (initial.enabled && !(initial.width > 0.0)) throw ConfigError("initial.width: must be positive");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line, col;
    line_column(text, e.byte > 0 ? e.byte - 1 : 0, line, col);
    std::ostringstream os;
    os << origin << ":" << line << ":" << col << ": parse error: " << e.what();
    throw ConfigError(os.str());
  }

  RunConfig cfg;
  const Section top(root, "");
  top.allow({"domain", "medium", "rom", "source", "receivers", "time", "initial", "output", "workers"});

  {
    const Section d = top.sub("domain");
    d.allow({"extents", "subdomains", "nodes", "outer_bc", "sponge", "edge_ownership", "exterior_faces"});
    cfg.domain.extents = d.point("extents");
    cfg.domain.subdomain_counts = d.triple("subdomains");
    cfg.domain.nodes_per_subdomain = d.triple("nodes");
    const std::string bc = d.text("outer_bc", "reflecting");
    if (bc == "reflecting")
      cfg.domain.outer_bc = OuterBc::reflecting;
    else if (bc == "sponge")
      cfg.domain.outer_bc = OuterBc::sponge;
    else
      d.fail("outer_bc", "expected \"reflecting\" or \"sponge\"");
    if (d.has("sponge")) {
      const Section s = d.sub("sponge");
      s.allow({"width", "strength"});
      cfg.domain.sponge.width = s.number("width");
      cfg.domain.sponge.strength = s.number("strength");
    }
    const std::string own = d.text("edge_ownership", "axis_priority");
    if (own == "axis_priority")
      cfg.domain.edge_ownership = EdgeOwnership::axis_priority;
    else if (own == "exclude")
      cfg.domain.edge_ownership = EdgeOwnership::exclude;
    else
      d.fail("edge_ownership", "expected \"axis_priority\" or \"exclude\"");
    cfg.domain.exterior_faces = d.boolean("exterior_faces", true);
  }

  if (top.has("medium")) {
    const Section m = top.sub("medium");
    m.allow({"background_c", "regions"});
    cfg.medium.background_c = m.number("background_c", 1.0);
    if (m.has("regions")) {
      const json& arr = m.raw("regions");
      if (!arr.is_array()) m.fail("regions", "expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const Section r(arr[i], m.path("regions[" + std::to_string(i) + "]"));
        r.allow({"lo", "hi", "c"});
        MediumRegion reg;
        reg.box.lo = r.point("lo");
        reg.box.hi = r.point("hi");
        reg.c = r.number("c");
        if (!(reg.c > 0.0)) r.fail("c", "sound speed must be positive");
        cfg.medium.regions.push_back(reg);
      }
    }
    if (!(cfg.medium.background_c > 0.0)) m.fail("background_c", "sound speed must be positive");
  }

  {
    const Section r = top.sub("rom");
    r.allow({"m", "n", "shift"});
    cfg.rom.m = r.integer("m");
    cfg.rom.n = r.integer("n");
    cfg.rom.shift = r.number("shift", -1.0);
  }

  if (top.has("source")) {
    const Section s = top.sub("source");
    s.allow({"position", "wavelength", "c_ref", "amplitude", "pulse", "delay", "enabled"});
    cfg.has_source = s.boolean("enabled", true);
    cfg.source.position = s.point("position");
    cfg.source.wavelength = s.number("wavelength", 0.78);
    cfg.source.c_ref = s.number("c_ref", 1.0);
    cfg.source.amplitude = s.number("amplitude", 1.0);
    cfg.source.delay = s.number("delay", -1.0);
    const std::string p = s.text("pulse", "ricker");
    if (p == "ricker")
      cfg.source.pulse = PulseKind::ricker;
    else if (p == "gaussian_derivative")
      cfg.source.pulse = PulseKind::gaussian_derivative;
    else
      s.fail("pulse", "expected \"ricker\" or \"gaussian_derivative\"");
  }

  {
    const Section r = top.sub("receivers");
    r.allow({"origin", "axis", "length", "count"});
    cfg.receivers.origin = r.point("origin");
    cfg.receivers.axis = parse_axis(r, "axis");
    cfg.receivers.length = r.number("length", 0.0);
    cfg.receivers.count = r.integer("count", 1);
  }

  {
    const Section t = top.sub("time");
    t.allow({"t_end", "dt", "cfl_factor", "output_every"});
    cfg.time.t_end = t.number("t_end");
    cfg.time.dt = t.number("dt", 0.0);
    cfg.time.cfl_factor = t.number("cfl_factor", 0.9);
    cfg.time.output_every = t.integer("output_every", 1);
  }

  if (top.has("initial")) {
    const Section i = top.sub("initial");
    i.allow({"center", "width", "amplitude"});
    cfg.initial.enabled = true;
    cfg.initial.center = i.point("center");
    cfg.initial.width = i.number("width");
    cfg.initial.amplitude = i.number("amplitude", 1.0);
  }

  if (top.has("output")) {
    const Section o = top.sub("output");
    o.allow({"dir", "name", "cache"});
    cfg.output.dir = o.text("dir", cfg.output.dir);
    cfg.output.name = o.text("name", cfg.output.name);
    cfg.output.cache_dir = o.text("cache", cfg.output.cache_dir);
  }

  cfg.workers = top.integer("workers", 1);
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace sfv
