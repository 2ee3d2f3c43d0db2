// Flat key/value experiment configuration: parsing with line-accurate
// diagnostics, canonical serialization that round-trips exactly, and the
// ExperimentSpec that drives the CLI. Keys carry their units explicitly
// (g_over_omega_m, physical.radius_m, ...).
#pragma once

#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lqgsim/analysis.hpp"
#include "lqgsim/common.hpp"
#include "lqgsim/model.hpp"

namespace lqgsim {

enum class Mode { steady, trajectory, ensemble, scan, reproduce };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::steady: return "steady";
    case Mode::trajectory: return "trajectory";
    case Mode::ensemble: return "ensemble";
    case Mode::scan: return "scan";
    case Mode::reproduce: return "reproduce";
  }
  return "unknown";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "steady") return Mode::steady;
  if (s == "trajectory") return Mode::trajectory;
  if (s == "ensemble") return Mode::ensemble;
  if (s == "scan") return Mode::scan;
  if (s == "reproduce") return Mode::reproduce;
  throw ConfigError("mode: must be one of steady|trajectory|ensemble|scan|reproduce, got '" + s + "'");
}

enum class OutputFormat { csv, json };

struct Numerics {
  int steps_per_period = 2000;
  double tol = 1e-8;
  int max_periods = 500;
  double span_periods = 40.0;
  int n_trajectories = 2000;
  uint64_t seed = 1;
  int threads = 0;
  int sample_stride = 40;
  int checkpoint_stride = 500;
  bool compute_unconditional = true;

  void validate() const {
    if (steps_per_period < 16) throw ConfigError("steps_per_period: must be >= 16");
    if (!(tol > 0.0)) throw ConfigError("tol: must be > 0");
    if (max_periods < 2) throw ConfigError("max_periods: must be >= 2");
    if (!(span_periods > 0.0)) throw ConfigError("span_periods: must be > 0");
    if (n_trajectories < 2) throw ConfigError("n_trajectories: must be >= 2");
    if (threads < 0) throw ConfigError("threads: must be >= 0");
    if (sample_stride < 1) throw ConfigError("sample_stride: must be >= 1");
    if (checkpoint_stride < 1) throw ConfigError("checkpoint_stride: must be >= 1");
  }

  SolverOptions solver_options() const { return {steps_per_period, tol, max_periods}; }
};

struct ScanSpec {
  Metric metric = Metric::conditional_negativity;
  std::string x_name = "g_over_omega_m";
  double x_min = -0.3, x_max = 0.3;
  int x_count = 41;
  std::string y_name = "eta";
  double y_min = 0.0, y_max = 1.0;
  int y_count = 41;
};

struct SeriesSpec {
  Metric metric = Metric::conditional_negativity;
  bool compare_unmodulated = true;
};

struct SweepSpec {
  std::string param = "g_over_omega_m";
  double min = 0.0, max = 0.5;
  int count = 51;
};

struct ExperimentSpec {
  Mode mode = Mode::steady;
  std::string preset;  // reproduce target, empty otherwise
  ModelConfig model;
  bool use_physical = false;
  PhysicalParams physical;
  Numerics numerics;
  std::optional<ScanSpec> scan;
  std::optional<SeriesSpec> series;
  std::optional<SweepSpec> sweep;
  std::string out_dir = "out";
  OutputFormat format = OutputFormat::csv;

  // Model used by the engines: derived from SI inputs when requested.
  ModelConfig effective_model() const {
    if (!use_physical) return model;
    ModelConfig derived = derive_physical(physical).config;
    derived.alpha = model.alpha;
    derived.omega_mod = model.omega_mod;
    derived.eta = model.eta;
    derived.q = model.q;
    derived.p_scale = model.p_scale;
    derived.strategy = model.strategy;
    return derived;
  }

  void validate() const {
    model.validate();
    if (use_physical) physical.validate();
    numerics.validate();
    if (mode == Mode::scan && !scan) throw ConfigError("scan.*: required for mode = scan");
    if (mode == Mode::reproduce && preset.empty()) {
      throw ConfigError("preset: required for mode = reproduce");
    }
    if (scan) {
      if (scan->x_count < 1 || scan->y_count < 1) {
        throw ConfigError("scan.x_count / scan.y_count: must be >= 1");
      }
    }
    if (sweep && sweep->count < 1) throw ConfigError("sweep.count: must be >= 1");
  }
};

namespace detail {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string format_bool(bool b) { return b ? "true" : "false"; }

struct KeyValueFile {
  std::map<std::string, std::pair<std::string, int>> entries;  // key -> (value, line)

  static KeyValueFile parse(const std::string& text) {
    KeyValueFile kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto strip = [](std::string s) {
        const size_t b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const size_t e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = strip(line);
      if (line.empty()) continue;
      const size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      const std::string key = strip(line.substr(0, eq));
      const std::string value = strip(line.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("line " + std::to_string(line_no) + ": empty key");
      }
      if (kv.entries.count(key)) {
        throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      }
      kv.entries[key] = {value, line_no};
    }
    return kv;
  }
};

class KeyReader {
 public:
  explicit KeyReader(const KeyValueFile& kv) : kv_(kv) {}

  bool has(const std::string& key) const { return kv_.entries.count(key) > 0; }

  std::string raw(const std::string& key) {
    consumed_.insert(key);
    return kv_.entries.at(key).first;
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& [value, line] = kv_.entries.at(key);
    consumed_.insert(key);
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0') {
      throw ConfigError("line " + std::to_string(line) + ": " + key +
                        ": expected a number, got '" + value + "'");
    }
    return v;
  }

  int integer(const std::string& key, int fallback) {
    const double v = number(key, static_cast<double>(fallback));
    if (v != static_cast<double>(static_cast<long long>(v))) {
      throw ConfigError(key + ": expected an integer");
    }
    return static_cast<int>(v);
  }

  uint64_t unsigned_integer(const std::string& key, uint64_t fallback) {
    if (!has(key)) return fallback;
    const auto& [value, line] = kv_.entries.at(key);
    consumed_.insert(key);
    char* end = nullptr;
    const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0') {
      throw ConfigError("line " + std::to_string(line) + ": " + key +
                        ": expected a nonnegative integer, got '" + value + "'");
    }
    return v;
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    return raw(key);
  }

  void reject_unconsumed() const {
    for (const auto& [key, entry] : kv_.entries) {
      if (!consumed_.count(key)) {
        throw ConfigError("line " + std::to_string(entry.second) + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  const KeyValueFile& kv_;
  std::set<std::string> consumed_;
};

}  // namespace detail

inline ExperimentSpec parse_experiment_spec(const std::string& text) {
  const detail::KeyValueFile kv = detail::KeyValueFile::parse(text);
  detail::KeyReader reader(kv);
  ExperimentSpec spec;

  spec.mode = parse_mode(reader.text("mode", "steady"));
  spec.preset = reader.text("preset", "");

  ModelConfig& m = spec.model;
  m.alpha = reader.number("alpha", m.alpha);
  m.omega_mod = reader.number("Omega_over_omega_m", m.omega_mod);
  m.g = reader.number("g_over_omega_m", m.g);
  m.eta = reader.number("eta", m.eta);
  m.kba_ratio = reader.number("kba_over_omega_x", m.kba_ratio);
  m.kth = reader.number("kth_over_omega_m", m.kth);
  m.gamma = reader.number("gamma_over_omega_m", m.gamma);
  m.q = reader.number("q_over_omega_m", m.q);
  m.p_scale = reader.number("p_over_omega_m", m.p_scale);
  m.charge_ratio = reader.number("charge_ratio", m.charge_ratio);
  try {
    m.strategy = parse_feedback_strategy(reader.text("feedback", to_string(m.strategy)));
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }

  spec.use_physical = reader.boolean("use_physical", false);
  PhysicalParams& p = spec.physical;
  p.radius_m = reader.number("physical.radius_m", p.radius_m);
  p.density_kg_per_m3 = reader.number("physical.density_kg_per_m3", p.density_kg_per_m3);
  p.charge1_e = reader.number("physical.charge1_e", p.charge1_e);
  p.charge2_e = reader.number("physical.charge2_e", p.charge2_e);
  p.separation_m = reader.number("physical.separation_m", p.separation_m);
  p.omega_m_rad_per_s = reader.number("physical.omega_m_rad_per_s", p.omega_m_rad_per_s);
  p.temperature_k = reader.number("physical.temperature_K", p.temperature_k);
  p.kba_ratio = reader.number("physical.kba_over_omega_x", p.kba_ratio);
  p.gamma_ratio = reader.number("physical.gamma_over_omega_m", p.gamma_ratio);
  if (reader.has("physical.kth_over_omega_m")) {
    p.kth_ratio = reader.number("physical.kth_over_omega_m", 0.0);
  }

  Numerics& n = spec.numerics;
  n.steps_per_period = reader.integer("steps_per_period", n.steps_per_period);
  n.tol = reader.number("tol", n.tol);
  n.max_periods = reader.integer("max_periods", n.max_periods);
  n.span_periods = reader.number("span_periods", n.span_periods);
  n.n_trajectories = reader.integer("n_trajectories", n.n_trajectories);
  n.seed = reader.unsigned_integer("seed", n.seed);
  n.threads = reader.integer("threads", n.threads);
  n.sample_stride = reader.integer("sample_stride", n.sample_stride);
  n.checkpoint_stride = reader.integer("checkpoint_stride", n.checkpoint_stride);
  n.compute_unconditional = reader.boolean("compute_unconditional", n.compute_unconditional);

  if (reader.has("scan.metric") || spec.mode == Mode::scan) {
    ScanSpec s;
    try {
      s.metric = parse_metric(reader.text("scan.metric", to_string(s.metric)));
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    s.x_name = reader.text("scan.x", s.x_name);
    s.x_min = reader.number("scan.x_min", s.x_min);
    s.x_max = reader.number("scan.x_max", s.x_max);
    s.x_count = reader.integer("scan.x_count", s.x_count);
    s.y_name = reader.text("scan.y", s.y_name);
    s.y_min = reader.number("scan.y_min", s.y_min);
    s.y_max = reader.number("scan.y_max", s.y_max);
    s.y_count = reader.integer("scan.y_count", s.y_count);
    spec.scan = s;
  }

  if (reader.has("series.metric")) {
    SeriesSpec s;
    try {
      s.metric = parse_metric(reader.text("series.metric", to_string(s.metric)));
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    s.compare_unmodulated = reader.boolean("series.compare_unmodulated", s.compare_unmodulated);
    spec.series = s;
  }

  if (reader.has("sweep.param")) {
    SweepSpec s;
    s.param = reader.text("sweep.param", s.param);
    s.min = reader.number("sweep.min", s.min);
    s.max = reader.number("sweep.max", s.max);
    s.count = reader.integer("sweep.count", s.count);
    spec.sweep = s;
  }

  spec.out_dir = reader.text("out_dir", spec.out_dir);
  const std::string fmt = reader.text("format", "csv");
  if (fmt == "csv") spec.format = OutputFormat::csv;
  else if (fmt == "json") spec.format = OutputFormat::json;
  else throw ConfigError("format: must be csv or json, got '" + fmt + "'");

  reader.reject_unconsumed();
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

inline std::string serialize_experiment_spec(const ExperimentSpec& spec) {
  using detail::format_bool;
  using detail::format_double;
  std::ostringstream out;
  out << "mode = " << to_string(spec.mode) << "\n";
  if (!spec.preset.empty()) out << "preset = " << spec.preset << "\n";
  out << "\n# model (dimensionless, omega_m units)\n";
  const ModelConfig& m = spec.model;
  out << "alpha = " << format_double(m.alpha) << "\n";
  out << "Omega_over_omega_m = " << format_double(m.omega_mod) << "\n";
  out << "g_over_omega_m = " << format_double(m.g) << "\n";
  out << "eta = " << format_double(m.eta) << "\n";
  out << "kba_over_omega_x = " << format_double(m.kba_ratio) << "\n";
  out << "kth_over_omega_m = " << format_double(m.kth) << "\n";
  out << "gamma_over_omega_m = " << format_double(m.gamma) << "\n";
  out << "q_over_omega_m = " << format_double(m.q) << "\n";
  out << "p_over_omega_m = " << format_double(m.p_scale) << "\n";
  out << "feedback = " << to_string(m.strategy) << "\n";
  out << "charge_ratio = " << format_double(m.charge_ratio) << "\n";
  if (spec.use_physical) {
    const PhysicalParams& p = spec.physical;
    out << "\n# physical inputs (SI)\n";
    out << "use_physical = true\n";
    out << "physical.radius_m = " << format_double(p.radius_m) << "\n";
    out << "physical.density_kg_per_m3 = " << format_double(p.density_kg_per_m3) << "\n";
    out << "physical.charge1_e = " << format_double(p.charge1_e) << "\n";
    out << "physical.charge2_e = " << format_double(p.charge2_e) << "\n";
    out << "physical.separation_m = " << format_double(p.separation_m) << "\n";
    out << "physical.omega_m_rad_per_s = " << format_double(p.omega_m_rad_per_s) << "\n";
    out << "physical.temperature_K = " << format_double(p.temperature_k) << "\n";
    out << "physical.kba_over_omega_x = " << format_double(p.kba_ratio) << "\n";
    out << "physical.gamma_over_omega_m = " << format_double(p.gamma_ratio) << "\n";
    if (p.kth_ratio) {
      out << "physical.kth_over_omega_m = " << format_double(*p.kth_ratio) << "\n";
    }
  }
  const Numerics& n = spec.numerics;
  out << "\n# numerics\n";
  out << "steps_per_period = " << n.steps_per_period << "\n";
  out << "tol = " << format_double(n.tol) << "\n";
  out << "max_periods = " << n.max_periods << "\n";
  out << "span_periods = " << format_double(n.span_periods) << "\n";
  out << "n_trajectories = " << n.n_trajectories << "\n";
  out << "seed = " << n.seed << "\n";
  out << "threads = " << n.threads << "\n";
  out << "sample_stride = " << n.sample_stride << "\n";
  out << "checkpoint_stride = " << n.checkpoint_stride << "\n";
  out << "compute_unconditional = " << format_bool(n.compute_unconditional) << "\n";
  if (spec.scan) {
    const ScanSpec& s = *spec.scan;
    out << "\n# scan\n";
    out << "scan.metric = " << to_string(s.metric) << "\n";
    out << "scan.x = " << s.x_name << "\n";
    out << "scan.x_min = " << format_double(s.x_min) << "\n";
    out << "scan.x_max = " << format_double(s.x_max) << "\n";
    out << "scan.x_count = " << s.x_count << "\n";
    out << "scan.y = " << s.y_name << "\n";
    out << "scan.y_min = " << format_double(s.y_min) << "\n";
    out << "scan.y_max = " << format_double(s.y_max) << "\n";
    out << "scan.y_count = " << s.y_count << "\n";
  }
  if (spec.series) {
    out << "\n# series\n";
    out << "series.metric = " << to_string(spec.series->metric) << "\n";
    out << "series.compare_unmodulated = " << format_bool(spec.series->compare_unmodulated)
        << "\n";
  }
  if (spec.sweep) {
    out << "\n# sweep\n";
    out << "sweep.param = " << spec.sweep->param << "\n";
    out << "sweep.min = " << format_double(spec.sweep->min) << "\n";
    out << "sweep.max = " << format_double(spec.sweep->max) << "\n";
    out << "sweep.count = " << spec.sweep->count << "\n";
  }
  out << "\n# output\n";
  out << "out_dir = " << spec.out_dir << "\n";
  out << "format = " << (spec.format == OutputFormat::csv ? "csv" : "json") << "\n";
  return out.str();
}

}  // namespace lqgsim
