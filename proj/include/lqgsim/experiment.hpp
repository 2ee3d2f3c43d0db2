// Experiment orchestration for the CLI: runs the pipeline selected by an
// ExperimentSpec, persists results as columnar text or JSON, and writes a
// manifest with content hashes of every produced file.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lqgsim/analysis.hpp"
#include "lqgsim/config.hpp"
#include "lqgsim/gaussian.hpp"
#include "lqgsim/presets.hpp"
#include "lqgsim/riccati.hpp"
#include "lqgsim/trajectory.hpp"

namespace lqgsim {

inline constexpr const char* kVersion = "0.1.0";

struct RunResult {
  std::vector<std::string> outputs;  // paths relative to out_dir
  int failure_count = 0;
  std::map<std::string, int> failure_classes;
  double wall_time_s = 0;
};

namespace detail {

inline uint64_t fnv1a64(const std::string& bytes) {
  uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Column-oriented table with one writer for both output formats.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> comments;

  std::string to_csv() const {
    std::ostringstream out;
    for (const auto& c : comments) out << "# " << c << "\n";
    for (size_t i = 0; i < columns.size(); ++i) {
      out << columns[i] << (i + 1 < columns.size() ? "," : "\n");
    }
    for (const auto& row : rows) {
      for (size_t i = 0; i < row.size(); ++i) {
        out << format_double(row[i]) << (i + 1 < row.size() ? "," : "\n");
      }
    }
    return out.str();
  }

  std::string to_json() const {
    nlohmann::json j;
    j["comments"] = comments;
    j["columns"] = columns;
    nlohmann::json data = nlohmann::json::array();
    for (const auto& row : rows) data.push_back(row);
    j["rows"] = data;
    return j.dump(1) + "\n";
  }
};

class OutputWriter {
 public:
  OutputWriter(const std::filesystem::path& dir, OutputFormat format)
      : dir_(dir), format_(format) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  std::string write_table(const std::string& stem, const Table& table) {
    const std::string name = stem + (format_ == OutputFormat::csv ? ".csv" : ".json");
    write_file(name, format_ == OutputFormat::csv ? table.to_csv() : table.to_json());
    return name;
  }

  void write_file(const std::string& name, const std::string& content) {
    const std::filesystem::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
    files_.emplace_back(name, fnv1a64(content));
  }

  const std::vector<std::pair<std::string, uint64_t>>& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  OutputFormat format_;
  std::vector<std::pair<std::string, uint64_t>> files_;
};

inline void append_covariance_columns(Table& table, const std::string& prefix) {
  static const char* kNames[4] = {"x1", "p1", "x2", "p2"};
  for (int r = 0; r < 4; ++r) {
    for (int c = r; c < 4; ++c) {
      table.columns.push_back(prefix + "_" + kNames[r] + kNames[c]);
    }
  }
}

inline void append_covariance_values(std::vector<double>& row, const Mat4& v) {
  for (int r = 0; r < 4; ++r) {
    for (int c = r; c < 4; ++c) row.push_back(v(r, c));
  }
}

}  // namespace detail

namespace detail {

struct SteadyPipeline {
  PeriodicSolution vc;
  GainSchedule gains;       // empty times when unconditional part skipped
  bool has_gains = false;
};

inline SteadyPipeline solve_steady(const ModelConfig& cfg, const Numerics& numerics,
                                   bool with_gains) {
  SteadyPipeline p;
  const double dt = cfg.modulation_period() / numerics.steps_per_period;
  p.vc = periodic_steady_state(cfg, dt, numerics.tol, numerics.max_periods);
  if (with_gains) {
    p.gains = backward_control_riccati(cfg, dt, numerics.tol, numerics.max_periods);
    p.has_gains = true;
  }
  return p;
}

inline Table conditional_period_table(const PeriodicSolution& vc) {
  Table t;
  t.comments = {"periodic conditional covariance over one modulation period",
                "time in units of 1/omega_m"};
  t.columns = {"t", "EN_conditional", "S_plus_db", "S_minus_db"};
  append_covariance_columns(t, "Vc");
  for (size_t i = 0; i < vc.times.size(); ++i) {
    const CovMatrix4 v(vc.covariances[i]);
    const NormalModeBlocks blocks = normal_mode_blocks(v);
    double lo_p = 0, hi_p = 0, lo_m = 0, hi_m = 0;
    eig_sym_2x2(blocks.sigma_plus, lo_p, hi_p);
    eig_sym_2x2(blocks.sigma_minus, lo_m, hi_m);
    std::vector<double> row = {vc.times[i], logarithmic_negativity(v),
                               -10.0 * std::log10(2.0 * lo_p),
                               -10.0 * std::log10(2.0 * lo_m)};
    append_covariance_values(row, vc.covariances[i]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table unconditional_period_table(const UnconditionalPeriodic& uncond) {
  Table t;
  t.comments = {"periodic unconditional covariance V_u = V_c + V_ex"};
  t.columns = {"t", "EN_unconditional"};
  append_covariance_columns(t, "Vu");
  append_covariance_columns(t, "Vex");
  for (size_t i = 0; i < uncond.times.size(); ++i) {
    std::vector<double> row = {uncond.times[i],
                               logarithmic_negativity(CovMatrix4(uncond.v_u[i]))};
    append_covariance_values(row, uncond.v_u[i]);
    append_covariance_values(row, uncond.v_ex[i]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table gain_table(const GainSchedule& gains) {
  Table t;
  t.comments = {"optimal feedback gain K(t) over one modulation period"};
  t.columns = {"t"};
  const auto& first = gains.gains.front();
  for (int r = 0; r < first.rows(); ++r) {
    for (int c = 0; c < 4; ++c) {
      t.columns.push_back("K" + std::to_string(r + 1) + std::to_string(c + 1));
    }
  }
  for (size_t i = 0; i < gains.times.size(); ++i) {
    std::vector<double> row = {gains.times[i]};
    const auto& k = gains.gains[i];
    for (int r = 0; r < k.rows(); ++r) {
      for (int c = 0; c < 4; ++c) row.push_back(k(r, c));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void count_failures(const std::vector<ScanFailure>& failures, RunResult& result) {
  result.failure_count += static_cast<int>(failures.size());
  for (const auto& f : failures) result.failure_classes[f.error_class]++;
}

}  // namespace detail

// Executes the experiment described by spec. Outputs land in spec.out_dir
// together with manifest.json; fatal errors propagate as the library's error
// types for the CLI to translate into exit codes.
inline RunResult run(const ExperimentSpec& spec) {
  const auto t_start = std::chrono::steady_clock::now();
  spec.validate();
  const ModelConfig cfg = spec.effective_model();
  cfg.validate();
  const Numerics& numerics = spec.numerics;
  detail::OutputWriter writer(spec.out_dir, spec.format);
  RunResult result;

  const double dt = cfg.modulation_period() / numerics.steps_per_period;
  const double span = numerics.span_periods * cfg.modulation_period();

  const auto write_scan = [&](const ScanSpec& s) {
    const ScanAxis x = ScanAxis::linspace(s.x_name, s.x_min, s.x_max, s.x_count);
    const ScanAxis y = ScanAxis::linspace(s.y_name, s.y_min, s.y_max, s.y_count);
    const ScanGrid grid =
        scan_2d(cfg, x, y, s.metric, numerics.solver_options(), numerics.threads);
    detail::count_failures(grid.failures, result);

    std::vector<std::vector<std::string>> status(
        static_cast<size_t>(s.y_count),
        std::vector<std::string>(static_cast<size_t>(s.x_count), "ok"));
    for (const auto& f : grid.failures) {
      status[static_cast<size_t>(f.iy)][static_cast<size_t>(f.ix)] = f.error_class;
    }
    std::ostringstream csv;
    csv << "# metric: " << to_string(s.metric) << "\n";
    csv << "# failed cells keep value = nan\n";
    csv << s.x_name << "," << s.y_name << ",value,status\n";
    for (int iy = 0; iy < s.y_count; ++iy) {
      for (int ix = 0; ix < s.x_count; ++ix) {
        csv << detail::format_double(x.values[static_cast<size_t>(ix)]) << ","
            << detail::format_double(y.values[static_cast<size_t>(iy)]) << ","
            << detail::format_double(grid.values(iy, ix)) << ","
            << status[static_cast<size_t>(iy)][static_cast<size_t>(ix)] << "\n";
      }
    }
    const std::string grid_name = spec.format == OutputFormat::csv ? "scan.csv" : "scan.json";
    if (spec.format == OutputFormat::csv) {
      writer.write_file(grid_name, csv.str());
    } else {
      nlohmann::json j;
      j["x"] = {{"name", s.x_name}, {"values", x.values}};
      j["y"] = {{"name", s.y_name}, {"values", y.values}};
      j["metric"] = to_string(s.metric);
      nlohmann::json rows = nlohmann::json::array();
      for (int iy = 0; iy < s.y_count; ++iy) {
        nlohmann::json r = nlohmann::json::array();
        for (int ix = 0; ix < s.x_count; ++ix) {
          if (std::isnan(grid.values(iy, ix))) r.push_back(nullptr);
          else r.push_back(grid.values(iy, ix));
        }
        rows.push_back(r);
      }
      j["values"] = rows;
      writer.write_file(grid_name, j.dump(1) + "\n");
    }
    result.outputs.push_back(grid_name);

    nlohmann::json meta;
    meta["metric"] = to_string(s.metric);
    meta["resolution"] = {s.x_count, s.y_count};
    meta["x"] = {{"name", s.x_name}, {"min", s.x_min}, {"max", s.x_max}};
    meta["y"] = {{"name", s.y_name}, {"min", s.y_min}, {"max", s.y_max}};
    meta["parameters"] = {{"alpha", cfg.alpha},
                          {"Omega_over_omega_m", cfg.omega_mod},
                          {"g_over_omega_m", cfg.g},
                          {"eta", cfg.eta},
                          {"kba_over_omega_x", cfg.kba_ratio},
                          {"kth_over_omega_m", cfg.kth},
                          {"gamma_over_omega_m", cfg.gamma},
                          {"q_over_omega_m", cfg.q},
                          {"feedback", to_string(cfg.strategy)},
                          {"charge_ratio", cfg.charge_ratio}};
    meta["config_hash"] =
        "fnv1a64:" + detail::hex64(detail::fnv1a64(serialize_experiment_spec(spec)));
    meta["computed_cells"] = grid.computed_count();
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : grid.failures) {
      failures.push_back({{"ix", f.ix}, {"iy", f.iy}, {"class", f.error_class}});
    }
    meta["failures"] = failures;
    writer.write_file("scan_meta.json", meta.dump(1) + "\n");
    result.outputs.push_back("scan_meta.json");
  };

  const auto write_series = [&](const SeriesSpec& s) {
    detail::Table t;
    t.comments = {"entanglement time series; time in 1/omega_m",
                  "metric: " + to_string(s.metric)};
    t.columns = {"t", "EN"};
    if (s.compare_unmodulated) t.columns.push_back("EN_unmodulated");

    const auto series_for = [&](const ModelConfig& point) {
      std::vector<std::pair<double, double>> out;
      if (s.metric == Metric::conditional_negativity) {
        const CovTimeSeries cs = integrate_conditional_covariance(
            CovMatrix4::vacuum(), point, span, dt, numerics.sample_stride);
        for (size_t i = 0; i < cs.times.size(); ++i) {
          out.emplace_back(cs.times[i],
                           logarithmic_negativity(CovMatrix4(cs.covariances[i])));
        }
      } else {
        const detail::SteadyPipeline p = detail::solve_steady(point, numerics, true);
        const Mat4 vacuum = kVacuumVariance * Mat4::Identity();
        const ExcessEvolution ex = excess_noise_evolution(
            p.vc, p.gains, point, span, numerics.sample_stride, &vacuum);
        for (size_t i = 0; i < ex.times.size(); ++i) {
          out.emplace_back(ex.times[i], logarithmic_negativity(CovMatrix4(ex.v_u[i])));
        }
      }
      return out;
    };

    const auto modulated = series_for(cfg);
    std::vector<std::pair<double, double>> unmodulated;
    if (s.compare_unmodulated) {
      ModelConfig static_trap = cfg;
      static_trap.alpha = 0.0;
      unmodulated = series_for(static_trap);
    }
    for (size_t i = 0; i < modulated.size(); ++i) {
      std::vector<double> row = {modulated[i].first, modulated[i].second};
      if (s.compare_unmodulated) row.push_back(unmodulated[i].second);
      t.rows.push_back(std::move(row));
    }
    result.outputs.push_back(writer.write_table("series", t));
  };

  const auto write_sweep = [&](const SweepSpec& s) {
    std::vector<double> values;
    for (int i = 0; i < s.count; ++i) {
      values.push_back(s.count == 1 ? s.min
                                    : s.min + (s.max - s.min) * i / (s.count - 1));
    }
    const SqueezingCurves curves = squeezing_vs_param(
        cfg, s.param, values, numerics.solver_options(), numerics.threads);
    detail::count_failures(curves.failures, result);
    detail::Table t;
    t.comments = {"normal-mode squeezing degrees along " + s.param,
                  "failed points keep nan"};
    t.columns = {s.param, "S_plus_db", "S_minus_db", "cross_norm"};
    for (size_t i = 0; i < values.size(); ++i) {
      t.rows.push_back({values[i], curves.s_plus[i], curves.s_minus[i],
                        curves.cross_norm[i]});
    }
    result.outputs.push_back(writer.write_table("squeezing", t));
  };

  switch (spec.mode) {
    case Mode::steady: {
      const bool with_gains = numerics.compute_unconditional && cfg.eta > 0.0;
      const detail::SteadyPipeline p = detail::solve_steady(cfg, numerics, with_gains);
      result.outputs.push_back(
          writer.write_table("steady_conditional", detail::conditional_period_table(p.vc)));
      if (with_gains) {
        const UnconditionalPeriodic uncond = unconditional_steady_state(
            p.vc, p.gains, cfg, numerics.tol, numerics.max_periods);
        result.outputs.push_back(writer.write_table(
            "steady_unconditional", detail::unconditional_period_table(uncond)));
        result.outputs.push_back(writer.write_table("gains", detail::gain_table(p.gains)));
      }
      break;
    }
    case Mode::trajectory: {
      const detail::SteadyPipeline p = detail::solve_steady(cfg, numerics, true);
      TrajectoryOptions opts;
      opts.sample_stride = numerics.sample_stride;
      const TrajectoryRecord rec =
          simulate_closed_loop(cfg, p.vc, p.gains, span, numerics.seed, opts);
      detail::Table t;
      t.comments = {"closed-loop trajectory of the conditional mean",
                    "seed = " + std::to_string(numerics.seed),
                    "dy columns are the measurement record increments over one step"};
      t.columns = {"t", "x1", "p1", "x2", "p2"};
      const int nu = static_cast<int>(rec.controls.front().size());
      for (int i = 0; i < nu; ++i) t.columns.push_back("u" + std::to_string(i + 1));
      t.columns.push_back("dy1");
      t.columns.push_back("dy2");
      for (size_t i = 0; i < rec.times.size(); ++i) {
        std::vector<double> row = {rec.times[i], rec.means[i](0), rec.means[i](1),
                                   rec.means[i](2), rec.means[i](3)};
        for (int c = 0; c < nu; ++c) row.push_back(rec.controls[i](c));
        row.push_back(rec.records[i](0));
        row.push_back(rec.records[i](1));
        t.rows.push_back(std::move(row));
      }
      result.outputs.push_back(writer.write_table("trajectory", t));
      break;
    }
    case Mode::ensemble: {
      const detail::SteadyPipeline p = detail::solve_steady(cfg, numerics, true);
      const EnsembleStatistics stats = ensemble_statistics(
          cfg, p.vc, p.gains, numerics.n_trajectories, span, numerics.seed,
          numerics.checkpoint_stride, numerics.threads);
      detail::Table t;
      t.comments = {"ensemble statistics of the conditional mean",
                    "n_trajectories = " + std::to_string(stats.n_trajectories)};
      t.columns = {"t", "mean_x1", "mean_p1", "mean_x2", "mean_p2",
                   "se_mean_x1", "se_mean_p1", "se_mean_x2", "se_mean_p2"};
      detail::append_covariance_columns(t, "cov");
      detail::append_covariance_columns(t, "se_cov");
      for (size_t i = 0; i < stats.times.size(); ++i) {
        std::vector<double> row = {stats.times[i]};
        for (int r = 0; r < 4; ++r) row.push_back(stats.mean[i](r));
        for (int r = 0; r < 4; ++r) row.push_back(stats.mean_stderr[i](r));
        detail::append_covariance_values(row, stats.covariance[i]);
        detail::append_covariance_values(row, stats.covariance_stderr[i]);
        t.rows.push_back(std::move(row));
      }
      result.outputs.push_back(writer.write_table("ensemble", t));
      break;
    }
    case Mode::scan: {
      write_scan(*spec.scan);
      break;
    }
    case Mode::reproduce: {
      if (spec.scan) write_scan(*spec.scan);
      else if (spec.series) write_series(*spec.series);
      else if (spec.sweep) write_sweep(*spec.sweep);
      else throw ConfigError("reproduce: preset carries no pipeline");
      break;
    }
  }

  const auto t_end = std::chrono::steady_clock::now();
  result.wall_time_s = std::chrono::duration<double>(t_end - t_start).count();

  nlohmann::json manifest;
  manifest["tool"] = "lqgsim";
  manifest["version"] = kVersion;
  manifest["mode"] = to_string(spec.mode);
  if (!spec.preset.empty()) manifest["preset"] = spec.preset;
  manifest["config"] = serialize_experiment_spec(spec);
  manifest["config_hash"] =
      "fnv1a64:" + detail::hex64(detail::fnv1a64(serialize_experiment_spec(spec)));
  manifest["wall_time_s"] = result.wall_time_s;
  manifest["threads"] = numerics.threads;
  manifest["failures"] = {{"count", result.failure_count}};
  for (const auto& [cls, count] : result.failure_classes) {
    manifest["failures"]["classes"][cls] = count;
  }
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& [name, hash] : writer.files()) {
    outputs.push_back({{"path", name}, {"fnv1a64", detail::hex64(hash)}});
  }
  manifest["outputs"] = outputs;
  writer.write_file("manifest.json", manifest.dump(1) + "\n");
  return result;
}

}  // namespace lqgsim
