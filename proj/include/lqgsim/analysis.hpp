// Metrics over covariance solutions and parameter scans: entanglement time
// series, period averages, normal-mode squeezing curves and 2-D grids with
// explicit per-cell failure reporting.
#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lqgsim/common.hpp"
#include "lqgsim/gaussian.hpp"
#include "lqgsim/model.hpp"
#include "lqgsim/riccati.hpp"

namespace lqgsim {

enum class Metric {
  conditional_negativity,
  unconditional_negativity,
  squeezing_plus,
  squeezing_minus,
};

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::conditional_negativity: return "EN_conditional";
    case Metric::unconditional_negativity: return "EN_unconditional";
    case Metric::squeezing_plus: return "S_plus";
    case Metric::squeezing_minus: return "S_minus";
  }
  return "unknown";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "EN_conditional") return Metric::conditional_negativity;
  if (s == "EN_unconditional") return Metric::unconditional_negativity;
  if (s == "S_plus") return Metric::squeezing_plus;
  if (s == "S_minus") return Metric::squeezing_minus;
  throw ValidationError("metric: unknown metric '" + s + "'");
}

// Logarithmic negativity per covariance sample.
inline std::vector<double> entanglement_time_series(const std::vector<Mat4>& covariances) {
  std::vector<double> series;
  series.reserve(covariances.size());
  for (const Mat4& v : covariances) {
    series.push_back(logarithmic_negativity(CovMatrix4(v)));
  }
  return series;
}

// Arithmetic mean over samples that uniformly cover exactly one period.
inline double period_average(const std::vector<double>& one_period) {
  if (one_period.empty()) throw ValidationError("period_average: empty series");
  double sum = 0.0;
  for (double v : one_period) sum += v;
  return sum / static_cast<double>(one_period.size());
}

// Mean over the final full period of a longer uniformly sampled series.
inline double period_average_tail(const std::vector<double>& series,
                                  const std::vector<double>& times, double period) {
  if (series.size() != times.size() || series.size() < 2) {
    throw ValidationError("period_average_tail: need a sampled series");
  }
  const double dt = times[1] - times[0];
  const int per_period = static_cast<int>(std::lround(period / dt));
  if (per_period < 1 || static_cast<size_t>(per_period) > series.size()) {
    throw ValidationError("period_average_tail: series shorter than one period");
  }
  double sum = 0.0;
  for (size_t i = series.size() - static_cast<size_t>(per_period); i < series.size(); ++i) {
    sum += series[i];
  }
  return sum / per_period;
}

struct SqueezingPair {
  double s_plus = 0;
  double s_minus = 0;
  double cross_norm = 0;  // largest inter-mode correlation over the period
};

// Squeezing degree of each normal mode: the period minimum of the smallest
// eigenvalue of its 2x2 covariance block, in dB relative to vacuum.
inline SqueezingPair normal_mode_squeezing(const std::vector<Mat4>& covariances) {
  if (covariances.empty()) throw ValidationError("normal_mode_squeezing: empty series");
  double min_plus = std::numeric_limits<double>::infinity();
  double min_minus = std::numeric_limits<double>::infinity();
  double cross = 0.0;
  for (const Mat4& v : covariances) {
    const NormalModeBlocks blocks = normal_mode_blocks(CovMatrix4(v));
    double lo = 0, hi = 0;
    detail::eig_sym_2x2(blocks.sigma_plus, lo, hi);
    min_plus = std::min(min_plus, lo);
    detail::eig_sym_2x2(blocks.sigma_minus, lo, hi);
    min_minus = std::min(min_minus, lo);
    cross = std::max(cross, blocks.cross.cwiseAbs().maxCoeff());
  }
  if (min_plus <= 0.0 || min_minus <= 0.0) {
    throw ValidationError("normal_mode_squeezing: non-positive normal-mode block");
  }
  return {-10.0 * std::log10(2.0 * min_plus), -10.0 * std::log10(2.0 * min_minus), cross};
}

// Solver settings shared by the steady-state pipelines.
struct SolverOptions {
  int steps_per_period = 2000;
  double tol = 1e-8;
  int max_periods = 500;

  double dt_for(const ModelConfig& cfg) const {
    return cfg.modulation_period() / steps_per_period;
  }
};

// Warm-start slots carried between neighboring scan cells.
struct WarmState {
  std::optional<Mat4> v_conditional;
  std::optional<Mat4> sigma_control;
};

// Full pipeline for one parameter point. Conditional metrics need only the
// filter Riccati flow; unconditional ones add the LQR pass and the
// excess-noise steady state.
inline double evaluate_metric(const ModelConfig& cfg, Metric metric,
                              const SolverOptions& opts, WarmState* warm = nullptr) {
  const double dt = opts.dt_for(cfg);
  const Mat4* vc_seed =
      warm && warm->v_conditional ? &*warm->v_conditional : nullptr;
  PeriodicSolution vc = periodic_steady_state(cfg, dt, opts.tol, opts.max_periods, vc_seed);
  if (warm) warm->v_conditional = vc.covariances.front();

  switch (metric) {
    case Metric::conditional_negativity:
      return period_average(entanglement_time_series(vc.covariances));
    case Metric::squeezing_plus:
      return normal_mode_squeezing(vc.covariances).s_plus;
    case Metric::squeezing_minus:
      return normal_mode_squeezing(vc.covariances).s_minus;
    case Metric::unconditional_negativity: {
      const Mat4* sigma_seed =
          warm && warm->sigma_control ? &*warm->sigma_control : nullptr;
      GainSchedule gains =
          backward_control_riccati(cfg, dt, opts.tol, opts.max_periods, sigma_seed);
      UnconditionalPeriodic uncond =
          unconditional_steady_state(vc, gains, cfg, opts.tol, opts.max_periods);
      return period_average(entanglement_time_series(uncond.v_u));
    }
  }
  throw ValidationError("evaluate_metric: unknown metric");
}

inline void set_model_param(ModelConfig& cfg, const std::string& name, double value) {
  if (name == "alpha") cfg.alpha = value;
  else if (name == "Omega_over_omega_m") cfg.omega_mod = value;
  else if (name == "g_over_omega_m") cfg.g = value;
  else if (name == "eta") cfg.eta = value;
  else if (name == "kba_over_omega_x") cfg.kba_ratio = value;
  else if (name == "kth_over_omega_m") cfg.kth = value;
  else if (name == "gamma_over_omega_m") cfg.gamma = value;
  else if (name == "q_over_omega_m") cfg.q = value;
  else if (name == "p_over_omega_m") cfg.p_scale = value;
  else if (name == "charge_ratio") cfg.charge_ratio = value;
  else throw ValidationError("scan parameter: unknown name '" + name + "'");
}

struct ScanAxis {
  std::string name;
  std::vector<double> values;

  static ScanAxis linspace(const std::string& name, double lo, double hi, int count) {
    if (count < 1) throw ValidationError("scan axis '" + name + "': count must be >= 1");
    ScanAxis axis{name, {}};
    axis.values.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
      axis.values.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
    }
    return axis;
  }
};

struct ScanFailure {
  int ix = 0;
  int iy = 0;
  std::string error_class;
  std::string message;
};

// A grid of one scalar metric. Failed cells keep NaN and are listed in
// failures; they are never filled with fabricated numbers.
struct ScanGrid {
  ScanAxis x;
  ScanAxis y;
  Metric metric = Metric::conditional_negativity;
  Eigen::MatrixXd values;  // row = y index, col = x index
  std::vector<ScanFailure> failures;

  int computed_count() const {
    return static_cast<int>(x.values.size() * y.values.size() - failures.size());
  }
};

namespace detail {

inline std::string classify_error(const Error& e) {
  if (dynamic_cast<const InstabilityError*>(&e)) return "instability";
  if (dynamic_cast<const ControllabilityError*>(&e)) return "controllability";
  if (dynamic_cast<const ConvergenceError*>(&e)) return "non-convergence";
  if (dynamic_cast<const PhysicalityError*>(&e)) return "physicality";
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  return "error";
}

// Static row-per-task pool: rows are claimed atomically but each row is
// evaluated sequentially (warm starts run along x), so results do not depend
// on the thread count.
inline void parallel_rows(int n_rows, int threads, const std::function<void(int)>& row_fn) {
  int n_workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  n_workers = std::max(1, std::min(n_workers, n_rows));
  if (n_workers == 1) {
    for (int r = 0; r < n_rows; ++r) row_fn(r);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= n_rows) return;
        try {
          row_fn(r);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

// Evaluates the metric over the full (x, y) grid. Rows run in parallel; the
// previous cell in a row seeds the next one. Cell errors become recorded
// failures, never aborts.
inline ScanGrid scan_2d(const ModelConfig& cfg_template, const ScanAxis& x,
                        const ScanAxis& y, Metric metric,
                        const SolverOptions& opts = {}, int threads = 0) {
  ScanGrid grid;
  grid.x = x;
  grid.y = y;
  grid.metric = metric;
  const int nx = static_cast<int>(x.values.size());
  const int ny = static_cast<int>(y.values.size());
  grid.values = Eigen::MatrixXd::Constant(ny, nx, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::vector<ScanFailure>> row_failures(static_cast<size_t>(ny));

  detail::parallel_rows(ny, threads, [&](int iy) {
    WarmState warm;
    for (int ix = 0; ix < nx; ++ix) {
      ModelConfig cfg = cfg_template;
      set_model_param(cfg, x.name, x.values[static_cast<size_t>(ix)]);
      set_model_param(cfg, y.name, y.values[static_cast<size_t>(iy)]);
      try {
        grid.values(iy, ix) = evaluate_metric(cfg, metric, opts, &warm);
      } catch (const Error& e) {
        row_failures[static_cast<size_t>(iy)].push_back(
            {ix, iy, detail::classify_error(e), e.what()});
        warm = WarmState{};  // do not seed neighbors from a failed cell
      }
    }
  });

  for (auto& rf : row_failures) {
    grid.failures.insert(grid.failures.end(), rf.begin(), rf.end());
  }
  return grid;
}

struct SqueezingCurves {
  std::string param;
  std::vector<double> values;
  std::vector<double> s_plus;
  std::vector<double> s_minus;
  std::vector<double> cross_norm;
  std::vector<ScanFailure> failures;
};

// S+ and S- of the periodic conditional state along one swept parameter.
inline SqueezingCurves squeezing_vs_param(const ModelConfig& cfg_template,
                                          const std::string& param,
                                          const std::vector<double>& values,
                                          const SolverOptions& opts = {},
                                          int threads = 0) {
  SqueezingCurves curves;
  curves.param = param;
  curves.values = values;
  const int n = static_cast<int>(values.size());
  curves.s_plus.assign(static_cast<size_t>(n), std::numeric_limits<double>::quiet_NaN());
  curves.s_minus.assign(static_cast<size_t>(n), std::numeric_limits<double>::quiet_NaN());
  curves.cross_norm.assign(static_cast<size_t>(n), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::vector<ScanFailure>> point_failures(static_cast<size_t>(n));

  detail::parallel_rows(n, threads, [&](int i) {
    ModelConfig cfg = cfg_template;
    set_model_param(cfg, param, values[static_cast<size_t>(i)]);
    try {
      PeriodicSolution vc =
          periodic_steady_state(cfg, opts.dt_for(cfg), opts.tol, opts.max_periods);
      const SqueezingPair pair = normal_mode_squeezing(vc.covariances);
      curves.s_plus[static_cast<size_t>(i)] = pair.s_plus;
      curves.s_minus[static_cast<size_t>(i)] = pair.s_minus;
      curves.cross_norm[static_cast<size_t>(i)] = pair.cross_norm;
    } catch (const Error& e) {
      point_failures[static_cast<size_t>(i)].push_back(
          {i, 0, detail::classify_error(e), e.what()});
    }
  });

  for (auto& pf : point_failures) {
    curves.failures.insert(curves.failures.end(), pf.begin(), pf.end());
  }
  return curves;
}

}  // namespace lqgsim
