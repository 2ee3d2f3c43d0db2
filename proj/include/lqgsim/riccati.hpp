// Deterministic covariance flows: the conditional Riccati equation, its
// periodic steady state, the backward LQR Riccati pass, the excess-noise
// Lyapunov flow and a stability probe. All integrators are fixed-step
// classical RK4 with symmetrization after every step.
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lqgsim/common.hpp"
#include "lqgsim/gaussian.hpp"
#include "lqgsim/model.hpp"

namespace lqgsim {

inline constexpr double kDivergenceThreshold = 1e12;
// Upper bound on the RK4 step, in units of 1/omega_m.
inline constexpr double kMaxStep = 1e-3 * 2.0 * kPi;
// Physicality tolerance applied to integrator output samples.
inline constexpr double kSamplePhysicalityTol = 1e-6;

struct CovTimeSeries {
  std::vector<double> times;
  std::vector<Mat4> covariances;
};

// One modulation period of a converged periodic covariance, sampled
// uniformly at times[k] = k * period / n for k = 0 .. n-1.
struct PeriodicSolution {
  std::vector<double> times;
  std::vector<Mat4> covariances;
  double period = 0;
  bool converged = false;
  double residual = 0;  // sup-norm distance between the last two periods
  int periods = 0;

  int samples_per_period() const { return static_cast<int>(times.size()); }
  double dt() const { return period / static_cast<double>(times.size()); }
};

// Optimal feedback gain over one modulation period, on the same grid as the
// PeriodicSolution it pairs with. Each gain is (n_controls x 4);
// cost_to_go holds the periodic Sigma(t) the gains were derived from.
struct GainSchedule {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> gains;
  std::vector<Mat4> cost_to_go;
  double period = 0;
  int periods = 0;

  double dt() const { return period / static_cast<double>(times.size()); }
};

struct ExcessEvolution {
  std::vector<double> times;
  std::vector<Mat4> v_ex;
  std::vector<Mat4> v_u;
};

struct UnconditionalPeriodic {
  std::vector<double> times;
  std::vector<Mat4> v_ex;
  std::vector<Mat4> v_u;
  double period = 0;
  bool converged = false;
  double residual = 0;
  int periods = 0;
};

struct StabilityReport {
  bool stable = true;
  double blow_up_time = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// dV/dt = A V + V A^T + N - 4 V C C^T V, coefficients at time t.
// C C^T = eta K_ba(t) diag(1,0,1,0), so the innovation term reduces to rank-2
// outer products of the position columns of the (symmetric) covariance.
inline Mat4 conditional_rhs(double t, const Mat4& v, const ModelConfig& cfg) {
  const double wx = omega_x(t, cfg);
  const Mat4 a = drift_from_omega_x(wx, cfg);
  Mat4 out = a * v + v * a.transpose();
  const double diffusion = cfg.kba_ratio * wx + cfg.kth;
  out(1, 1) += diffusion;
  out(3, 3) += diffusion;
  const double meas = 4.0 * cfg.eta * cfg.kba_ratio * wx;
  if (meas != 0.0) {
    out.noalias() -= meas * (v.col(0) * v.col(0).transpose());
    out.noalias() -= meas * (v.col(2) * v.col(2).transpose());
  }
  return out;
}

inline void rk4_conditional_step(double t, double h, Mat4& v, const ModelConfig& cfg) {
  const Mat4 k1 = conditional_rhs(t, v, cfg);
  const Mat4 k2 = conditional_rhs(t + 0.5 * h, v + (0.5 * h) * k1, cfg);
  const Mat4 k3 = conditional_rhs(t + 0.5 * h, v + (0.5 * h) * k2, cfg);
  const Mat4 k4 = conditional_rhs(t + h, v + h * k3, cfg);
  v += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
  symmetrize(v);
}

inline double sup_norm(const Mat4& m) { return m.cwiseAbs().maxCoeff(); }

inline void check_divergence(const Mat4& v, double t) {
  if (!(sup_norm(v) < kDivergenceThreshold)) {
    throw InstabilityError(
        "covariance flow diverged at t = " + std::to_string(t), t);
  }
}

inline void check_sample_physical(const Mat4& v, double t) {
  // Past this norm the determinant of a squeezed covariance carries no
  // significant digits; such states are handled by the divergence monitor.
  if (sup_norm(v) > 1e5) return;
  const double nu = min_symplectic_closed_form(v);
  if (!(nu >= kVacuumVariance - kSamplePhysicalityTol)) {
    throw PhysicalityError(
        "covariance sample at t = " + std::to_string(t) +
            " violates the uncertainty bound (nu_min = " + std::to_string(nu) + ")",
        t);
  }
}

// Grid size for one modulation period: honors the requested step but never
// exceeds the global step bound.
inline int steps_for_period(double period, double dt) {
  if (!(dt > 0.0)) throw ValidationError("dt: must be > 0");
  int n = static_cast<int>(std::lround(period / dt));
  n = std::max(n, 16);
  n = std::max(n, static_cast<int>(std::ceil(period / kMaxStep)));
  return n;
}

}  // namespace detail

// Integrates the conditional covariance from V0 over [0, t_span], storing
// every sample_stride-th step (the initial state included). Samples are
// checked against the uncertainty bound; divergence raises InstabilityError.
inline CovTimeSeries integrate_conditional_covariance(const CovMatrix4& v0,
                                                      const ModelConfig& cfg,
                                                      double t_span, double dt,
                                                      int sample_stride = 1) {
  cfg.validate();
  if (!(dt > 0.0) || dt > kMaxStep) {
    throw ValidationError("dt: must be in (0, " + std::to_string(kMaxStep) + "]");
  }
  if (!(t_span > 0.0)) throw ValidationError("t_span: must be > 0");
  if (sample_stride < 1) throw ValidationError("sample_stride: must be >= 1");
  if (!is_physical(v0, 1e-9)) throw ValidationError("V0: initial covariance is unphysical");

  const int steps = static_cast<int>(std::ceil(t_span / dt));
  Mat4 v = v0.matrix();
  CovTimeSeries series;
  series.times.reserve(static_cast<size_t>(steps / sample_stride) + 2);
  series.covariances.reserve(series.times.capacity());
  for (int j = 0; j <= steps; ++j) {
    const double t = j * dt;
    if (j % sample_stride == 0 || j == steps) {
      detail::check_divergence(v, t);
      detail::check_sample_physical(v, t);
      series.times.push_back(t);
      series.covariances.push_back(v);
    } else if (j % 64 == 0) {
      detail::check_divergence(v, t);
    }
    if (j < steps) detail::rk4_conditional_step(t, dt, v, cfg);
  }
  return series;
}

// Integrates the conditional Riccati flow from vacuum until the covariance
// sampled one modulation period apart agrees to tol in sup norm. Returns the
// converged period. Non-convergence with a shrinking residual raises
// ConvergenceError; a growing solution raises InstabilityError.
inline PeriodicSolution periodic_steady_state(const ModelConfig& cfg, double dt,
                                              double tol = 1e-8,
                                              int max_periods = 500,
                                              const Mat4* warm_start = nullptr) {
  cfg.validate();
  if (!(tol > 0.0)) throw ValidationError("tol: must be > 0");
  if (max_periods < 2) throw ValidationError("max_periods: must be >= 2");

  const double period = cfg.modulation_period();
  const int n = detail::steps_for_period(period, dt);
  const double h = period / n;

  Mat4 v = warm_start ? *warm_start : (kVacuumVariance * Mat4::Identity()).eval();
  std::vector<Mat4> cur(static_cast<size_t>(n));
  std::vector<Mat4> prev(static_cast<size_t>(n));
  bool have_prev = false;
  double residual = std::numeric_limits<double>::infinity();
  const double norm0 = detail::sup_norm(v);

  for (int p = 0; p < max_periods; ++p) {
    for (int k = 0; k < n; ++k) {
      cur[static_cast<size_t>(k)] = v;
      const double t = p * period + k * h;
      if (k % 64 == 0) detail::check_divergence(v, t);
      detail::rk4_conditional_step(t, h, v, cfg);
    }
    detail::check_divergence(v, (p + 1) * period);
    if (have_prev) {
      residual = 0.0;
      for (int k = 0; k < n; ++k) {
        residual = std::max(residual,
                            detail::sup_norm(cur[static_cast<size_t>(k)] -
                                             prev[static_cast<size_t>(k)]));
      }
      if (residual < tol) {
        PeriodicSolution sol;
        sol.period = period;
        sol.converged = true;
        sol.residual = residual;
        sol.periods = p + 1;
        sol.times.resize(static_cast<size_t>(n));
        for (int k = 0; k < n; ++k) sol.times[static_cast<size_t>(k)] = k * h;
        sol.covariances = cur;
        for (int k = 0; k < n; ++k) {
          detail::check_sample_physical(sol.covariances[static_cast<size_t>(k)],
                                        sol.times[static_cast<size_t>(k)]);
        }
        return sol;
      }
    }
    std::swap(prev, cur);
    have_prev = true;
  }

  // Distinguish runaway growth from slow convergence: if the solution grew
  // substantially, integrate on and compare the recent growth rate with the
  // average one. Unbounded (e.g. linear heating) flows keep pace; saturating
  // flows stall.
  const double norm_end = detail::sup_norm(v);
  if (norm_end > 10.0 * std::max(norm0, 1.0)) {
    const int probe_periods = std::min(max_periods, 200);
    for (int p = 0; p < probe_periods; ++p) {
      for (int k = 0; k < n; ++k) {
        const double t = (max_periods + p) * period + k * h;
        if (k % 64 == 0) detail::check_divergence(v, t);
        detail::rk4_conditional_step(t, h, v, cfg);
      }
    }
    const double average_rate = (norm_end - norm0) / max_periods;
    if (detail::sup_norm(v) - norm_end >= 0.5 * average_rate * probe_periods) {
      throw InstabilityError(
          "covariance grows without bound (residual " + std::to_string(residual) +
              " after " + std::to_string(max_periods) + " periods)",
          max_periods * period);
    }
  }
  throw ConvergenceError("periodic steady state not reached in " +
                             std::to_string(max_periods) +
                             " periods (residual " + std::to_string(residual) + ")",
                         residual);
}

namespace detail {

// d Sigma / ds = A^T Sigma + Sigma A + P - Sigma B Q^-1 B^T Sigma,
// with s the time-to-go, so the drift is evaluated at t = -s.
inline Mat4 control_rhs(double s, const Mat4& sigma, const ModelConfig& cfg,
                        const Mat4& p_cost, const Mat4& effort) {
  const Mat4 a = drift_from_omega_x(omega_x(-s, cfg), cfg);
  Mat4 out = a.transpose() * sigma + sigma * a + p_cost;
  out.noalias() -= sigma * effort * sigma;
  return out;
}

inline void rk4_control_step(double s, double h, Mat4& sigma, const ModelConfig& cfg,
                             const Mat4& p_cost, const Mat4& effort) {
  const Mat4 k1 = control_rhs(s, sigma, cfg, p_cost, effort);
  const Mat4 k2 = control_rhs(s + 0.5 * h, sigma + (0.5 * h) * k1, cfg, p_cost, effort);
  const Mat4 k3 = control_rhs(s + 0.5 * h, sigma + (0.5 * h) * k2, cfg, p_cost, effort);
  const Mat4 k4 = control_rhs(s + h, sigma + h * k3, cfg, p_cost, effort);
  sigma += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
  symmetrize(sigma);
}

}  // namespace detail

// Solves the backward LQR Riccati equation from a zero terminal condition
// until the cost-to-go matrix is periodic, then returns the optimal gain
// K(t) = Q^-1 B^T Sigma(t) over one period on the standard grid. A diverging
// Sigma is reported as a controllability failure.
inline GainSchedule backward_control_riccati(const ModelConfig& cfg, double dt,
                                             double tol = 1e-8,
                                             int max_periods = 500,
                                             const Mat4* warm_start = nullptr) {
  cfg.validate();
  if (!(tol > 0.0)) throw ValidationError("tol: must be > 0");
  const Eigen::MatrixXd b = feedback_matrix(cfg);
  const Eigen::MatrixXd q = control_cost(cfg);
  const Mat4 effort = b * q.inverse() * b.transpose();
  const Mat4 p_cost = state_cost(cfg);

  const double period = cfg.modulation_period();
  const int n = detail::steps_for_period(period, dt);
  const double h = period / n;

  Mat4 sigma = warm_start ? *warm_start : Mat4::Zero().eval();
  std::vector<Mat4> cur(static_cast<size_t>(n));
  std::vector<Mat4> prev(static_cast<size_t>(n));
  bool have_prev = false;
  double residual = std::numeric_limits<double>::infinity();
  std::vector<double> residual_history;
  bool done = false;

  for (int p = 0; p < max_periods && !done; ++p) {
    for (int k = 0; k < n; ++k) {
      cur[static_cast<size_t>(k)] = sigma;
      const double s = p * period + k * h;
      if (k % 64 == 0 && !(detail::sup_norm(sigma) < kDivergenceThreshold)) {
        throw ControllabilityError(
            "LQR Riccati flow diverged; the feedback matrix cannot stabilize the system");
      }
      detail::rk4_control_step(s, h, sigma, cfg, p_cost, effort);
    }
    if (have_prev) {
      residual = 0.0;
      for (int k = 0; k < n; ++k) {
        residual = std::max(residual,
                            detail::sup_norm(cur[static_cast<size_t>(k)] -
                                             prev[static_cast<size_t>(k)]));
      }
      residual_history.push_back(residual);
      if (residual < tol) done = true;
    }
    if (!done) {
      std::swap(prev, cur);
      have_prev = true;
    }
    if (done) {
      GainSchedule schedule;
      schedule.period = period;
      schedule.periods = p + 1;
      schedule.times.resize(static_cast<size_t>(n));
      schedule.gains.resize(static_cast<size_t>(n));
      schedule.cost_to_go.resize(static_cast<size_t>(n));
      const Eigen::MatrixXd q_inv_bt = q.inverse() * b.transpose();
      for (int k = 0; k < n; ++k) {
        // Sample s = j h of the converged period sits at t = -j h, i.e. at
        // grid index (n - j) mod n of the forward period.
        const int j = (n - k) % n;
        schedule.times[static_cast<size_t>(k)] = k * h;
        schedule.cost_to_go[static_cast<size_t>(k)] = cur[static_cast<size_t>(j)];
        schedule.gains[static_cast<size_t>(k)] = q_inv_bt * cur[static_cast<size_t>(j)];
      }
      return schedule;
    }
  }

  // A cost-to-go residual that never shrank while Sigma grew marks an
  // uncontrollable direction; a shrinking residual is just a short budget.
  if (detail::sup_norm(sigma) > 10.0 && residual_history.size() >= 4) {
    const double mid = residual_history[residual_history.size() / 2];
    if (residual >= 0.5 * mid) {
      throw ControllabilityError(
          "LQR Riccati flow grows without periodic limit (residual " +
          std::to_string(residual) + "); the system is effectively uncontrollable");
    }
  }
  throw ConvergenceError("backward Riccati pass not periodic after " +
                             std::to_string(max_periods) + " periods (residual " +
                             std::to_string(residual) + ")",
                         residual);
}

// Stationary gain from the time-averaged drift: omega_x is replaced by its
// period mean 1 + alpha^2/2 and the constant-coefficient backward Riccati
// equation is integrated to its fixed point. Provided for comparison against
// the periodic schedule; returned on the standard grid with equal samples.
inline GainSchedule stationary_gain(const ModelConfig& cfg, double dt,
                                    double tol = 1e-8, int max_periods = 2000) {
  cfg.validate();
  const Eigen::MatrixXd b = feedback_matrix(cfg);
  const Eigen::MatrixXd q = control_cost(cfg);
  const Mat4 effort = b * q.inverse() * b.transpose();
  const Mat4 p_cost = state_cost(cfg);
  const double wx_mean = 1.0 + cfg.alpha * cfg.alpha / 2.0;
  const Mat4 a = detail::drift_from_omega_x(wx_mean, cfg);

  const double period = cfg.modulation_period();
  const int n = detail::steps_for_period(period, dt);
  const double h = period / n;

  Mat4 sigma = Mat4::Zero();
  double residual = std::numeric_limits<double>::infinity();
  for (int p = 0; p < max_periods; ++p) {
    const Mat4 before = sigma;
    for (int k = 0; k < n; ++k) {
      if (!(detail::sup_norm(sigma) < kDivergenceThreshold)) {
        throw ControllabilityError(
            "stationary LQR Riccati flow diverged; the feedback matrix cannot "
            "stabilize the system");
      }
      const Mat4 k1 = (a.transpose() * sigma + sigma * a + p_cost - sigma * effort * sigma).eval();
      const Mat4 s2 = sigma + (0.5 * h) * k1;
      const Mat4 k2 = (a.transpose() * s2 + s2 * a + p_cost - s2 * effort * s2).eval();
      const Mat4 s3 = sigma + (0.5 * h) * k2;
      const Mat4 k3 = (a.transpose() * s3 + s3 * a + p_cost - s3 * effort * s3).eval();
      const Mat4 s4 = sigma + h * k3;
      const Mat4 k4 = (a.transpose() * s4 + s4 * a + p_cost - s4 * effort * s4).eval();
      sigma += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
      symmetrize(sigma);
    }
    residual = detail::sup_norm(sigma - before);
    if (residual < tol) {
      GainSchedule schedule;
      schedule.period = period;
      schedule.periods = p + 1;
      const Eigen::MatrixXd gain = q.inverse() * b.transpose() * sigma;
      schedule.times.resize(static_cast<size_t>(n));
      schedule.gains.assign(static_cast<size_t>(n), gain);
      schedule.cost_to_go.assign(static_cast<size_t>(n), sigma);
      for (int k = 0; k < n; ++k) schedule.times[static_cast<size_t>(k)] = k * h;
      return schedule;
    }
  }
  throw ConvergenceError("stationary LQR gain did not settle (residual " +
                             std::to_string(residual) + ")",
                         residual);
}

namespace detail {

// Piecewise-linear, periodic lookup of B K(t) on the schedule grid.
struct ClosedLoopGain {
  std::vector<Mat4> bk;
  double period = 0;
  double h = 0;

  ClosedLoopGain(const ModelConfig& cfg, const GainSchedule& gains) {
    const Eigen::MatrixXd b = feedback_matrix(cfg);
    bk.reserve(gains.gains.size());
    for (const auto& k : gains.gains) bk.push_back(b * k);
    period = gains.period;
    h = gains.dt();
  }

  Mat4 at(double t) const {
    const int n = static_cast<int>(bk.size());
    double phase = std::fmod(t, period);
    if (phase < 0) phase += period;
    const double x = phase / h;
    int i0 = static_cast<int>(x);
    if (i0 >= n) i0 = n - 1;
    const double w = x - i0;
    const int i1 = (i0 + 1) % n;
    return (1.0 - w) * bk[static_cast<size_t>(i0)] + w * bk[static_cast<size_t>(i1)];
  }
};

// d V_ex / dt = (A - B K) V_ex + V_ex (A - B K)^T + 4 V_c C C^T V_c.
// The source term is the diffusion of the conditional mean driven by the
// measurement innovations.
inline Mat4 excess_rhs(double t, const Mat4& vc, const Mat4& vex,
                       const ModelConfig& cfg, const ClosedLoopGain& loop) {
  const double wx = omega_x(t, cfg);
  const Mat4 f = drift_from_omega_x(wx, cfg) - loop.at(t);
  Mat4 out = f * vex + vex * f.transpose();
  const double meas = 4.0 * cfg.eta * cfg.kba_ratio * wx;
  if (meas != 0.0) {
    out.noalias() += meas * (vc.col(0) * vc.col(0).transpose());
    out.noalias() += meas * (vc.col(2) * vc.col(2).transpose());
  }
  return out;
}

// One RK4 step of the augmented (V_c, V_ex) system, so every stage sees a
// consistent conditional covariance without grid interpolation.
inline void rk4_excess_step(double t, double h, Mat4& vc, Mat4& vex,
                            const ModelConfig& cfg, const ClosedLoopGain& loop) {
  const Mat4 k1c = conditional_rhs(t, vc, cfg);
  const Mat4 k1e = excess_rhs(t, vc, vex, cfg, loop);
  const Mat4 vc2 = vc + (0.5 * h) * k1c;
  const Mat4 k2c = conditional_rhs(t + 0.5 * h, vc2, cfg);
  const Mat4 k2e = excess_rhs(t + 0.5 * h, vc2, vex + (0.5 * h) * k1e, cfg, loop);
  const Mat4 vc3 = vc + (0.5 * h) * k2c;
  const Mat4 k3c = conditional_rhs(t + 0.5 * h, vc3, cfg);
  const Mat4 k3e = excess_rhs(t + 0.5 * h, vc3, vex + (0.5 * h) * k2e, cfg, loop);
  const Mat4 vc4 = vc + h * k3c;
  const Mat4 k4c = conditional_rhs(t + h, vc4, cfg);
  const Mat4 k4e = excess_rhs(t + h, vc4, vex + h * k3e, cfg, loop);
  vc += (h / 6.0) * (k1c + 2.0 * (k2c + k3c) + k4c);
  vex += (h / 6.0) * (k1e + 2.0 * (k2e + k3e) + k4e);
  symmetrize(vc);
  symmetrize(vex);
}

inline void require_shared_grid(const PeriodicSolution& vc, const GainSchedule& gains) {
  if (vc.times.size() != gains.times.size() ||
      std::abs(vc.period - gains.period) > 1e-12 * std::max(1.0, vc.period)) {
    throw ValidationError(
        "conditional solution and gain schedule must share one sampling grid");
  }
}

inline void check_excess_sample(const Mat4& vex, double t) {
  Eigen::SelfAdjointEigenSolver<Mat4> solver(vex, Eigen::EigenvaluesOnly);
  if (!(solver.eigenvalues()(0) >= -1e-9)) {
    throw PhysicalityError(
        "excess noise matrix at t = " + std::to_string(t) +
            " is not positive semidefinite (lambda_min = " +
            std::to_string(solver.eigenvalues()(0)) + ")",
        t);
  }
}

}  // namespace detail

// Transient of the excess-noise matrix from V_ex(0) = 0 over [0, t_span],
// with V_c started from the periodic solution (or from vc0 when given, e.g.
// vacuum for a cold-start protocol). Returns V_ex and V_u = V_c + V_ex on
// the shared grid.
inline ExcessEvolution excess_noise_evolution(const PeriodicSolution& vc,
                                              const GainSchedule& gains,
                                              const ModelConfig& cfg, double t_span,
                                              int sample_stride = 1,
                                              const Mat4* vc0 = nullptr) {
  cfg.validate();
  detail::require_shared_grid(vc, gains);
  if (!(t_span > 0.0)) throw ValidationError("t_span: must be > 0");
  if (sample_stride < 1) throw ValidationError("sample_stride: must be >= 1");

  const detail::ClosedLoopGain loop(cfg, gains);
  const double h = vc.dt();
  const int steps = static_cast<int>(std::ceil(t_span / h));

  Mat4 vc_state = vc0 ? *vc0 : vc.covariances.front();
  Mat4 vex = Mat4::Zero();
  ExcessEvolution out;
  for (int j = 0; j <= steps; ++j) {
    const double t = j * h;
    if (j % sample_stride == 0 || j == steps) {
      detail::check_divergence(vex, t);
      detail::check_excess_sample(vex, t);
      out.times.push_back(t);
      out.v_ex.push_back(vex);
      out.v_u.push_back(vc_state + vex);
    } else if (j % 64 == 0) {
      detail::check_divergence(vex, t);
    }
    if (j < steps) detail::rk4_excess_step(t, h, vc_state, vex, cfg, loop);
  }
  return out;
}

// Periodic steady state of the excess noise under the periodic gain
// schedule; the returned grid matches the conditional solution, so
// V_u = V_c + V_ex holds sample by sample.
inline UnconditionalPeriodic unconditional_steady_state(const PeriodicSolution& vc,
                                                        const GainSchedule& gains,
                                                        const ModelConfig& cfg,
                                                        double tol = 1e-8,
                                                        int max_periods = 500) {
  cfg.validate();
  detail::require_shared_grid(vc, gains);
  const detail::ClosedLoopGain loop(cfg, gains);
  const double period = vc.period;
  const int n = vc.samples_per_period();
  const double h = vc.dt();

  Mat4 vc_state = vc.covariances.front();
  Mat4 vex = Mat4::Zero();
  std::vector<Mat4> cur(static_cast<size_t>(n));
  std::vector<Mat4> cur_vc(static_cast<size_t>(n));
  std::vector<Mat4> prev(static_cast<size_t>(n));
  bool have_prev = false;
  double residual = std::numeric_limits<double>::infinity();

  for (int p = 0; p < max_periods; ++p) {
    for (int k = 0; k < n; ++k) {
      cur[static_cast<size_t>(k)] = vex;
      cur_vc[static_cast<size_t>(k)] = vc_state;
      const double t = p * period + k * h;
      if (k % 64 == 0) detail::check_divergence(vex, t);
      detail::rk4_excess_step(t, h, vc_state, vex, cfg, loop);
    }
    detail::check_divergence(vex, (p + 1) * period);
    if (have_prev) {
      residual = 0.0;
      for (int k = 0; k < n; ++k) {
        residual = std::max(residual,
                            detail::sup_norm(cur[static_cast<size_t>(k)] -
                                             prev[static_cast<size_t>(k)]));
      }
      if (residual < tol) {
        UnconditionalPeriodic out;
        out.period = period;
        out.converged = true;
        out.residual = residual;
        out.periods = p + 1;
        out.times = vc.times;
        out.v_ex = cur;
        out.v_u.resize(static_cast<size_t>(n));
        for (int k = 0; k < n; ++k) {
          detail::check_excess_sample(cur[static_cast<size_t>(k)], out.times[static_cast<size_t>(k)]);
          out.v_u[static_cast<size_t>(k)] =
              cur_vc[static_cast<size_t>(k)] + cur[static_cast<size_t>(k)];
          detail::check_sample_physical(out.v_u[static_cast<size_t>(k)],
                                        out.times[static_cast<size_t>(k)]);
        }
        return out;
      }
    }
    std::swap(prev, cur);
    have_prev = true;
  }
  throw ConvergenceError("excess-noise flow not periodic after " +
                             std::to_string(max_periods) + " periods (residual " +
                             std::to_string(residual) + ")",
                         residual);
}

// Classifies the conditional covariance flow from vacuum over the horizon:
// unstable iff its sup norm exceeds the divergence threshold.
inline StabilityReport stability_probe(const ModelConfig& cfg, double horizon,
                                       double dt) {
  cfg.validate();
  if (!(horizon > 0.0)) throw ValidationError("horizon: must be > 0");
  const int n = detail::steps_for_period(cfg.modulation_period(), dt);
  const double h = cfg.modulation_period() / n;
  const int steps = static_cast<int>(std::ceil(horizon / h));
  Mat4 v = kVacuumVariance * Mat4::Identity();
  for (int j = 0; j < steps; ++j) {
    const double t = j * h;
    if (j % 16 == 0 && !(detail::sup_norm(v) < kDivergenceThreshold)) {
      return {false, t};
    }
    detail::rk4_conditional_step(t, h, v, cfg);
  }
  if (!(detail::sup_norm(v) < kDivergenceThreshold)) return {false, steps * h};
  return {true, std::numeric_limits<double>::quiet_NaN()};
}

}  // namespace lqgsim
