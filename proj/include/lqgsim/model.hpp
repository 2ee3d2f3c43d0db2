// Model matrices for two Coulomb-coupled oscillators under parametric trap
// modulation and continuous position measurement: drift A(t), measurement
// C(t), diffusion N(t), feedback input B and the LQR cost pair (P, Q).
// Everything is dimensionless with omega_m = 1.
#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "lqgsim/common.hpp"
#include "lqgsim/gaussian.hpp"

namespace lqgsim {

namespace constants {
inline constexpr double kHbar = 1.054571817e-34;       // J s
inline constexpr double kBoltzmann = 1.380649e-23;     // J/K
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m
}  // namespace constants

enum class FeedbackStrategy { identical, independent };

inline std::string to_string(FeedbackStrategy s) {
  return s == FeedbackStrategy::identical ? "identical" : "independent";
}

inline FeedbackStrategy parse_feedback_strategy(const std::string& s) {
  if (s == "identical") return FeedbackStrategy::identical;
  if (s == "independent") return FeedbackStrategy::independent;
  throw ValidationError("feedback: must be 'identical' or 'independent', got '" + s + "'");
}

// Dimensionless simulation parameters. Rates are in units of omega_m, the
// modulation frequency Omega likewise.
struct ModelConfig {
  double alpha = 0.2;        // modulation depth, in [0, 1)
  double omega_mod = 2.0;    // Omega / omega_m
  double g = 0.2;            // Coulomb coupling rate, signed
  double eta = 1.0;          // detection efficiency, in [0, 1]
  double kba_ratio = 0.05;   // K_ba / omega_x(t)
  double kth = 2.5e-3;       // K_th / omega_m
  double gamma = 1e-10;      // gamma / omega_m
  double q = 0.1;            // control effort weight q / omega_m
  double p_scale = 1.0;      // state cost P = p_scale * I
  double charge_ratio = 3.0; // Q1 / Q2, used by identical feedback
  FeedbackStrategy strategy = FeedbackStrategy::independent;

  void validate() const {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("alpha: must be in [0, 1)");
    if (!(omega_mod > 0.0)) throw ValidationError("Omega_over_omega_m: must be > 0");
    if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("eta: must be in [0, 1]");
    if (!(kba_ratio >= 0.0)) throw ValidationError("kba_over_omega_x: must be >= 0");
    if (!(kth >= 0.0)) throw ValidationError("kth_over_omega_m: must be >= 0");
    if (!(gamma >= 0.0)) throw ValidationError("gamma_over_omega_m: must be >= 0");
    if (!(q > 0.0)) throw ValidationError("q_over_omega_m: must be > 0");
    if (!(p_scale >= 0.0)) throw ValidationError("p_over_omega_m: must be >= 0");
    if (!std::isfinite(g)) throw ValidationError("g_over_omega_m: must be finite");
    if (!std::isfinite(charge_ratio)) throw ValidationError("charge_ratio: must be finite");
  }

  double modulation_period() const { return 2.0 * kPi / omega_mod; }
};

// Raw experimental inputs in SI units plus the dimensionless rates that are
// quoted directly in experiments.
struct PhysicalParams {
  double radius_m = 50e-9;
  double density_kg_per_m3 = 1850.0;
  double charge1_e = 30.0;        // integer multiple of the elementary charge
  double charge2_e = 30.0;
  double separation_m = 3e-6;
  double omega_m_rad_per_s = 2.0 * kPi * 29.6e3;
  double temperature_k = 300.0;
  double kba_ratio = 0.05;        // K_ba / omega_x(t)
  double gamma_ratio = 1e-10;     // gamma / omega_m
  std::optional<double> kth_ratio;  // K_th / omega_m; derived from T when unset

  void validate() const {
    if (!(radius_m > 0.0)) throw ValidationError("physical.radius_m: must be > 0");
    if (!(density_kg_per_m3 > 0.0)) throw ValidationError("physical.density_kg_per_m3: must be > 0");
    if (!(separation_m > 0.0)) throw ValidationError("physical.separation_m: must be > 0");
    if (!(omega_m_rad_per_s > 0.0)) throw ValidationError("physical.omega_m_rad_per_s: must be > 0");
    if (!(temperature_k >= 0.0)) throw ValidationError("physical.temperature_K: must be >= 0");
    if (!(kba_ratio >= 0.0)) throw ValidationError("physical.kba_over_omega_x: must be >= 0");
    if (!(gamma_ratio >= 0.0)) throw ValidationError("physical.gamma_over_omega_m: must be >= 0");
    if (kth_ratio && !(*kth_ratio >= 0.0)) {
      throw ValidationError("physical.kth_over_omega_m: must be >= 0");
    }
    if (charge1_e != std::round(charge1_e) || charge2_e != std::round(charge2_e)) {
      throw ValidationError("physical.charge_e: charges must be integer multiples of e");
    }
  }
};

struct PhysicalDerivation {
  ModelConfig config;
  double mass_kg = 0;
  double x_zpf_m = 0;
  double nbar = 0;
  double coulomb_rate_rad_per_s = 0;
};

// Maps lab parameters onto the dimensionless model. The Coulomb rate keeps
// the sign of -Q1 Q2 x_zpf^2 / (8 pi eps0 hbar d^3): like charges give g < 0
// (repulsive), opposite charges g > 0 (attractive).
inline PhysicalDerivation derive_physical(const PhysicalParams& p) {
  p.validate();
  PhysicalDerivation out;
  const double r3 = p.radius_m * p.radius_m * p.radius_m;
  out.mass_kg = p.density_kg_per_m3 * (4.0 / 3.0) * kPi * r3;
  out.x_zpf_m = std::sqrt(constants::kHbar / (out.mass_kg * p.omega_m_rad_per_s));
  const double q1 = p.charge1_e * constants::kElementaryCharge;
  const double q2 = p.charge2_e * constants::kElementaryCharge;
  const double d3 = p.separation_m * p.separation_m * p.separation_m;
  out.coulomb_rate_rad_per_s =
      -q1 * q2 * out.x_zpf_m * out.x_zpf_m /
      (8.0 * kPi * constants::kVacuumPermittivity * constants::kHbar * d3);
  out.nbar = constants::kBoltzmann * p.temperature_k /
             (constants::kHbar * p.omega_m_rad_per_s);

  ModelConfig& cfg = out.config;
  cfg.g = out.coulomb_rate_rad_per_s / p.omega_m_rad_per_s;
  cfg.kba_ratio = p.kba_ratio;
  cfg.gamma = p.gamma_ratio;
  cfg.kth = p.kth_ratio ? *p.kth_ratio : p.gamma_ratio * out.nbar;
  cfg.charge_ratio = p.charge2_e != 0.0 ? p.charge1_e / p.charge2_e : 0.0;
  return out;
}

// Instantaneous trap frequency omega_x(t) = [1 + alpha cos(Omega t)]^2.
inline double omega_x(double t, const ModelConfig& cfg) {
  const double f = 1.0 + cfg.alpha * std::cos(cfg.omega_mod * t);
  return f * f;
}

namespace detail {

inline Mat4 drift_from_omega_x(double wx, const ModelConfig& cfg) {
  const double diag = -(wx + 2.0 * cfg.g);
  Mat4 a;
  a << 0.0, 1.0, 0.0, 0.0,
       diag, -cfg.gamma, 2.0 * cfg.g, 0.0,
       0.0, 0.0, 0.0, 1.0,
       2.0 * cfg.g, 0.0, diag, -cfg.gamma;
  return a;
}

}  // namespace detail

// Drift matrix of (x1, p1, x2, p2). The Coulomb term g (x1 - x2)^2 couples
// the momenta to both positions.
inline Mat4 drift_matrix(double t, const ModelConfig& cfg) {
  return detail::drift_from_omega_x(omega_x(t, cfg), cfg);
}

// Measurement matrix: both positions monitored at rate eta K_ba(t) with
// K_ba(t) = kba_ratio * omega_x(t).
inline Mat42 measurement_matrix(double t, const ModelConfig& cfg) {
  const double s = std::sqrt(cfg.eta * cfg.kba_ratio * omega_x(t, cfg));
  Mat42 c = Mat42::Zero();
  c(0, 0) = s;
  c(2, 1) = s;
  return c;
}

// Momentum diffusion from photon back-action plus gas collisions.
inline Mat4 noise_matrix(double t, const ModelConfig& cfg) {
  const double n = cfg.kba_ratio * omega_x(t, cfg) + cfg.kth;
  Mat4 m = Mat4::Zero();
  m(1, 1) = n;
  m(3, 3) = n;
  return m;
}

// Feedback input matrix. The identical strategy drives both particles with
// one field, so forces scale with the charge ratio; it is uncontrollable for
// equal charge magnitudes.
inline Eigen::MatrixXd feedback_matrix(FeedbackStrategy strategy, double charge_ratio) {
  if (strategy == FeedbackStrategy::identical) {
    if (std::abs(std::abs(charge_ratio) - 1.0) == 0.0) {
      throw ValidationError(
          "charge_ratio: identical feedback is uncontrollable for |Q1/Q2| = 1; "
          "the particles must carry unequal charges");
    }
    Eigen::MatrixXd b(4, 1);
    b << 0.0, 1.0, 0.0, charge_ratio;
    return b;
  }
  Eigen::MatrixXd b(4, 2);
  b << 0.0, 0.0,
       1.0, 0.0,
       0.0, 0.0,
       0.0, 1.0;
  return b;
}

inline Eigen::MatrixXd feedback_matrix(const ModelConfig& cfg) {
  return feedback_matrix(cfg.strategy, cfg.charge_ratio);
}

inline Mat4 state_cost(const ModelConfig& cfg) {
  return cfg.p_scale * Mat4::Identity();
}

inline Eigen::MatrixXd control_cost(const ModelConfig& cfg) {
  const int n = cfg.strategy == FeedbackStrategy::identical ? 1 : 2;
  return cfg.q * Eigen::MatrixXd::Identity(n, n);
}

// All model matrices evaluated at one instant.
struct ModelMatrices {
  Mat4 drift;                    // A(t)
  Eigen::MatrixXd feedback;      // B, 4x1 or 4x2
  Mat42 measurement;             // C(t)
  Mat4 noise;                    // N(t), diagonal nonnegative
  Mat4 state_cost;               // P, positive semidefinite
  Eigen::MatrixXd control_cost;  // Q, positive definite
};

inline ModelMatrices model_matrices(double t, const ModelConfig& cfg) {
  return {drift_matrix(t, cfg), feedback_matrix(cfg),   measurement_matrix(t, cfg),
          noise_matrix(t, cfg), state_cost(cfg),        control_cost(cfg)};
}

struct Detunings {
  double delta_plus = 0;        // omega_m (1 + alpha^2/4) - Omega/2
  double delta_minus = 0;       // delta_plus + 2 g
  double resonance_plus = 0;    // Omega at which the + mode is resonant
  double resonance_minus = 0;   // Omega at which the - mode is resonant
};

// Rotating-wave detunings of the two normal modes and the corresponding
// parametric resonance frequencies.
inline Detunings effective_detunings(const ModelConfig& cfg) {
  Detunings d;
  d.delta_plus = 1.0 + cfg.alpha * cfg.alpha / 4.0 - cfg.omega_mod / 2.0;
  d.delta_minus = d.delta_plus + 2.0 * cfg.g;
  d.resonance_plus = 2.0 + cfg.alpha * cfg.alpha / 2.0;
  d.resonance_minus = d.resonance_plus + 4.0 * cfg.g;
  return d;
}

}  // namespace lqgsim
