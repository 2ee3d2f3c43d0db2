#include "lqgsim/riccati.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "lqgsim/analysis.hpp"
#include "oracles.hpp"

using namespace lqgsim;

namespace {

double rel_frobenius(const Mat4& a, const Mat4& b) {
  return (a - b).norm() / b.norm();
}

ModelConfig unmodulated_measured() {
  ModelConfig cfg;
  cfg.alpha = 0.0;
  cfg.omega_mod = 2.0;
  cfg.g = 0.2;
  cfg.eta = 1.0;
  return cfg;
}

constexpr double kDt = kPi / 2000.0;  // 2000 steps per period at Omega = 2

}  // namespace

TEST(Oracles, LyapunovResidualIsTiny) {
  ModelConfig cfg = unmodulated_measured();
  cfg.gamma = 0.2;
  const Mat4 f = drift_matrix(0.0, cfg);
  const Mat4 q = noise_matrix(0.0, cfg);
  const Mat4 x = oracle::solve_lyapunov(f, q);
  EXPECT_LT((f * x + x * f.transpose() + q).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ConditionalCovariance, UnmeasuredDampedMatchesLyapunov) {
  ModelConfig cfg;
  cfg.alpha = 0.0;
  cfg.g = 0.0;
  cfg.eta = 0.0;
  cfg.gamma = 0.05;
  cfg.kth = 0.05;  // keeps the damped thermal state above the vacuum bound
  const Mat4 expected =
      oracle::solve_lyapunov(drift_matrix(0.0, cfg), noise_matrix(0.0, cfg));
  const CovTimeSeries series = integrate_conditional_covariance(
      CovMatrix4::vacuum(), cfg, 350.0, kDt, 4000);
  EXPECT_LT(rel_frobenius(series.covariances.back(), expected), 1e-6);
}

TEST(ConditionalCovariance, MeasuredMatchesAlgebraicRiccati) {
  const ModelConfig cfg = unmodulated_measured();
  const Mat4 expected = oracle::filter_fixed_point(cfg);
  const CovTimeSeries series = integrate_conditional_covariance(
      CovMatrix4::vacuum(), cfg, 300.0, kDt, 4000);
  EXPECT_LT(rel_frobenius(series.covariances.back(), expected), 1e-6);
}

TEST(ConditionalCovariance, FixedPointIsStationary) {
  const ModelConfig cfg = unmodulated_measured();
  const Mat4 fixed_point = oracle::filter_fixed_point(cfg);
  const CovTimeSeries series = integrate_conditional_covariance(
      CovMatrix4(fixed_point), cfg, 10.0 * kPi, kDt, 500);
  for (const Mat4& v : series.covariances) {
    EXPECT_LT((v - fixed_point).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ConditionalCovariance, RejectsBadInputs) {
  const ModelConfig cfg = unmodulated_measured();
  EXPECT_THROW(integrate_conditional_covariance(CovMatrix4::vacuum(), cfg, 1.0, 0.1),
               ValidationError);
  EXPECT_THROW(integrate_conditional_covariance(
                   CovMatrix4(Mat4(0.1 * Mat4::Identity())), cfg, 1.0, kDt),
               ValidationError);
}

TEST(ConditionalCovariance, UnmeasuredParametricDriveDiverges) {
  ModelConfig cfg;
  cfg.alpha = 0.2;
  cfg.omega_mod = 2.0;
  cfg.g = 0.2;
  cfg.eta = 0.0;
  cfg.gamma = 1e-10;
  EXPECT_THROW(
      integrate_conditional_covariance(CovMatrix4::vacuum(), cfg, 700.0, kDt, 4000),
      InstabilityError);
}

TEST(PeriodicSteadyState, UnmodulatedReturnsFixedPoint) {
  const ModelConfig cfg = unmodulated_measured();
  const PeriodicSolution sol = periodic_steady_state(cfg, kDt, 1e-10);
  ASSERT_TRUE(sol.converged);
  const Mat4 expected = oracle::filter_fixed_point(cfg);
  for (const Mat4& v : sol.covariances) {
    EXPECT_LT(rel_frobenius(v, expected), 1e-6);
  }
}

TEST(PeriodicSteadyState, ModulatedConvergesAndOscillates) {
  ModelConfig cfg = unmodulated_measured();
  cfg.alpha = 0.2;
  const PeriodicSolution sol = periodic_steady_state(cfg, kDt);
  ASSERT_TRUE(sol.converged);
  EXPECT_EQ(sol.samples_per_period(), 2000);
  EXPECT_NEAR(sol.period, kPi, 1e-15);
  // genuinely time dependent over the period
  double swing = 0.0;
  for (const Mat4& v : sol.covariances) {
    swing = std::max(swing, (v - sol.covariances.front()).cwiseAbs().maxCoeff());
  }
  EXPECT_GT(swing, 0.01);
  // exchange-symmetric dynamics give an exchange-symmetric state
  Mat4 p = Mat4::Zero();
  p(0, 2) = p(2, 0) = p(1, 3) = p(3, 1) = 1.0;
  EXPECT_LT((p * sol.covariances.front() * p - sol.covariances.front())
                .cwiseAbs()
                .maxCoeff(),
            1e-9);
}

TEST(PeriodicSteadyState, SamplesStayPhysical) {
  ModelConfig cfg = unmodulated_measured();
  cfg.alpha = 0.2;
  const PeriodicSolution sol = periodic_steady_state(cfg, kDt);
  for (const Mat4& v : sol.covariances) {
    EXPECT_GE(min_symplectic_eigenvalue(CovMatrix4(v)), 0.5 - 1e-6);
  }
}

TEST(PeriodicSteadyState, UnmeasuredModulatedIsUnstable) {
  ModelConfig cfg;
  cfg.alpha = 0.2;
  cfg.omega_mod = 2.0;
  cfg.g = 0.2;
  cfg.eta = 0.0;
  cfg.gamma = 1e-10;
  EXPECT_THROW(periodic_steady_state(cfg, kDt), InstabilityError);
}

TEST(PeriodicSteadyState, StepRefinementConvergesAtFourthOrder) {
  ModelConfig cfg = unmodulated_measured();
  cfg.alpha = 0.2;
  const double tol = 1e-12;
  const Mat4 coarse =
      periodic_steady_state(cfg, cfg.modulation_period() / 500, tol, 3000).covariances.front();
  const Mat4 medium =
      periodic_steady_state(cfg, cfg.modulation_period() / 1000, tol, 3000).covariances.front();
  const Mat4 fine =
      periodic_steady_state(cfg, cfg.modulation_period() / 2000, tol, 3000).covariances.front();
  const double ratio = (coarse - medium).cwiseAbs().maxCoeff() /
                       (medium - fine).cwiseAbs().maxCoeff();
  EXPECT_GT(ratio, 8.0);
  EXPECT_LT(ratio, 40.0);
}

TEST(PeriodicSteadyState, EfficientMeasurementPurifies) {
  ModelConfig cfg = unmodulated_measured();
  cfg.kth = 0.0;
  const PeriodicSolution sol = periodic_steady_state(cfg, kDt, 1e-10);
  const auto nu = symplectic_eigenvalues(CovMatrix4(sol.covariances.front()));
  EXPECT_NEAR(nu[0], 0.5, 0.05);
  EXPECT_NEAR(nu[1], 0.5, 0.05);
}

TEST(BackwardRiccati, ZeroStateCostGivesZeroGain) {
  ModelConfig cfg = unmodulated_measured();
  cfg.p_scale = 0.0;
  const GainSchedule schedule = backward_control_riccati(cfg, kDt);
  for (const auto& k : schedule.gains) {
    EXPECT_LT(k.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(BackwardRiccati, GainShrinksWithEffortPenalty) {
  ModelConfig cfg = unmodulated_measured();
  double previous = std::numeric_limits<double>::infinity();
  double first = 0.0;
  double last = 0.0;
  for (double q : {0.1, 1.0, 10.0, 100.0, 1e4}) {
    cfg.q = q;
    const GainSchedule schedule = backward_control_riccati(cfg, kDt, 1e-9, 3000);
    double norm = 0.0;
    for (const auto& k : schedule.gains) norm = std::max(norm, k.cwiseAbs().maxCoeff());
    EXPECT_LT(norm, previous);
    if (q == 0.1) first = norm;
    previous = norm;
    last = norm;
  }
  EXPECT_LT(last, 0.05 * first);
}

TEST(BackwardRiccati, StationaryGainMatchesControlAre) {
  ModelConfig cfg = unmodulated_measured();
  cfg.q = 0.1;
  const GainSchedule schedule = backward_control_riccati(cfg, kDt, 1e-10, 2000);
  const Mat4 sigma = oracle::control_fixed_point(cfg);
  const Eigen::MatrixXd b = feedback_matrix(cfg);
  const Eigen::MatrixXd expected = control_cost(cfg).inverse() * b.transpose() * sigma;
  for (const auto& k : schedule.gains) {
    EXPECT_LT((k - expected).cwiseAbs().maxCoeff() / expected.cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(BackwardRiccati, StationaryHelperAgreesAtAlphaZero) {
  ModelConfig cfg = unmodulated_measured();
  const GainSchedule periodic = backward_control_riccati(cfg, kDt, 1e-10, 2000);
  const GainSchedule flat = stationary_gain(cfg, kDt, 1e-10);
  EXPECT_LT((periodic.gains.front() - flat.gains.front()).cwiseAbs().maxCoeff(), 1e-7);
}

// Differentiating the periodic cost-to-go along forward time must satisfy
// the Riccati equation sample by sample; a one-sample phase misalignment in
// the backward-to-forward mapping would break this at O(dt).
TEST(BackwardRiccati, PeriodicCostToGoSatisfiesRiccatiOde) {
  ModelConfig cfg = unmodulated_measured();
  cfg.alpha = 0.2;  // genuinely time dependent
  const GainSchedule schedule = backward_control_riccati(cfg, kDt, 1e-10, 2000);
  const Eigen::MatrixXd b = feedback_matrix(cfg);
  const Mat4 effort = b * control_cost(cfg).inverse() * b.transpose();
  const int n = static_cast<int>(schedule.times.size());
  const double h = schedule.dt();
  double worst = 0.0;
  for (int k = 0; k < n; k += 17) {
    const Mat4& sig = schedule.cost_to_go[static_cast<size_t>(k)];
    const Mat4& next = schedule.cost_to_go[static_cast<size_t>((k + 1) % n)];
    const Mat4& prev = schedule.cost_to_go[static_cast<size_t>((k + n - 1) % n)];
    const Mat4 dsig_dt = (next - prev) / (2.0 * h);
    const Mat4 a = drift_matrix(schedule.times[static_cast<size_t>(k)], cfg);
    const Mat4 rhs = a.transpose() * sig + sig * a + state_cost(cfg) - sig * effort * sig;
    worst = std::max(worst, (dsig_dt + rhs).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-4);  // central difference error O(h^2) ~ 2e-5
}

TEST(BackwardRiccati, NearUncontrollablePairDiverges) {
  ModelConfig cfg = unmodulated_measured();
  cfg.strategy = FeedbackStrategy::identical;
  cfg.charge_ratio = 1.0 + 1e-9;
  cfg.gamma = 1e-10;
  EXPECT_THROW(backward_control_riccati(cfg, kDt, 1e-8, 60), ControllabilityError);
}

TEST(ExcessNoise, NoMeasurementMeansNoExcessNoise) {
  ModelConfig cfg;
  cfg.alpha = 0.0;
  cfg.g = 0.2;
  cfg.eta = 0.0;
  cfg.gamma = 0.05;  // contractive unmeasured flow ...
  cfg.kth = 0.05;    // ... with enough thermal noise to stay physical
  const PeriodicSolution vc = periodic_steady_state(cfg, kDt, 1e-10);
  const GainSchedule gains = backward_control_riccati(cfg, kDt);
  const ExcessEvolution ex = excess_noise_evolution(vc, gains, cfg, 20.0, 100);
  for (size_t i = 0; i < ex.v_ex.size(); ++i) {
    EXPECT_LT(ex.v_ex[i].cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((ex.v_u[i] - vc.covariances.front()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ExcessNoise, StationaryMatchesClosedLoopLyapunov) {
  const ModelConfig cfg = unmodulated_measured();  // q = 0.1, independent
  const PeriodicSolution vc = periodic_steady_state(cfg, kDt, 1e-11);
  const GainSchedule gains = backward_control_riccati(cfg, kDt, 1e-11, 2000);
  const UnconditionalPeriodic uncond =
      unconditional_steady_state(vc, gains, cfg, 1e-11, 2000);

  const Mat4 v_fixed = oracle::filter_fixed_point(cfg);
  const Mat4 sigma = oracle::control_fixed_point(cfg);
  const Eigen::MatrixXd b = feedback_matrix(cfg);
  const Mat4 f =
      drift_matrix(0.0, cfg) -
      b * (control_cost(cfg).inverse() * b.transpose() * sigma);
  const Mat42 c = measurement_matrix(0.0, cfg);
  const Mat4 source = 4.0 * v_fixed * (c * c.transpose()) * v_fixed;
  const Mat4 expected = oracle::solve_lyapunov(f, source);
  EXPECT_LT(rel_frobenius(uncond.v_ex.front(), expected), 1e-6);
}

TEST(ExcessNoise, GridMismatchIsRejected) {
  const ModelConfig cfg = unmodulated_measured();
  const PeriodicSolution vc = periodic_steady_state(cfg, kDt);
  const GainSchedule gains = backward_control_riccati(cfg, cfg.modulation_period() / 1000);
  EXPECT_THROW(excess_noise_evolution(vc, gains, cfg, 5.0), ValidationError);
}

TEST(ExcessNoise, ModulatedSteadyStateIsPhysical) {
  ModelConfig cfg = unmodulated_measured();
  cfg.alpha = 0.2;
  const PeriodicSolution vc = periodic_steady_state(cfg, kDt);
  const GainSchedule gains = backward_control_riccati(cfg, kDt);
  const UnconditionalPeriodic uncond = unconditional_steady_state(vc, gains, cfg);
  ASSERT_TRUE(uncond.converged);
  for (size_t i = 0; i < uncond.v_ex.size(); ++i) {
    Eigen::SelfAdjointEigenSolver<Mat4> es(uncond.v_ex[i], Eigen::EigenvaluesOnly);
    EXPECT_GE(es.eigenvalues()(0), -1e-9);
    EXPECT_GE(min_symplectic_eigenvalue(CovMatrix4(uncond.v_u[i])), 0.5 - 1e-6);
    EXPECT_LT((uncond.v_u[i] - uncond.v_ex[i] - vc.covariances[i]).cwiseAbs().maxCoeff(),
              1e-6);
  }
}

TEST(ExcessNoise, RelabelingParticlesLeavesMetricsUnchanged) {
  // Swapping the particle labels maps the identical-feedback column
  // [0, 1, 0, r] onto [0, r, 0, 1] = r [0, 1, 0, 1/r]; rescaling the drive
  // folds into the effort weight as q -> q / r^2.
  ModelConfig a = unmodulated_measured();
  a.strategy = FeedbackStrategy::identical;
  a.charge_ratio = 3.0;
  a.q = 0.1;
  ModelConfig b = a;
  b.charge_ratio = 1.0 / 3.0;
  b.q = 0.1 / 9.0;

  auto unconditional_negativity = [](const ModelConfig& cfg) {
    const PeriodicSolution vc = periodic_steady_state(cfg, kDt, 1e-10);
    const GainSchedule gains = backward_control_riccati(cfg, kDt, 1e-10, 2000);
    const UnconditionalPeriodic uncond =
        unconditional_steady_state(vc, gains, cfg, 1e-10, 2000);
    return period_average(entanglement_time_series(uncond.v_u));
  };
  EXPECT_NEAR(unconditional_negativity(a), unconditional_negativity(b), 1e-8);
}

TEST(StabilityProbe, ClassifiesAllThreeRegimes) {
  ModelConfig cfg;
  cfg.alpha = 0.2;
  cfg.omega_mod = 2.0;
  cfg.g = 0.2;
  cfg.gamma = 1e-10;

  cfg.eta = 0.0;
  const StabilityReport unstable = stability_probe(cfg, 700.0, kDt);
  EXPECT_FALSE(unstable.stable);
  EXPECT_GT(unstable.blow_up_time, 0.0);

  cfg.eta = 0.5;
  EXPECT_TRUE(stability_probe(cfg, 700.0, kDt).stable);

  cfg.eta = 0.0;
  cfg.gamma = 0.2;  // artificial damping satisfying alpha/2 < gamma
  EXPECT_TRUE(stability_probe(cfg, 700.0, kDt).stable);
}
