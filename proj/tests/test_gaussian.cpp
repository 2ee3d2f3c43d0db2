#include "lqgsim/gaussian.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace lqgsim;
using test_support::tmsv_covariance;

TEST(SymplecticEigenvalues, VacuumIsHalfHalf) {
  const auto nu = symplectic_eigenvalues(CovMatrix4::vacuum());
  EXPECT_NEAR(nu[0], 0.5, 1e-12);
  EXPECT_NEAR(nu[1], 0.5, 1e-12);
}

TEST(SymplecticEigenvalues, ThermalProduct) {
  const auto nu = symplectic_eigenvalues(CovMatrix4(Mat4(1.5 * Mat4::Identity())));
  EXPECT_NEAR(nu[0], 1.5, 1e-12);
  EXPECT_NEAR(nu[1], 1.5, 1e-12);
}

TEST(SymplecticEigenvalues, TwoModeSqueezedVacuumIsPure) {
  const auto nu = symplectic_eigenvalues(CovMatrix4(tmsv_covariance(0.5)));
  EXPECT_NEAR(nu[0], 0.5, 1e-9);
  EXPECT_NEAR(nu[1], 0.5, 1e-9);
}

TEST(SymplecticEigenvalues, RejectsAsymmetricInput) {
  Mat4 m = 0.5 * Mat4::Identity();
  m(0, 1) = 0.1;
  EXPECT_THROW(CovMatrix4{m}, ValidationError);
}

TEST(SymplecticEigenvalues, RandomPureCovarianceStaysPure) {
  std::mt19937 rng(42);
  for (int i = 0; i < 25; ++i) {
    const Mat4 s = test_support::random_symplectic(rng);
    Mat4 v = 0.5 * s * s.transpose();
    symmetrize(v);
    const auto nu = symplectic_eigenvalues(CovMatrix4(v));
    EXPECT_NEAR(nu[0], 0.5, 1e-9);
    EXPECT_NEAR(nu[1], 0.5, 1e-9);
  }
}

TEST(SymplecticEigenvalues, SolverAndClosedFormAgreeOnWilliamsonForm) {
  std::mt19937 rng(7);
  for (int i = 0; i < 40; ++i) {
    double nu_lo = 0, nu_hi = 0;
    const Mat4 v = test_support::random_physical_covariance(rng, nu_lo, nu_hi);
    const CovMatrix4 cov(v);
    const auto nu = symplectic_eigenvalues(cov);
    EXPECT_NEAR(nu[0], nu_lo, 1e-8 * nu_hi);
    EXPECT_NEAR(nu[1], nu_hi, 1e-8 * nu_hi);
    EXPECT_NEAR(min_symplectic_eigenvalue(cov), nu_lo, 1e-8 * nu_hi);
  }
}

TEST(LogarithmicNegativity, VacuumIsSeparable) {
  EXPECT_DOUBLE_EQ(logarithmic_negativity(CovMatrix4::vacuum()), 0.0);
}

TEST(LogarithmicNegativity, ThermalProductIsZero) {
  EXPECT_DOUBLE_EQ(logarithmic_negativity(CovMatrix4(Mat4(1.5 * Mat4::Identity()))), 0.0);
}

TEST(LogarithmicNegativity, TmsvEqualsTwiceSqueezing) {
  for (double r : {0.1, 0.5, 1.0}) {
    EXPECT_NEAR(logarithmic_negativity(CovMatrix4(tmsv_covariance(r))), 2.0 * r, 1e-9);
  }
}

TEST(LogarithmicNegativity, ProductStatesAreZero) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> var(0.5, 4.0);
  for (int i = 0; i < 20; ++i) {
    Mat4 v = Mat4::Zero();
    const double a = var(rng);
    const double b = var(rng);
    v.diagonal() << a, a, b, b;
    EXPECT_DOUBLE_EQ(logarithmic_negativity(CovMatrix4(v)), 0.0);
  }
}

TEST(LogarithmicNegativity, InvariantUnderLocalSymplectics) {
  std::mt19937 rng(11);
  for (int i = 0; i < 25; ++i) {
    const Mat4 v = tmsv_covariance(0.4);
    const double reference = logarithmic_negativity(CovMatrix4(v));
    const Mat4 s = test_support::random_local_symplectic(rng);
    Mat4 w = s * v * s.transpose();
    symmetrize(w);
    EXPECT_NEAR(logarithmic_negativity(CovMatrix4(w)), reference, 1e-9);
  }
}

TEST(LogarithmicNegativity, RejectsUnphysicalState) {
  EXPECT_THROW(logarithmic_negativity(CovMatrix4(Mat4(0.1 * Mat4::Identity()))),
               ValidationError);
}

TEST(NormalModeTransform, IsInvolutive) {
  const Mat4& t = normal_mode_transform();
  EXPECT_LT((t * t - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormalModeBlocks, VacuumMapsToVacuum) {
  const NormalModeBlocks blocks = normal_mode_blocks(CovMatrix4::vacuum());
  EXPECT_LT((blocks.sigma_plus - 0.5 * Mat2::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((blocks.sigma_minus - 0.5 * Mat2::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(blocks.cross.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormalModeBlocks, ExchangeSymmetricStateHasZeroCross) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int i = 0; i < 10; ++i) {
    Mat2 a;
    a << 1.0 + std::abs(u(rng)), u(rng), 0.0, 1.0 + std::abs(u(rng));
    a(1, 0) = a(0, 1);
    Mat2 c;
    c << u(rng), u(rng), 0.0, u(rng);
    c(1, 0) = c(0, 1);
    Mat4 v = Mat4::Zero();
    v.block<2, 2>(0, 0) = a;
    v.block<2, 2>(2, 2) = a;
    v.block<2, 2>(0, 2) = c;
    v.block<2, 2>(2, 0) = c;
    const NormalModeBlocks blocks = normal_mode_blocks(CovMatrix4(v));
    EXPECT_LT(blocks.cross.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(NormalModeBlocks, ReconstructionRoundTrips) {
  std::mt19937 rng(9);
  double lo = 0, hi = 0;
  const Mat4 v = test_support::random_physical_covariance(rng, lo, hi);
  const NormalModeBlocks blocks = normal_mode_blocks(CovMatrix4(v));
  Mat4 m = Mat4::Zero();
  m.block<2, 2>(0, 0) = blocks.sigma_plus;
  m.block<2, 2>(2, 2) = blocks.sigma_minus;
  m.block<2, 2>(0, 2) = blocks.cross;
  m.block<2, 2>(2, 0) = blocks.cross.transpose();
  const Mat4& t = normal_mode_transform();
  EXPECT_LT((t * m * t - v).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SqueezingDegree, VacuumIsZeroDb) {
  EXPECT_NEAR(squeezing_degree_db(Mat2(0.5 * Mat2::Identity())), 0.0, 1e-12);
}

TEST(SqueezingDegree, QuarterVarianceIsThreeDb) {
  Mat2 s;
  s << 0.25, 0.0, 0.0, 1.0;
  EXPECT_NEAR(squeezing_degree_db(s), 3.0102999566398120, 1e-12);
}

TEST(SqueezingDegree, RejectsNonPositiveDefinite) {
  Mat2 s;
  s << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(squeezing_degree_db(s), ValidationError);
}

TEST(UncertaintyEllipse, VacuumCircleRadius) {
  const auto points = uncertainty_ellipse(Mat2(0.5 * Mat2::Identity()), 4);
  ASSERT_EQ(points.size(), 4u);
  for (const auto& p : points) {
    EXPECT_NEAR(p.norm(), 1.0 / std::sqrt(2.0), 1e-12);
  }
}

TEST(UncertaintyEllipse, DiagonalSemiAxes) {
  Mat2 s;
  s << 0.125, 0.0, 0.0, 0.5;
  const auto points = uncertainty_ellipse(s, 256);
  double max_x = 0, max_p = 0;
  for (const auto& p : points) {
    max_x = std::max(max_x, std::abs(p(0)));
    max_p = std::max(max_p, std::abs(p(1)));
  }
  EXPECT_NEAR(max_x, 1.0 / (2.0 * std::sqrt(2.0)), 1e-4);
  EXPECT_NEAR(max_p, 1.0 / std::sqrt(2.0), 1e-4);
}

TEST(UncertaintyEllipse, PointsSatisfyQuadraticForm) {
  std::mt19937 rng(13);
  const Mat2 r = test_support::rotation2(0.7);
  Mat2 s = r * Eigen::DiagonalMatrix<double, 2>(0.1, 0.9) * r.transpose();
  s = 0.5 * (s + s.transpose()).eval();
  const Mat2 s_inv = s.inverse();
  for (const auto& p : uncertainty_ellipse(s, 64)) {
    EXPECT_NEAR(p.dot(s_inv * p), 1.0, 1e-10);
  }
}

TEST(UncertaintyEllipse, PrincipalAxesAlignWithEigenvectors) {
  const Mat2 r = test_support::rotation2(0.4);
  Mat2 s = r * Eigen::DiagonalMatrix<double, 2>(0.05, 0.8) * r.transpose();
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat2> es(s);
  const Vec2 major = es.eigenvectors().col(1);
  double best = 0;
  Vec2 farthest = Vec2::Zero();
  for (const auto& p : uncertainty_ellipse(s, 720)) {
    if (p.norm() > best) {
      best = p.norm();
      farthest = p;
    }
  }
  EXPECT_NEAR(std::abs(farthest.normalized().dot(major)), 1.0, 1e-4);
}

TEST(UncertaintyEllipse, RejectsSingularAndTinyCounts) {
  EXPECT_THROW(uncertainty_ellipse(Mat2(Mat2::Zero()), 16), ValidationError);
  EXPECT_THROW(uncertainty_ellipse(Mat2(0.5 * Mat2::Identity()), 3), ValidationError);
}
