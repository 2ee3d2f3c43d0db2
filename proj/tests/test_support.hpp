// Helpers shared by the test suites: random Gaussian-state constructions
// built from known symplectic blocks, kept independent of the library's
// solver code paths.
#pragma once

#include <cmath>
#include <random>

#include "lqgsim/common.hpp"
#include "lqgsim/gaussian.hpp"

namespace test_support {

using lqgsim::Mat2;
using lqgsim::Mat4;

inline Mat2 rotation2(double theta) {
  Mat2 r;
  r << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta);
  return r;
}

inline Mat2 squeeze2(double r) {
  Mat2 s;
  s << std::exp(r), 0.0, 0.0, std::exp(-r);
  return s;
}

// Single-mode symplectic from the Euler decomposition R(a) S(r) R(b).
inline Mat2 random_single_mode_symplectic(std::mt19937& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * lqgsim::kPi);
  std::uniform_real_distribution<double> squeeze(-0.8, 0.8);
  return rotation2(angle(rng)) * squeeze2(squeeze(rng)) * rotation2(angle(rng));
}

inline Mat4 block_diag(const Mat2& a, const Mat2& b) {
  Mat4 m = Mat4::Zero();
  m.block<2, 2>(0, 0) = a;
  m.block<2, 2>(2, 2) = b;
  return m;
}

// Beam-splitter symplectic mixing the two modes by angle theta.
inline Mat4 beam_splitter(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat4 m;
  m << c, 0, s, 0,
       0, c, 0, s,
       -s, 0, c, 0,
       0, -s, 0, c;
  return m;
}

// Two-mode squeezing symplectic with parameter r.
inline Mat4 two_mode_squeeze(double r) {
  const double ch = std::cosh(r);
  const double sh = std::sinh(r);
  Mat4 m;
  m << ch, 0, sh, 0,
       0, ch, 0, -sh,
       sh, 0, ch, 0,
       0, -sh, 0, ch;
  return m;
}

inline Mat4 random_local_symplectic(std::mt19937& rng) {
  return block_diag(random_single_mode_symplectic(rng), random_single_mode_symplectic(rng));
}

inline Mat4 random_symplectic(std::mt19937& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * lqgsim::kPi);
  std::uniform_real_distribution<double> squeeze(-0.6, 0.6);
  return random_local_symplectic(rng) * beam_splitter(angle(rng)) *
         two_mode_squeeze(squeeze(rng)) * random_local_symplectic(rng);
}

// Covariance of the ideal two-mode squeezed vacuum with parameter r.
inline Mat4 tmsv_covariance(double r) {
  const Mat4 s = two_mode_squeeze(r);
  return 0.5 * s * s.transpose();
}

// Physical covariance S diag(nu1, nu1, nu2, nu2) S^T with nu_i >= 1/2.
inline Mat4 random_physical_covariance(std::mt19937& rng, double& nu_lo, double& nu_hi) {
  std::uniform_real_distribution<double> nu(0.5, 3.0);
  double n1 = nu(rng);
  double n2 = nu(rng);
  if (n1 > n2) std::swap(n1, n2);
  nu_lo = n1;
  nu_hi = n2;
  const Mat4 s = random_symplectic(rng);
  Mat4 d = Mat4::Zero();
  d.diagonal() << n1, n1, n2, n2;
  Mat4 v = s * d * s.transpose();
  lqgsim::symmetrize(v);
  return v;
}

}  // namespace test_support
