// Symplectic linear algebra on two-mode Gaussian states: symplectic spectra,
// logarithmic negativity, normal-mode decomposition, squeezing degrees and
// uncertainty ellipses. Quadrature ordering is (x1, p1, x2, p2).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "lqgsim/common.hpp"

namespace lqgsim {

// Two-mode symplectic form for the (x1, p1, x2, p2) ordering.
inline const Mat4& symplectic_form() {
  static const Mat4 omega = [] {
    Mat4 o = Mat4::Zero();
    o(0, 1) = 1.0;
    o(1, 0) = -1.0;
    o(2, 3) = 1.0;
    o(3, 2) = -1.0;
    return o;
  }();
  return omega;
}

// Symmetric 4x4 covariance matrix of the two mechanical modes. Construction
// rejects inputs that are asymmetric beyond tolerance and symmetrizes the
// rest exactly, so a stored matrix is always symmetric to machine precision.
class CovMatrix4 {
 public:
  CovMatrix4() : m_(kVacuumVariance * Mat4::Identity()) {}

  explicit CovMatrix4(const Mat4& m, double asym_tol = 1e-9) {
    if (!m.allFinite()) throw ValidationError("covariance matrix has non-finite entries");
    if (!is_symmetric(m, asym_tol)) throw ValidationError("covariance matrix is not symmetric");
    m_ = 0.5 * (m + m.transpose());
  }

  static CovMatrix4 vacuum() { return CovMatrix4(); }

  const Mat4& matrix() const { return m_; }

 private:
  Mat4 m_;
};

namespace detail {

// Minimum symplectic eigenvalue of a (possibly partially transposed)
// two-mode covariance matrix via the closed form
//   2 nu_min^2 = Delta - sqrt(Delta^2 - 4 det V),
// Delta = det A + det B + 2 det C for the 2x2 blocks [[A, C], [C^T, B]].
inline double min_symplectic_closed_form(const Mat4& v) {
  const double det_a = v(0, 0) * v(1, 1) - v(0, 1) * v(1, 0);
  const double det_b = v(2, 2) * v(3, 3) - v(2, 3) * v(3, 2);
  const double det_c = v(0, 2) * v(1, 3) - v(0, 3) * v(1, 2);
  const double delta = det_a + det_b + 2.0 * det_c;
  const double det_v = v.determinant();
  const double disc = delta * delta - 4.0 * det_v;
  if (disc < 0.0) {
    // Complex symplectic quartet; the common modulus is det(V)^{1/4}.
    return std::pow(std::max(det_v, 0.0), 0.25);
  }
  // nu_min via det V / nu_max^2: the direct delta - sqrt(disc) form cancels
  // catastrophically for strongly squeezed states.
  const double nu_max2 = 0.5 * (delta + std::sqrt(disc));
  if (nu_max2 <= 0.0) return 0.0;
  return std::sqrt(std::max(det_v, 0.0) / nu_max2);
}

inline Mat4 partial_transpose(const Mat4& v) {
  Mat4 p = Mat4::Identity();
  p(3, 3) = -1.0;  // momentum sign flip on mode 2
  return p * v * p;
}

}  // namespace detail

// Both symplectic eigenvalues, ascending: the absolute values of the
// eigenvalues of i * Omega * V, deduplicated from the +/- pairs.
inline std::array<double, 2> symplectic_eigenvalues(const CovMatrix4& v) {
  Eigen::EigenSolver<Mat4> solver(symplectic_form() * v.matrix(), false);
  std::array<double, 4> mods{};
  for (int i = 0; i < 4; ++i) mods[i] = std::abs(solver.eigenvalues()(i));
  std::sort(mods.begin(), mods.end());
  return {mods[0], mods[2]};
}

inline double min_symplectic_eigenvalue(const CovMatrix4& v) {
  return detail::min_symplectic_closed_form(v.matrix());
}

inline bool is_physical(const CovMatrix4& v, double tol = 1e-9) {
  return min_symplectic_eigenvalue(v) >= kVacuumVariance - tol;
}

// Logarithmic negativity E_N = max(0, -ln(2 nu)) with nu the minimum
// symplectic eigenvalue after partial transposition of mode 2.
inline double logarithmic_negativity(const CovMatrix4& v, double physicality_tol = 1e-6) {
  if (!is_physical(v, physicality_tol)) {
    throw ValidationError("logarithmic_negativity: covariance matrix is unphysical");
  }
  const double nu = detail::min_symplectic_closed_form(detail::partial_transpose(v.matrix()));
  return std::max(0.0, -std::log(2.0 * nu));
}

// Involutive transformation to the common/differential normal modes
// (x+, p+, x-, p-) with x± = (x1 ± x2)/sqrt(2).
inline const Mat4& normal_mode_transform() {
  static const Mat4 t = [] {
    const double s = 1.0 / std::sqrt(2.0);
    Mat4 m;
    m << s, 0, s, 0,
         0, s, 0, s,
         s, 0, -s, 0,
         0, s, 0, -s;
    return m;
  }();
  return t;
}

struct NormalModeBlocks {
  Mat2 sigma_plus;   // covariance of (x+, p+)
  Mat2 sigma_minus;  // covariance of (x-, p-)
  Mat2 cross;        // correlations between the two normal modes
};

inline NormalModeBlocks normal_mode_blocks(const CovMatrix4& v) {
  const Mat4& t = normal_mode_transform();
  const Mat4 m = t * v.matrix() * t;
  NormalModeBlocks blocks;
  blocks.sigma_plus = 0.5 * (m.block<2, 2>(0, 0) + m.block<2, 2>(0, 0).transpose());
  blocks.sigma_minus = 0.5 * (m.block<2, 2>(2, 2) + m.block<2, 2>(2, 2).transpose());
  blocks.cross = m.block<2, 2>(0, 2);
  return blocks;
}

namespace detail {

inline void eig_sym_2x2(const Mat2& s, double& lo, double& hi) {
  const double mean = 0.5 * (s(0, 0) + s(1, 1));
  const double d = 0.5 * (s(0, 0) - s(1, 1));
  const double r = std::sqrt(d * d + s(0, 1) * s(1, 0));
  lo = mean - r;
  hi = mean + r;
}

}  // namespace detail

// Squeezing degree in dB: -10 log10(2 lambda_min). Positive means squeezed
// below the vacuum variance.
inline double squeezing_degree_db(const Mat2& sigma) {
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ValidationError("squeezing_degree_db: matrix is not symmetric");
  }
  double lo = 0, hi = 0;
  detail::eig_sym_2x2(sigma, lo, hi);
  if (lo <= 0.0) throw ValidationError("squeezing_degree_db: matrix is not positive definite");
  return -10.0 * std::log10(2.0 * lo);
}

// Uniformly parametrized samples of the 1-sigma ellipse {v : v^T sigma^-1 v = 1}.
inline std::vector<Vec2> uncertainty_ellipse(const Mat2& sigma, int n_points) {
  if (n_points < 4) throw ValidationError("uncertainty_ellipse: n_points must be >= 4");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ValidationError("uncertainty_ellipse: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat2> solver(sigma);
  if (solver.eigenvalues()(0) <= 0.0) {
    throw ValidationError("uncertainty_ellipse: matrix is singular or not positive definite");
  }
  const double a = std::sqrt(solver.eigenvalues()(0));
  const double b = std::sqrt(solver.eigenvalues()(1));
  std::vector<Vec2> points;
  points.reserve(static_cast<size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    const double theta = 2.0 * kPi * i / n_points;
    points.push_back(solver.eigenvectors() *
                     Vec2(a * std::cos(theta), b * std::sin(theta)));
  }
  return points;
}

}  // namespace lqgsim
