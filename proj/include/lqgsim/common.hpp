// Shared types, numeric conventions and the error taxonomy.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lqgsim {

inline constexpr double kPi = 3.14159265358979323846;

// hbar = 1 and [x, p] = i throughout, so the vacuum state has variance 1/2
// in every quadrature. All rates are in units of the unmodulated mechanical
// frequency and all times in its inverse.
inline constexpr double kVacuumVariance = 0.5;

using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;
using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments or violated call preconditions. CLI exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration input. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A covariance flow diverged. CLI exit code 3.
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& what, double blow_up_time)
      : Error(what), blow_up_time_(blow_up_time) {}
  double blow_up_time() const { return blow_up_time_; }

 private:
  double blow_up_time_ = 0;
};

// The LQR Riccati flow diverged: the actuation cannot stabilize the plant.
// CLI exit code 3.
class ControllabilityError : public Error {
 public:
  using Error::Error;
};

// Iteration budget exhausted before the requested tolerance. CLI exit code 4.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_ = 0;
};

// Filesystem failure. CLI exit code 5.
class IoError : public Error {
 public:
  using Error::Error;
};

// A computed state violated the uncertainty bound; this flags a numerical
// fault in the pipeline, not bad user input.
class PhysicalityError : public Error {
 public:
  PhysicalityError(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_ = 0;
};

inline bool is_symmetric(const Mat4& m, double tol) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

inline void symmetrize(Mat4& m) { m = (0.5 * (m + m.transpose())).eval(); }

}  // namespace lqgsim
