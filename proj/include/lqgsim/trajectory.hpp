// Stochastic layer: Euler-Maruyama simulation of the conditional mean under
// optimal feedback, synthetic homodyne records, and seeded ensembles with a
// deterministic chunked reduction.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "lqgsim/common.hpp"
#include "lqgsim/model.hpp"
#include "lqgsim/riccati.hpp"
#include "lqgsim/rng.hpp"

namespace lqgsim {

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<Vec4> means;                 // conditional mean <X>_c
  std::vector<Vec2> records;               // measurement increments dy
  std::vector<Eigen::VectorXd> controls;   // feedback vector u(t)
  uint64_t seed = 0;
};

struct TrajectoryOptions {
  Vec4 x0 = Vec4::Zero();
  double noise_scale = 1.0;   // 0 disables the Wiener increments (test hook)
  int sample_stride = 1;
  // Emit dy = sqrt(eta K_ba) <x_k> dt + dW instead of the filter-consistent
  // dy = 2 (C^T <X>)_k dt + dW.
  bool paper_record_convention = false;
  uint64_t stream = 0;        // trajectory index within an ensemble
};

namespace detail {

// Per-grid-index constants of the closed-loop Euler-Maruyama update
//   X_{j+1} = M X_j + G dW,   u_j = -K X_j,   dy_j = 2 C^T X_j dt + dW.
struct LoopTables {
  std::vector<Mat4> propagator;          // I + h (A - B K)
  std::vector<Mat42> noise_gain;         // 2 V_c C
  std::vector<Eigen::MatrixXd> gain;     // K
  std::vector<double> meas_scale;        // sqrt(eta K_ba(t))
  double h = 0;
  int n = 0;

  LoopTables(const ModelConfig& cfg, const PeriodicSolution& vc,
             const GainSchedule& gains) {
    require_shared_grid(vc, gains);
    n = vc.samples_per_period();
    h = vc.dt();
    const Eigen::MatrixXd b = feedback_matrix(cfg);
    propagator.reserve(static_cast<size_t>(n));
    noise_gain.reserve(static_cast<size_t>(n));
    meas_scale.reserve(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
      const double t = vc.times[static_cast<size_t>(k)];
      const Mat4 a = drift_matrix(t, cfg);
      propagator.push_back(Mat4::Identity() + h * (a - b * gains.gains[static_cast<size_t>(k)]));
      noise_gain.push_back(2.0 * vc.covariances[static_cast<size_t>(k)] *
                           measurement_matrix(t, cfg));
      meas_scale.push_back(std::sqrt(cfg.eta * cfg.kba_ratio * omega_x(t, cfg)));
    }
    gain = gains.gains;
  }
};

}  // namespace detail

// Simulates one closed-loop trajectory of the conditional mean on the grid
// of the periodic solution. Bit-exact reproducible from (seed, stream, cfg).
inline TrajectoryRecord simulate_closed_loop(const ModelConfig& cfg,
                                             const PeriodicSolution& vc,
                                             const GainSchedule& gains,
                                             double t_span, uint64_t seed,
                                             const TrajectoryOptions& opts = {}) {
  cfg.validate();
  if (!(t_span > 0.0)) throw ValidationError("t_span: must be > 0");
  if (opts.sample_stride < 1) throw ValidationError("sample_stride: must be >= 1");

  const detail::LoopTables tables(cfg, vc, gains);
  const double h = tables.h;
  const int steps = static_cast<int>(std::ceil(t_span / h));
  const double sqrt_h = std::sqrt(h) * opts.noise_scale;

  GaussianStream stream(seed, opts.stream);
  Vec4 x = opts.x0;
  TrajectoryRecord record;
  record.seed = seed;
  const size_t reserve = static_cast<size_t>(steps / opts.sample_stride) + 2;
  record.times.reserve(reserve);
  record.means.reserve(reserve);
  record.records.reserve(reserve);
  record.controls.reserve(reserve);

  // The row at time t holds the state at the start of the step together with
  // the control and record increment accumulated over [t, t + dt).
  const double record_drift = opts.paper_record_convention ? 1.0 : 2.0;
  for (int j = 0; j < steps; ++j) {
    const int k = j % tables.n;
    const double t = j * h;
    const auto [z1, z2] = stream.next_pair();
    const Vec2 dw(sqrt_h * z1, sqrt_h * z2);
    if (j % opts.sample_stride == 0) {
      const double s = tables.meas_scale[static_cast<size_t>(k)];
      record.times.push_back(t);
      record.means.push_back(x);
      record.records.push_back(Vec2(record_drift * s * x(0) * h + dw(0),
                                    record_drift * s * x(2) * h + dw(1)));
      record.controls.push_back(-(tables.gain[static_cast<size_t>(k)] * x));
    }
    x = tables.propagator[static_cast<size_t>(k)] * x +
        tables.noise_gain[static_cast<size_t>(k)] * dw;
    if (!x.allFinite()) {
      throw InstabilityError("trajectory diverged at step " + std::to_string(j) +
                                 " (t = " + std::to_string(t) + ")",
                             t);
    }
  }
  return record;
}

struct EnsembleStatistics {
  std::vector<double> times;
  std::vector<Vec4> mean;
  std::vector<Mat4> covariance;       // unbiased sample covariance of <X>_c
  std::vector<Vec4> mean_stderr;
  std::vector<Mat4> covariance_stderr;
  int n_trajectories = 0;
};

// Runs n independent seeded trajectories and accumulates the sample mean and
// covariance of the conditional mean at checkpoint times. Partial sums are
// kept per fixed-size chunk of trajectory indices and reduced in index
// order, so the result is independent of the number of worker threads.
inline EnsembleStatistics ensemble_statistics(const ModelConfig& cfg,
                                              const PeriodicSolution& vc,
                                              const GainSchedule& gains,
                                              int n_trajectories, double t_span,
                                              uint64_t seed_base,
                                              int checkpoint_stride = 500,
                                              int threads = 0) {
  cfg.validate();
  if (n_trajectories < 2) throw ValidationError("n_trajectories: must be >= 2");
  if (checkpoint_stride < 1) throw ValidationError("checkpoint_stride: must be >= 1");

  const detail::LoopTables tables(cfg, vc, gains);
  const double h = tables.h;
  const int steps = static_cast<int>(std::ceil(t_span / h));
  const double sqrt_h = std::sqrt(h);

  std::vector<int> checkpoint_steps;
  for (int j = checkpoint_stride; j < steps; j += checkpoint_stride) {
    checkpoint_steps.push_back(j);
  }
  checkpoint_steps.push_back(steps);
  const size_t n_checkpoints = checkpoint_steps.size();

  constexpr int kChunk = 64;
  const int n_chunks = (n_trajectories + kChunk - 1) / kChunk;
  struct Partial {
    std::vector<Vec4> sum_x;
    std::vector<Mat4> sum_xx;
  };
  std::vector<Partial> partials(static_cast<size_t>(n_chunks));

  auto run_chunk = [&](int c) {
    Partial part;
    part.sum_x.assign(n_checkpoints, Vec4::Zero());
    part.sum_xx.assign(n_checkpoints, Mat4::Zero());
    const int begin = c * kChunk;
    const int end = std::min(n_trajectories, begin + kChunk);
    for (int traj = begin; traj < end; ++traj) {
      GaussianStream stream(seed_base, static_cast<uint64_t>(traj));
      Vec4 x = Vec4::Zero();
      size_t next_cp = 0;
      for (int j = 0; j < steps; ++j) {
        const int k = j % tables.n;
        const auto [z1, z2] = stream.next_pair();
        const Vec2 dw(sqrt_h * z1, sqrt_h * z2);
        x = tables.propagator[static_cast<size_t>(k)] * x +
            tables.noise_gain[static_cast<size_t>(k)] * dw;
        if (next_cp < n_checkpoints && j + 1 == checkpoint_steps[next_cp]) {
          part.sum_x[next_cp] += x;
          part.sum_xx[next_cp] += x * x.transpose();
          ++next_cp;
        }
      }
      if (!x.allFinite()) {
        throw InstabilityError("ensemble trajectory " + std::to_string(traj) +
                                   " diverged (seed " + std::to_string(seed_base) + ")",
                               t_span);
      }
    }
    partials[static_cast<size_t>(c)] = std::move(part);
  };

  int n_workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  n_workers = std::max(1, std::min(n_workers, n_chunks));
  if (n_workers == 1) {
    for (int c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const int c = next.fetch_add(1);
          if (c >= n_chunks) return;
          try {
            run_chunk(c);
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

  EnsembleStatistics stats;
  stats.n_trajectories = n_trajectories;
  stats.times.reserve(n_checkpoints);
  for (size_t i = 0; i < n_checkpoints; ++i) {
    stats.times.push_back(checkpoint_steps[i] * h);
  }
  const double n = static_cast<double>(n_trajectories);
  for (size_t i = 0; i < n_checkpoints; ++i) {
    Vec4 sum_x = Vec4::Zero();
    Mat4 sum_xx = Mat4::Zero();
    for (int c = 0; c < n_chunks; ++c) {
      sum_x += partials[static_cast<size_t>(c)].sum_x[i];
      sum_xx += partials[static_cast<size_t>(c)].sum_xx[i];
    }
    const Vec4 mean = sum_x / n;
    Mat4 cov = (sum_xx - n * (mean * mean.transpose())) / (n - 1.0);
    symmetrize(cov);
    stats.mean.push_back(mean);
    stats.covariance.push_back(cov);
    Vec4 mse;
    Mat4 cse;
    for (int r = 0; r < 4; ++r) {
      mse(r) = std::sqrt(std::max(cov(r, r), 0.0) / n);
      for (int s = 0; s < 4; ++s) {
        // Gaussian sampling variance of a sample covariance entry.
        cse(r, s) = std::sqrt(std::max(cov(r, r) * cov(s, s) + cov(r, s) * cov(r, s), 0.0) /
                              (n - 1.0));
      }
    }
    stats.mean_stderr.push_back(mse);
    stats.covariance_stderr.push_back(cse);
  }
  return stats;
}

}  // namespace lqgsim
