// Named experiment presets reproducing the reference parameter sets: scans
// over (g, eta), (Omega, g) and (g, alpha), entanglement time series, and
// normal-mode squeezing sweeps. Shared baseline: K_ba/omega_x = 0.05,
// K_th/omega_m = 2.5e-3, gamma/omega_m = 1e-10, Omega = 2 omega_m.
#pragma once

#include <string>
#include <vector>

#include "lqgsim/config.hpp"

namespace lqgsim {

inline std::vector<std::string> preset_names() {
  return {"fig1a", "fig1b", "fig1c", "fig1d", "fig2a", "fig2b", "fig2c",
          "fig2d", "fig2e", "fig2f", "fig3",  "fig4a", "fig4b", "fig4c"};
}

inline ExperimentSpec preset(const std::string& name) {
  ExperimentSpec spec;
  spec.mode = Mode::reproduce;
  spec.preset = name;
  spec.out_dir = "out/" + name;

  ModelConfig& m = spec.model;
  m.alpha = 0.2;
  m.omega_mod = 2.0;
  m.g = 0.2;
  m.eta = 1.0;
  m.kba_ratio = 0.05;
  m.kth = 2.5e-3;
  m.gamma = 1e-10;
  m.q = 0.1;
  m.charge_ratio = 3.0;
  m.strategy = FeedbackStrategy::independent;

  const auto g_eta_scan = [&](Metric metric, double alpha) {
    m.alpha = alpha;
    ScanSpec s;
    s.metric = metric;
    s.x_name = "g_over_omega_m";
    s.x_min = -0.3;
    s.x_max = 0.3;
    s.x_count = 41;
    s.y_name = "eta";
    s.y_min = 0.0;
    s.y_max = 1.0;
    s.y_count = 41;
    spec.scan = s;
  };
  const auto series = [&](Metric metric, double g) {
    m.g = g;
    SeriesSpec s;
    s.metric = metric;
    s.compare_unmodulated = true;
    spec.series = s;
    spec.numerics.span_periods = 40.0;
    spec.numerics.sample_stride = 40;
  };

  if (name == "fig1a") {
    g_eta_scan(Metric::conditional_negativity, 0.0);
  } else if (name == "fig1b") {
    g_eta_scan(Metric::conditional_negativity, 0.2);
  } else if (name == "fig1c") {
    series(Metric::conditional_negativity, 0.2);
  } else if (name == "fig1d") {
    series(Metric::conditional_negativity, -0.2);
  } else if (name == "fig2a") {
    m.strategy = FeedbackStrategy::identical;
    g_eta_scan(Metric::unconditional_negativity, 0.0);
  } else if (name == "fig2b") {
    m.strategy = FeedbackStrategy::identical;
    g_eta_scan(Metric::unconditional_negativity, 0.2);
  } else if (name == "fig2c") {
    g_eta_scan(Metric::unconditional_negativity, 0.0);
  } else if (name == "fig2d") {
    g_eta_scan(Metric::unconditional_negativity, 0.2);
  } else if (name == "fig2e") {
    series(Metric::unconditional_negativity, 0.2);
  } else if (name == "fig2f") {
    series(Metric::unconditional_negativity, -0.2);
  } else if (name == "fig3") {
    ScanSpec s;
    s.metric = Metric::conditional_negativity;
    s.x_name = "Omega_over_omega_m";
    s.x_min = 1.0;
    s.x_max = 3.0;
    s.x_count = 61;
    s.y_name = "g_over_omega_m";
    s.y_min = -0.2;
    s.y_max = 1.0;
    s.y_count = 61;
    spec.scan = s;
  } else if (name == "fig4a") {
    ScanSpec s;
    s.metric = Metric::conditional_negativity;
    s.x_name = "g_over_omega_m";
    s.x_min = 0.0;
    s.x_max = 0.5;
    s.x_count = 41;
    s.y_name = "alpha";
    s.y_min = 0.0;
    s.y_max = 0.45;
    s.y_count = 41;
    spec.scan = s;
  } else if (name == "fig4b") {
    SweepSpec s;
    s.param = "g_over_omega_m";
    s.min = 0.0;
    s.max = 0.5;
    s.count = 51;
    spec.sweep = s;
  } else if (name == "fig4c") {
    m.g = 0.2;
    SweepSpec s;
    s.param = "alpha";
    s.min = 0.0;
    s.max = 0.4;
    s.count = 51;
    spec.sweep = s;
  } else {
    throw ConfigError("preset: unknown name '" + name + "'");
  }
  return spec;
}

}  // namespace lqgsim
