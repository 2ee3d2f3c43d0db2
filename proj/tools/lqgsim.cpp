// Command-line driver: steady | trajectory | ensemble | scan | reproduce.
// Exit codes: 0 ok, 2 config error, 3 instability, 4 non-convergence, 5 I/O.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lqgsim/config.hpp"
#include "lqgsim/experiment.hpp"
#include "lqgsim/presets.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string format;
  int64_t seed = -1;
  int threads = -1;
  double dt = 0.0;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* config = cmd->add_option("--config", flags.config_path, "experiment config file");
  if (config_required) config->required();
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--seed", flags.seed, "RNG seed");
  cmd->add_option("--threads", flags.threads, "worker thread cap (0 = all cores)");
  cmd->add_option("--dt", flags.dt, "integrator step in 1/omega_m (overrides steps_per_period)");
  cmd->add_option("--format", flags.format, "output format: csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
}

lqgsim::ExperimentSpec load_spec(const CommonFlags& flags, lqgsim::Mode mode) {
  std::ifstream in(flags.config_path);
  if (!in) throw lqgsim::IoError("cannot read config file '" + flags.config_path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  lqgsim::ExperimentSpec spec = lqgsim::parse_experiment_spec(buffer.str());
  spec.mode = mode;
  return spec;
}

void apply_overrides(lqgsim::ExperimentSpec& spec, const CommonFlags& flags) {
  if (!flags.out_dir.empty()) spec.out_dir = flags.out_dir;
  if (flags.seed >= 0) spec.numerics.seed = static_cast<uint64_t>(flags.seed);
  if (flags.threads >= 0) spec.numerics.threads = flags.threads;
  if (!flags.format.empty()) {
    spec.format = flags.format == "json" ? lqgsim::OutputFormat::json
                                         : lqgsim::OutputFormat::csv;
  }
  if (flags.dt > 0.0) {
    const double period = spec.model.modulation_period();
    spec.numerics.steps_per_period =
        std::max(16, static_cast<int>(std::ceil(period / flags.dt)));
  }
}

int run_spec(const lqgsim::ExperimentSpec& spec) {
  const lqgsim::RunResult result = lqgsim::run(spec);
  std::printf("wrote %zu file(s) to %s (%.2f s", result.outputs.size() + 1,
              spec.out_dir.c_str(), result.wall_time_s);
  if (result.failure_count > 0) {
    std::printf(", %d failed cell(s)", result.failure_count);
  }
  std::printf(")\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian dynamics of two Coulomb-coupled modulated oscillators "
               "under continuous measurement and LQG feedback"};
  app.set_version_flag("--version", std::string("lqgsim ") + lqgsim::kVersion);
  app.require_subcommand(1);

  CommonFlags flags;
  std::string preset_name;
  auto* steady = app.add_subcommand("steady", "periodic steady state of V_c (and V_u)");
  add_common_flags(steady, flags, true);
  auto* trajectory = app.add_subcommand("trajectory", "one stochastic closed-loop trajectory");
  add_common_flags(trajectory, flags, true);
  auto* ensemble = app.add_subcommand("ensemble", "seeded trajectory ensemble statistics");
  add_common_flags(ensemble, flags, true);
  auto* scan = app.add_subcommand("scan", "2-D parameter scan of one metric");
  add_common_flags(scan, flags, true);
  auto* reproduce = app.add_subcommand("reproduce", "run a named preset (fig1a .. fig4c)");
  reproduce->add_option("target", preset_name, "preset name")->required();
  add_common_flags(reproduce, flags, false);

  CLI11_PARSE(app, argc, argv);

  try {
    lqgsim::ExperimentSpec spec;
    if (reproduce->parsed()) {
      spec = lqgsim::preset(preset_name);
      if (!flags.config_path.empty()) {
        spec = load_spec(flags, lqgsim::Mode::reproduce);
        spec.preset = preset_name;
      }
    } else if (steady->parsed()) {
      spec = load_spec(flags, lqgsim::Mode::steady);
    } else if (trajectory->parsed()) {
      spec = load_spec(flags, lqgsim::Mode::trajectory);
    } else if (ensemble->parsed()) {
      spec = load_spec(flags, lqgsim::Mode::ensemble);
    } else if (scan->parsed()) {
      spec = load_spec(flags, lqgsim::Mode::scan);
    }
    apply_overrides(spec, flags);
    return run_spec(spec);
  } catch (const lqgsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const lqgsim::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const lqgsim::InstabilityError& e) {
    std::cerr << "instability: " << e.what() << "\n";
    return 3;
  } catch (const lqgsim::ControllabilityError& e) {
    std::cerr << "instability: " << e.what() << "\n";
    return 3;
  } catch (const lqgsim::ConvergenceError& e) {
    std::cerr << "non-convergence: " << e.what() << "\n";
    return 4;
  } catch (const lqgsim::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
