// nano-nmpc: closed-loop NMPC simulation and oracle self-checks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nano_nmpc/config.hpp"
#include "nano_nmpc/errors.hpp"
#include "nano_nmpc/harness.hpp"
#include "nano_nmpc/oracles/checks.hpp"

namespace fs = std::filesystem;
using namespace nano_nmpc;

namespace {

enum ExitCode { kOk = 0, kRunFailed = 1, kUsage = 2, kAborted = 3 };

struct RunOptions {
  std::string scenario;
  std::string config;
  std::string out = ".";
  std::optional<double> duration;
  std::optional<int> horizon;
  std::optional<double> rate;
  std::optional<std::uint64_t> seed;
  bool no_timing = false;
  std::string dump_qp;
};

int run(const RunOptions& opt) {
  std::optional<ScenarioKind> kind;
  if (!opt.scenario.empty()) kind = parse_scenario_kind(opt.scenario);

  SimConfig config = opt.config.empty() ? default_sim_config(kind.value_or(ScenarioKind::hover))
                                        : load_config(opt.config, kind);
  if (opt.duration) {
    config.duration = *opt.duration;
    config.scenario.duration = *opt.duration;
  }
  if (opt.horizon) config.ocp.horizon = *opt.horizon;
  if (opt.rate) config.control_rate = *opt.rate;
  if (opt.seed) config.seed = *opt.seed;
  config.validate();

  const fs::path out_dir(opt.out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + out_dir.string() + "': " + ec.message());

  std::ofstream dump;
  if (!opt.dump_qp.empty()) {
    dump.open(opt.dump_qp);
    if (!dump) throw std::runtime_error("cannot open '" + opt.dump_qp + "' for writing");
  }

  const SimResult result = run_simulation(config, dump.is_open() ? &dump : nullptr);
  emit_outputs(result.log, result.summary, {out_dir / "log.csv", out_dir / "summary.json"}, !opt.no_timing);
  {
    std::ofstream cfg(out_dir / "config.json");
    cfg << config_to_json(config).dump(2) << "\n";
  }

  const RunSummary& s = result.summary;
  std::printf("scenario=%s rows=%ld rms_err=%.4f m max_err=%.4f m solver mean=%.3e s max=%.3e s "
              "failures=%ld violations=%ld\n",
              s.scenario.c_str(), s.rows, s.rms_position_error, s.max_position_error, s.solver_time_mean,
              s.solver_time_max, s.solver_failures, s.bound_violations);
  return run_ok(s) ? kOk : kRunFailed;
}

int check() {
  bool ok = true;
  for (const auto& r : oracles::run_all_checks()) {
    std::cout << oracles::format_check(r) << std::endl;
    ok = ok && r.passed;
  }
  return ok ? kOk : kRunFailed;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear MPC for a nano quadrotor: closed-loop simulation and oracle checks"};
  app.require_subcommand(1);

  RunOptions opt;
  auto* run_cmd = app.add_subcommand("run", "Run a closed-loop scenario");
  run_cmd->add_option("--scenario", opt.scenario, "hover | steps | cruise | helix")
      ->check(CLI::IsMember({"hover", "steps", "cruise", "helix"}));
  run_cmd->add_option("--config", opt.config, "JSON config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--out", opt.out, "Output directory")->capture_default_str();
  run_cmd->add_option("--duration", opt.duration, "Simulated time [s]");
  run_cmd->add_option("--horizon", opt.horizon, "Prediction horizon N");
  run_cmd->add_option("--rate", opt.rate, "Control rate [Hz]");
  run_cmd->add_option("--seed", opt.seed, "Noise seed");
  run_cmd->add_flag("--no-timing-columns", opt.no_timing, "Omit solver timing columns from the CSV");
  run_cmd->add_option("--dump-qp", opt.dump_qp, "Write every condensed QP to this file");

  auto* check_cmd = app.add_subcommand("check", "Run the built-in oracle suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return run(opt);
    if (*check_cmd) return check();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kUsage;
  } catch (const SimulationAborted& e) {
    std::cerr << e.what() << std::endl;
    return kAborted;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kAborted;
  }
  return kUsage;
}
