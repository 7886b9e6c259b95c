// Command-line driver: generate, run, evaluate, sweep.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csapo/csapo.hpp"

namespace {

struct RunFlags {
  std::string config;
  std::string game;
  std::vector<std::int64_t> T;
  std::string mode;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::int64_t snapshot_every = -1;
  bool trace_solver = false;
  std::optional<double> V, eta, theta, delta;
  int jobs = 0;
  std::optional<double> tol;
  std::string trigger;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "TOML-style experiment file")->check(CLI::ExistingFile);
  cmd->add_option("--game", f.game, "game JSON (otherwise generated from the config's [game] spec)");
  cmd->add_option("--T", f.T, "episodes; several values run a grid")->delimiter(',');
  cmd->add_option("--mode", f.mode, "coupled or side")->check(CLI::IsMember({"coupled", "side"}));
  cmd->add_option("--seed", f.seeds, "run seeds")->delimiter(',');
  cmd->add_option("--out", f.out, "output directory (default $CSAPO_OUTPUT_ROOT or ./csapo-out)");
  cmd->add_option("--snapshot-every", f.snapshot_every,
                  "keep q-hat estimates and dump occupancies every S episodes");
  cmd->add_flag("--trace-solver", f.trace_solver, "append solver diagnostics to the run CSV");
  cmd->add_option("--V", f.V);
  cmd->add_option("--eta", f.eta);
  cmd->add_option("--theta", f.theta);
  cmd->add_option("--delta", f.delta);
  cmd->add_option("--jobs", f.jobs, "runs executed in parallel");
  cmd->add_option("--trigger", f.trigger, "epoch trigger: literal or require-visit")
      ->check(CLI::IsMember({"literal", "require-visit"}));
}

csapo::ExperimentConfig build_config(const RunFlags& f) {
  csapo::ExperimentConfig cfg = f.config.empty() ? csapo::ExperimentConfig{}
                                                 : csapo::load_config_file(f.config);
  if (!f.game.empty()) cfg.game_path = f.game;
  if (!f.T.empty()) cfg.episodes = f.T;
  if (!f.mode.empty()) cfg.mode = csapo::constraint_mode_from_string(f.mode);
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.snapshot_every >= 0) cfg.snapshot_every = f.snapshot_every;
  if (f.trace_solver) cfg.trace_solver = true;
  if (f.V) cfg.V = f.V;
  if (f.eta) cfg.eta = f.eta;
  if (f.theta) cfg.theta = f.theta;
  if (f.delta) cfg.delta = *f.delta;
  if (f.jobs > 0) cfg.jobs = f.jobs;
  if (f.tol) cfg.comparator_tol = *f.tol;
  if (f.trigger == "literal") cfg.trigger = csapo::EpochTrigger::kLiteral;
  if (f.trigger == "require-visit") cfg.trigger = csapo::EpochTrigger::kRequireVisit;
  cfg.check();
  return cfg;
}

void print_slopes(const nlohmann::json& summary) {
  for (const auto& row : summary["by_T"]) {
    std::printf("T=%lld  runs=%zu  mean_regret=%.6g  mean_violation=%.6g  max_lambda=%.6g\n",
                static_cast<long long>(row["T"].get<std::int64_t>()),
                row["runs"].get<std::size_t>(), row["mean_regret"].get<double>(),
                row["mean_violation"].get<double>(), row["max_lambda"].get<double>());
  }
  for (const char* k : {"regret", "violation"}) {
    const auto& s = summary["slopes"][k];
    if (!s.is_null()) std::printf("%s slope %.4f\n", k, s["slope"].get<double>());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimistic primal-dual learning for constrained layered Markov games"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "write a random game as JSON");
  csapo::GameSpec spec;
  std::string gen_config, gen_out = "game.json";
  std::vector<double> side;
  gen->add_option("--config", gen_config, "take the [game] table from this file")
      ->check(CLI::ExistingFile);
  gen->add_option("--min-layers", spec.min_layers)->delimiter(',');
  gen->add_option("--max-layers", spec.max_layers)->delimiter(',');
  gen->add_option("--min-actions", spec.min_actions);
  gen->add_option("--max-actions", spec.max_actions);
  gen->add_option("--budget", spec.budget);
  gen->add_option("--margin", spec.margin);
  gen->add_option("--seed", spec.seed);
  gen->add_option("--noise-width", spec.noise_width);
  gen->add_option("--side-budgets", side)->delimiter(',')->expected(2);
  gen->add_option("--out", gen_out);

  auto* run = app.add_subcommand("run", "run the learner for every (T, seed)");
  RunFlags run_flags;
  add_run_flags(run, run_flags);

  auto* eval = app.add_subcommand("evaluate", "compute metrics for the runs in a directory");
  std::string eval_dir, eval_game;
  double eval_tol = 1e-3;
  eval->add_option("--out", eval_dir, "run directory")->required();
  eval->add_option("--game", eval_game, "game JSON (default <out>/game.json)");
  eval->add_option("--tol", eval_tol, "comparator exploitability tolerance");

  auto* sweep = app.add_subcommand("sweep", "run a (T, seed) grid, resuming, then evaluate");
  RunFlags sweep_flags;
  add_run_flags(sweep, sweep_flags);
  sweep->add_option("--tol", sweep_flags.tol, "comparator exploitability tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (!gen_config.empty()) {
        const auto base = csapo::load_config_file(gen_config).game_spec;
        // Flags given on the command line still win.
        auto merged = base;
        if (gen->count("--min-layers")) merged.min_layers = spec.min_layers;
        if (gen->count("--max-layers")) merged.max_layers = spec.max_layers;
        if (gen->count("--min-actions")) merged.min_actions = spec.min_actions;
        if (gen->count("--max-actions")) merged.max_actions = spec.max_actions;
        if (gen->count("--budget")) merged.budget = spec.budget;
        if (gen->count("--margin")) merged.margin = spec.margin;
        if (gen->count("--seed")) merged.seed = spec.seed;
        if (gen->count("--noise-width")) merged.noise_width = spec.noise_width;
        spec = merged;
      }
      if (side.size() == 2) spec.side_budgets = csapo::SideBudgets{side[0], side[1]};
      const auto check = csapo::cmd_generate(spec, gen_out);
      std::printf("wrote %s\nfeasibility margin: coupled %.6g", gen_out.c_str(),
                  check.coupled_slack);
      if (spec.side_budgets) {
        std::printf(", min-player %.6g, max-player %.6g", check.min_slack, check.max_slack);
      }
      std::printf(" (required %.6g)\n", spec.margin);
      return 0;
    }
    if (run->parsed()) {
      const auto cfg = build_config(run_flags);
      for (const auto& p : csapo::cmd_run(cfg)) std::printf("wrote %s\n", p.string().c_str());
      return 0;
    }
    if (eval->parsed()) {
      const auto game = eval_game.empty() ? (std::filesystem::path(eval_dir) / "game.json").string()
                                          : eval_game;
      print_slopes(csapo::cmd_evaluate(eval_dir, game, eval_tol));
      return 0;
    }
    if (sweep->parsed()) {
      print_slopes(csapo::cmd_sweep(build_config(sweep_flags)));
      return 0;
    }
  } catch (const csapo::NonConvergedError& e) {
    std::cerr << "error: " << e.what() << " (residual " << e.residual() << ")\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
