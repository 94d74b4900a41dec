#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "neat/commands.hpp"

int main(int argc, char** argv) {
  using namespace neat::cli;
  CLI::App app{"neat_lab: nonlinear adapter laboratory"};
  app.require_subcommand(1);

  RunOptions run;
  std::uint64_t run_seed = 0;
  std::string run_out;
  auto* run_cmd = app.add_subcommand("run", "Pretrain, fine-tune, compare or sweep as described by a config file");
  run_cmd->add_option("--config", run.config_path, "Experiment config (JSON)")->required();
  auto* run_seed_opt = run_cmd->add_option("--seed", run_seed, "Replace the config's seed list with this seed");
  auto* run_out_opt = run_cmd->add_option("--out", run_out, "Output directory (default $NEAT_LAB_OUT or ./neat_lab_out)");

  VerifyOptions verify;
  std::size_t trials = 0;
  std::string verify_out;
  auto* verify_cmd = app.add_subcommand("verify", "Run the expressivity batteries (ReLU construction, sine approximation)");
  verify_cmd->add_option("--suite", verify.suite, "prop1, prop2 or all")->capture_default_str();
  auto* trials_opt = verify_cmd->add_option("--trials", trials, "Instances per suite (default 200 / 20)");
  verify_cmd->add_option("--seed", verify.seed, "Base seed")->capture_default_str();
  verify_cmd->add_flag("--planted", verify.planted, "prop2: plant an exactly representable target");
  auto* verify_out_opt = verify_cmd->add_option("--out", verify_out, "Write verify_report.json here");

  GradcheckOptions grad;
  std::string corrupt;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare autodiff against central finite differences");
  grad_cmd->add_option("--seed", grad.seed, "Seed")->capture_default_str();
  grad_cmd->add_option("--rounds", grad.rounds, "Rounds of the graph suite")->capture_default_str();
  grad_cmd->add_option("--max-dim", grad.max_dim, "Largest random dimension")->capture_default_str();
  // Negative-control hook for the test harness; not part of the documented interface.
  grad_cmd->add_option("--corrupt-op", corrupt)->group("");

  std::string checkpoint;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print a checkpoint summary");
  inspect_cmd->add_option("checkpoint", checkpoint, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (run_cmd->parsed()) {
    if (*run_seed_opt) run.seed = run_seed;
    if (*run_out_opt) run.out_dir = run_out;
    return cmd_run(run, std::cout, std::cerr);
  }
  if (verify_cmd->parsed()) {
    if (*trials_opt) verify.trials = trials;
    if (*verify_out_opt) verify.out_dir = verify_out;
    return cmd_verify(verify, std::cout, std::cerr);
  }
  if (grad_cmd->parsed()) {
    if (!corrupt.empty()) {
      grad.corrupt = neat::ad::parse_op(corrupt);
      if (!grad.corrupt) {
        std::cerr << "usage error: unknown op '" << corrupt << "'\n";
        return kExitUsage;
      }
    }
    return cmd_gradcheck(grad, std::cout, std::cerr);
  }
  return cmd_inspect(checkpoint, std::cout, std::cerr);
}
