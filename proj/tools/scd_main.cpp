// Command-line entry point: train, evaluate, predict, synth-gen, ablate.
// Any `--section.key value` pair not consumed by a command flag becomes a config override.

#include <CLI11.hpp>

#include <iostream>

#include "scd/commands.hpp"
#include "scd/errors.hpp"

namespace {

constexpr int kExitUser = 1;
constexpr int kExitRuntime = 2;

void add_common(CLI::App* app, scd::CommonOptions& options, std::string& config, std::string& out,
                std::string& run_dir) {
  app->add_option("--config", config, "JSON config file");
  app->add_option("--seed", options.seed, "Seed for data order, augmentation and initialization");
  app->add_option("--out", out, "Parent directory for the timestamped run directory")->capture_default_str();
  app->add_option("--run-dir", run_dir, "Write into exactly this directory");
  app->allow_extras();
}

std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (size_t i = 0; i < extras.size(); ++i) {
    const auto& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() <= 2)
      scd::fail(scd::ErrorKind::ConfigError, "unexpected argument '" + arg + "'");
    const auto eq = arg.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
      continue;
    }
    if (i + 1 >= extras.size()) scd::fail(scd::ErrorKind::ConfigError, "override '" + arg + "' needs a value");
    out.emplace_back(arg.substr(2), extras[++i]);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic change detection: training, evaluation, prediction and ablation"};
  app.require_subcommand(1);

  scd::CommonOptions options;
  std::string config, out = "runs", run_dir;

  auto* train = app.add_subcommand("train", "Train a model and write RunLog, checkpoints and metrics");
  add_common(train, options, config, out, run_dir);

  scd::EvaluateOptions eval;
  std::string eval_checkpoint;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a dataset split");
  add_common(evaluate, options, config, out, run_dir);
  evaluate->add_option("--checkpoint", eval_checkpoint, "Checkpoint file");
  evaluate->add_option("--split", eval.split, "Split file (default: data.eval_split)");
  evaluate->add_flag("--oracle", eval.oracle, "Score the ground truth against itself");

  scd::PredictOptions predict;
  auto* pred = app.add_subcommand("predict", "Write semantic and change maps for one image pair");
  add_common(pred, options, config, out, run_dir);
  pred->add_option("--checkpoint", predict.checkpoint, "Checkpoint file")->required();
  pred->add_option("--im1", predict.image1, "First-date image (PNG)")->required();
  pred->add_option("--im2", predict.image2, "Second-date image (PNG)")->required();

  auto* synth = app.add_subcommand("synth-gen", "Generate a synthetic dataset");
  add_common(synth, options, config, out, run_dir);

  std::string plan;
  auto* ablate = app.add_subcommand("ablate", "Run every plan variant for every seed and tabulate");
  add_common(ablate, options, config, out, run_dir);
  ablate->add_option("--plan", plan, "Ablation plan (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUser;
  }

  try {
    auto* active = app.get_subcommands().front();
    options.overrides = parse_overrides(active->remaining());
    if (!config.empty()) options.config = config;
    options.out = out;
    if (!run_dir.empty()) options.run_dir = run_dir;

    std::filesystem::path result;
    int code = 0;
    if (active == train) {
      result = scd::cmd_train(options);
    } else if (active == evaluate) {
      if (!eval_checkpoint.empty()) eval.checkpoint = eval_checkpoint;
      result = scd::cmd_evaluate(options, eval);
      std::cout << scd::read_json(result / "metrics.json").dump(2) << '\n';
    } else if (active == pred) {
      result = scd::cmd_predict(options, predict);
    } else if (active == synth) {
      result = scd::cmd_synth_gen(options);
    } else {
      const auto r = scd::cmd_ablate(options, plan);
      result = r.run_dir;
      std::cout << scd::format_ablation_table(r.rows);
      if (r.any_failed) code = kExitRuntime;
    }
    std::cout << result.string() << '\n';
    return code;
  } catch (const scd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_user_error() ? kExitUser : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
