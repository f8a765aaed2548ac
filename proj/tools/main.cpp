#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace sarcnet;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"sarcnet: sarcasm detection on news headlines"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant_name;
  const auto resolve_variant = [&]() -> std::optional<Variant> {
    if (!variant_name) return std::nullopt;
    return parse_variant(*variant_name);
  };

  cli::StatsOptions stats;
  auto* stats_cmd = app.add_subcommand("stats", "Corpus statistics, embedding coverage and class word frequencies");
  stats_cmd->add_option("--dataset", stats.dataset, "Headlines JSON-lines file")->required();
  stats_cmd->add_option("--embeddings", stats.embeddings, "word2vec text-format vectors");
  stats_cmd->add_option("--top-k", stats.top_k, "Words listed per class")->check(CLI::PositiveNumber);
  stats_cmd->add_option("--manifest", stats.manifest, "Write the run manifest here instead of stderr");

  cli::TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Split, build vocabulary and embeddings, and fit a model");
  train_cmd->add_option("--dataset", train.dataset)->required();
  train_cmd->add_option("--config", train.config, "key = value config file");
  train_cmd->add_option("--out", train.out_dir, "Output directory")->required();
  train_cmd->add_option("--embeddings", train.embeddings);
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--variant", variant_name, "hybrid or baseline");

  cli::GridOptions grid;
  auto* grid_cmd = app.add_subcommand("grid", "Grid search over hyperparameters, ranked by validation accuracy");
  grid_cmd->add_option("--dataset", grid.dataset)->required();
  grid_cmd->add_option("--config", grid.config);
  grid_cmd->add_option("--out", grid.out_dir)->required();
  grid_cmd->add_option("--embeddings", grid.embeddings);
  grid_cmd->add_option("--seed", seed);
  grid_cmd->add_option("--variant", variant_name);
  grid_cmd->add_option("--budget", grid.budget, "Maximum number of cells trained");
  grid_cmd->add_option("--axis", grid.overrides, "key=v1,v2 (repeatable); replaces the default grid");

  cli::EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy, loss and confusion counts on one partition");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--dataset", eval.dataset)->required();
  eval_cmd->add_option("--split", eval.split, "Split manifest (default: split.txt beside the checkpoint)");
  eval_cmd->add_option("--partition", eval.partition, "train, val or test");
  eval_cmd->add_option("--manifest", eval.manifest);

  cli::PredictOptions pred;
  auto* pred_cmd = app.add_subcommand("predict", "Classify headlines");
  pred_cmd->add_option("--checkpoint", pred.checkpoint)->required();
  pred_cmd->add_option("--text", pred.texts)->required();

  cli::AttendOptions attend;
  auto* attend_cmd = app.add_subcommand("attend", "Export attention weights and a heatmap page");
  attend_cmd->add_option("--checkpoint", attend.checkpoint)->required();
  attend_cmd->add_option("--text", attend.texts);
  attend_cmd->add_option("--input", attend.input, "File with one headline per line");
  attend_cmd->add_option("--out", attend.out, "JSON-lines output; the heatmap is written to <out>.html")->required();

  cli::SelfcheckOptions check;
  auto* check_cmd = app.add_subcommand("selfcheck", "Finite-difference check of every layer and both toy models");
  check_cmd->add_option("--inject-fault", check.inject_fault)->group("");
  check_cmd->add_option("--manifest", check.manifest);

  auto* defaults_cmd = app.add_subcommand("defaults", "Print the default configuration file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*stats_cmd) return cli::cmd_stats(stats, std::cout, std::cerr);
    if (*train_cmd) {
      train.seed = seed;
      train.variant = resolve_variant();
      return cli::cmd_train(train, std::cout, std::cerr);
    }
    if (*grid_cmd) {
      grid.seed = seed;
      grid.variant = resolve_variant();
      return cli::cmd_grid(grid, std::cout, std::cerr);
    }
    if (*eval_cmd) return cli::cmd_eval(eval, std::cout, std::cerr);
    if (*pred_cmd) return cli::cmd_predict(pred, std::cout, std::cerr);
    if (*attend_cmd) return cli::cmd_attend(attend, std::cout, std::cerr);
    if (*check_cmd) return cli::cmd_selfcheck(check, std::cout, std::cerr);
    if (*defaults_cmd) {
      write_config(std::cout, ModelConfig{});
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::io);
  }
  return static_cast<int>(ExitCode::usage);
}
