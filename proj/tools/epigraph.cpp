#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epigraph/commands.hpp"
#include "epigraph/config.hpp"
#include "epigraph/error.hpp"

using namespace epigraph;

int main(int argc, char** argv) {
  CLI::App app{"epigraph: relative pose regression on epipolar correspondence graphs"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  bool print_config = false;
  app.add_option("-c,--config", config_path, "JSON experiment config");
  app.add_option("-s,--set", overrides, "override a config key, e.g. --set train.epochs=3")
      ->allow_extra_args(false);
  app.add_flag("--print-config", print_config, "print the resolved config before running");

  auto* generate = app.add_subcommand("generate", "write a synthetic dataset under dataset.root");
  auto* train = app.add_subcommand("train", "train a model and write <train.output_dir>/best.ckpt");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint at every eval spacing");
  auto* embed = app.add_subcommand("export-embeddings", "write per-node embeddings of one layer");
  int layer = 0;
  std::string embed_out;
  embed->add_option("--layer", layer, "0 is the input features, L the last message-passing layer")
      ->required();
  embed->add_option("-o,--out", embed_out, "output CSV path");
  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic and numerical gradients");
  bool corrupt = false;
  gradcheck->add_flag("--corrupt", corrupt, "perturb one analytic gradient; the check must fail");
  auto* bench = app.add_subcommand("bench-knn", "train and evaluate every preset on every k-NN variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    ExperimentConfig c = config_path.empty() ? parse_config("", overrides) : load_config(config_path, overrides);
    if (corrupt) c.gradcheck.corrupt = true;
    if (print_config) std::cout << format_config(c);

    if (generate->parsed()) return cmd_generate(c, std::cout);
    if (train->parsed()) return cmd_train(c, std::cout);
    if (eval->parsed()) return cmd_eval(c, std::cout);
    if (embed->parsed()) return cmd_export_embeddings(c, layer, embed_out, std::cout);
    if (gradcheck->parsed()) return cmd_gradcheck(c, std::cout);
    if (bench->parsed()) return cmd_bench_knn(c, std::cout);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
