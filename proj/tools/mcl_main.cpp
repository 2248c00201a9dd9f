// Command-line front end. Links the public C API only.
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mcl/mcl.h"

namespace {

struct EngineDeleter {
  void operator()(mcl_engine* e) const { mcl_engine_free(e); }
};
using EnginePtr = std::unique_ptr<mcl_engine, EngineDeleter>;

struct CommonArgs {
  std::string dataset;
  std::string out_dir;
  uint64_t seed = 1;
  std::string config_file;
  std::vector<std::string> overrides;  // key=value pairs
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--dataset", args.dataset,
                  "ml-100k directory, fixture directory, or manifest file")
      ->required();
  cmd->add_option("--out-dir", args.out_dir, "directory for run artifacts")->required();
  cmd->add_option("--seed", args.seed, "RNG seed")->required();
  cmd->add_option("--config", args.config_file, "config file (key = value lines)");
  cmd->add_option("--set", args.overrides, "config override, key=value (repeatable)");
}

int fail_with(const mcl_engine* engine, mcl_status status) {
  std::fprintf(stderr, "error: %s\n", mcl_last_error(engine));
  return static_cast<int>(status);
}

// Applies config file, CLI overrides, and the seed, in that order.
int configure(mcl_engine* engine, const CommonArgs& args) {
  if (!args.config_file.empty()) {
    if (mcl_status s = mcl_config_load(engine, args.config_file.c_str()); s != MCL_OK)
      return fail_with(engine, s);
  }
  for (const std::string& kv : args.overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      return 2;
    }
    if (mcl_status s = mcl_config_set(engine, kv.substr(0, eq).c_str(),
                                      kv.substr(eq + 1).c_str());
        s != MCL_OK)
      return fail_with(engine, s);
  }
  if (mcl_status s = mcl_config_set(engine, "seed", std::to_string(args.seed).c_str());
      s != MCL_OK)
    return fail_with(engine, s);
  if (mcl_status s = mcl_load_dataset(engine, args.dataset.c_str()); s != MCL_OK)
    return fail_with(engine, s);
  return 0;
}

void print_metrics(const mcl_engine* engine) {
  for (int k : {10, 20}) {
    const double recall = mcl_metric(engine, "recall", k);
    const double ndcg = mcl_metric(engine, "ndcg", k);
    if (recall >= 0.0) std::printf("recall@%d=%.6f ndcg@%d=%.6f\n", k, recall, k, ndcg);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{std::string("MCL heterogeneous-graph recommender (") + mcl_version() + ")"};
  cli.require_subcommand(1);

  CommonArgs args;
  std::string checkpoint, out_path, grid;
  std::vector<double> noise_ratios;
  bool extra_paths = false;

  CLI::App* train = cli.add_subcommand("train", "train a model and evaluate the test split");
  add_common(train, args);

  CLI::App* evaluate = cli.add_subcommand("evaluate", "re-evaluate a saved checkpoint");
  add_common(evaluate, args);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint.bin to load")->required();

  CLI::App* robustness =
      cli.add_subcommand("robustness", "clean run plus noise/meta-path perturbations");
  add_common(robustness, args);
  robustness->add_option("--noise", noise_ratios,
                         "noise ratio, fraction of train edges (repeatable)");
  robustness->add_flag("--extra-paths", extra_paths,
                       "add the dataset's additional meta-paths as one condition");

  CLI::App* ablate =
      cli.add_subcommand("ablate", "full model plus the four component ablations");
  add_common(ablate, args);

  CLI::App* sweep = cli.add_subcommand("sweep", "hyperparameter grid, best by validation");
  add_common(sweep, args);
  sweep->add_option("--grid", grid, "e.g. tau=0.5,0.55;lr=0.001,0.01;L=0,1,2;d=64,128")
      ->required();

  CLI::App* export_cmd = cli.add_subcommand("export-embeddings",
                                            "dump final user/item representations as TSV");
  add_common(export_cmd, args);
  export_cmd->add_option("--checkpoint", checkpoint, "checkpoint.bin to load")->required();
  export_cmd->add_option("--out", out_path, "output TSV path")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 2;  // command-line problems are config errors
  }

  EnginePtr engine(mcl_engine_new());
  if (int rc = configure(engine.get(), args); rc != 0) return rc;

  mcl_status status = MCL_OK;
  if (cli.got_subcommand(train)) {
    status = mcl_run_train(engine.get(), args.out_dir.c_str());
    if (status == MCL_OK) print_metrics(engine.get());
  } else if (cli.got_subcommand(evaluate)) {
    status = mcl_run_evaluate(engine.get(), checkpoint.c_str(), args.out_dir.c_str());
    if (status == MCL_OK) print_metrics(engine.get());
  } else if (cli.got_subcommand(robustness)) {
    status = mcl_run_robustness(engine.get(), args.out_dir.c_str(), noise_ratios.data(),
                                noise_ratios.size(), extra_paths ? 1 : 0);
  } else if (cli.got_subcommand(ablate)) {
    status = mcl_run_ablate(engine.get(), args.out_dir.c_str());
  } else if (cli.got_subcommand(sweep)) {
    status = mcl_run_sweep(engine.get(), args.out_dir.c_str(), grid.c_str());
  } else if (cli.got_subcommand(export_cmd)) {
    status = mcl_export_embeddings(engine.get(), checkpoint.c_str(), out_path.c_str());
  }
  if (status != MCL_OK) return fail_with(engine.get(), status);
  return 0;
}
