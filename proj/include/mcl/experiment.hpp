#pragma once

#include <string>
#include <vector>

#include "mcl/dataset.hpp"
#include "mcl/evaluation.hpp"
#include "mcl/trainer.hpp"

namespace mcl::app {

const char* version_string();

struct RunRecord {
  std::string run_id;
  std::string condition = "clean";
  std::string out_dir;
  std::string config_text;  // byte-exact snapshot of the effective config
  std::string version;
  uint64_t seed = 0;
  eval::RunMetrics metrics;        // held-out test metrics
  double best_val_recall20 = 0.0;  // model-selection signal
  int best_epoch = -1;
  std::string checkpoint_path;
  double started_unix = 0.0;
  double finished_unix = 0.0;
};

struct RunOptions {
  std::string out_dir;           // parent directory for run artifacts
  std::string run_id;            // derived from dataset/condition/seed when empty
  std::string condition = "clean";
  bool use_extra_paths = false;  // add the dataset's additional meta-paths
  double noise_ratio = 0.0;      // > 0: inject noise edges into the train split
  bool export_embeddings = true;
  bool write_artifacts = true;
};

// split -> rebuild the interaction edges from the train split (plus any
// injected noise) -> build subgraphs -> train -> evaluate -> persist.
// Artifacts: out/<run-id>/{config.txt, log.jsonl, metrics.csv,
// checkpoint.bin, embeddings.tsv}.
RunRecord run_experiment(const Dataset& dataset, const train::TrainConfig& cfg,
                         const RunOptions& opts);

// Loads a checkpoint and re-evaluates the held-out test set. The meta-path
// set is taken from the checkpoint's parameter names, so runs produced under
// the redundant-path conditions evaluate as trained.
RunRecord evaluate_checkpoint(const Dataset& dataset, const train::TrainConfig& cfg,
                              const std::string& checkpoint_path, const RunOptions& opts);

// Rebuilds evaluation-mode representations from a checkpoint and dumps them
// as TSV (external id, type, vector).
void export_embeddings_from_checkpoint(const Dataset& dataset, const train::TrainConfig& cfg,
                                       const std::string& checkpoint_path,
                                       const std::string& out_path);

// Hyperparameter sweep over the cross product of the non-empty grids;
// missing grids fall back to the base config's value. Partial results are
// durable: every run persists its own directory as it finishes. Writes
// sweep_summary.csv with a best-by-validation marker.
struct SweepGrid {
  std::vector<int> prop_orders;
  std::vector<double> taus;
  std::vector<double> lrs;
  std::vector<int> dims;

  // "tau=0.5,0.55;lr=0.001,0.01;L=0,1,2;d=64,128"
  static SweepGrid parse(const std::string& spec);
};
std::vector<RunRecord> run_sweep(const Dataset& dataset, const train::TrainConfig& base,
                                 const SweepGrid& grid, const std::string& out_dir);

// Full model plus the four single-component ablations; one comparison CSV.
std::vector<RunRecord> run_ablations(const Dataset& dataset, const train::TrainConfig& cfg,
                                     const std::string& out_dir);

// Clean run plus one run per perturbation; relative drops in robustness.csv.
eval::RobustnessReport run_robustness(const Dataset& dataset, const train::TrainConfig& cfg,
                                      const std::vector<eval::PerturbationSpec>& perturbations,
                                      const std::string& out_dir);

// TSV embedding dump: external node id, type name, then the representation.
void export_embeddings_tsv(const hin::Hin& hin, const ad::Tensor& user_reps,
                           const ad::Tensor& item_reps, const std::string& path);

// Dataset HIN with the interaction relation's edges replaced by the given
// list; node indexing is preserved.
hin::Hin rebuild_with_interactions(const Dataset& dataset,
                                   const std::vector<train::Interaction>& interactions);

}  // namespace mcl::app
