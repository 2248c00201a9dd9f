#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mcl/tensor.hpp"
#include "mcl/trainer.hpp"

namespace mcl::eval {

// Top-K recommendations and ranking metrics for one evaluation pass.
struct RankingResult {
  std::vector<int> users;               // users with at least one target item
  std::vector<std::vector<int>> topk;   // per evaluated user, max(k_values) items
  std::vector<int> k_values;
  std::vector<double> recall;           // aggregate, parallel to k_values
  std::vector<double> ndcg;
  std::vector<std::vector<double>> per_user_recall;  // [k][evaluated user]
  std::vector<std::vector<double>> per_user_ndcg;
};

double recall_at_k(const std::vector<int>& ranked, const std::vector<int>& relevant_sorted, int k);
// DCG over binary relevance at 1/log2(rank+1), normalized by the ideal
// placement of min(|relevant|, k) items. Throws NoRelevantItems when the
// relevant set is empty.
double ndcg_at_k(const std::vector<int>& ranked, const std::vector<int>& relevant_sorted, int k);

// Scores every item for every user with targets (dot product of the
// representation rows), masks out `exclude_by_user`, and ranks the rest;
// ties break toward the smaller item id. Users without targets are skipped;
// all-empty targets raise EmptyTestSet.
RankingResult topk_rank(const ad::Tensor& user_embs, const ad::Tensor& item_embs,
                        const std::vector<std::vector<int>>& exclude_by_user,
                        const std::vector<std::vector<int>>& targets_by_user,
                        const std::vector<int>& k_values);

// Convenience: rank against the held-out test set, excluding train positives.
RankingResult evaluate_split(const ad::Tensor& user_embs, const ad::Tensor& item_embs,
                             const train::InteractionSplit& split,
                             const std::vector<int>& k_values);

// Adds ceil(ratio * |train|) synthetic interactions: for each sampled train
// edge (u, i), a partner item j the user has never touched (train,
// validation, test, or earlier noise). Original edges are kept, test and
// validation stay untouched. Users with no eligible item are skipped with a
// warning counted in the result.
struct NoiseInjection {
  train::InteractionSplit split;
  int added = 0;
  int skipped_saturated = 0;
};
NoiseInjection inject_noise(const train::InteractionSplit& split, double ratio, Rng& rng);

struct PerturbationSpec {
  enum class Kind { NoiseEdges, ExtraMetaPaths };
  Kind kind = Kind::NoiseEdges;
  double noise_ratio = 0.0;
  std::vector<std::string> added_paths;

  std::string label() const;
};

// One training run's headline numbers.
struct RunMetrics {
  std::vector<int> k_values;
  std::vector<double> recall;
  std::vector<double> ndcg;
  uint64_t seed = 0;
  double wall_seconds = 0.0;

  double recall_at(int k) const;
  double ndcg_at(int k) const;
};

struct RobustnessReport {
  struct Row {
    std::string condition;
    int k = 0;
    double recall = 0.0;
    double ndcg = 0.0;
    double rel_drop_pct = 0.0;  // relative recall drop vs the clean run
    uint64_t seed = 0;
    double wall_seconds = 0.0;
  };
  std::vector<Row> rows;

  std::string to_csv() const;
};

// Re-trains under each perturbation via the supplied runner and reports
// per-condition metrics with relative drops against the clean run.
RobustnessReport run_robustness_suite(
    const RunMetrics& clean, const std::vector<PerturbationSpec>& perturbations,
    const std::function<RunMetrics(const PerturbationSpec&)>& run_perturbed);

}  // namespace mcl::eval
