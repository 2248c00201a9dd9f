#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mcl/augmentation.hpp"
#include "mcl/contrastive.hpp"
#include "mcl/encoders.hpp"
#include "mcl/hin.hpp"
#include "mcl/tensor.hpp"

namespace mcl::train {

struct Interaction {
  int user = 0;
  int item = 0;
  bool operator==(const Interaction&) const = default;
};

// Per-user 80/20 train/test split with 10% of the train pool moved to
// validation. Users never lose their last training interaction.
struct InteractionSplit {
  int num_users = 0;
  int num_items = 0;
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  std::vector<std::vector<int>> train_by_user;  // sorted item ids
  std::vector<std::vector<int>> val_by_user;
  std::vector<std::vector<int>> test_by_user;

  bool in_train(int user, int item) const;
  bool known(int user, int item) const;  // train or validation or test
  void rebuild_index();
};

InteractionSplit split_interactions(const std::vector<Interaction>& interactions, int num_users,
                                    int num_items, uint64_t seed);

struct BprTriple {
  int user;
  int pos;
  int neg;
};

// (u, i) uniform over train; j rejection-sampled outside the user's train
// set, at most 100 tries per triple.
std::vector<BprTriple> sample_bpr_batch(const InteractionSplit& split, int batch, Rng& rng);

// sum of -ln sigma(y_ui - y_uj) over the batch plus lambda2 * ||theta||^2
// over `regularized`.
ad::Var bpr_loss(ad::Var user_reps, ad::Var item_reps, const std::vector<BprTriple>& triples,
                 double lambda2, const std::vector<ad::Var>& regularized);

enum class Fusion { Sum, Concat, MetaOnly };
enum class L2Scope { Embeddings, All };
enum class ModelKind { Mcl, BprMf };

struct TrainConfig {
  int d = 128;
  int batch = 2048;
  int epochs = 500;
  int patience = 20;
  double lr = 0.01;
  double lambda2 = 1e-4;
  double beta = 0.1;
  double mask_delta = 0.1;
  int prop_order = 2;
  bool mask_enabled = true;
  double tau = 0.7;
  double lambda1 = 0.5;
  bool double_exp = false;
  bool infonce_ablation = false;
  bool detach_augmentation = false;
  bool aggregate_projected = false;
  uint64_t seed = 1;
  bool no_mask = false;
  bool no_cl = false;
  bool no_1hop = false;
  bool no_meta = false;
  std::vector<int> eval_k = {10, 20};
  Fusion fusion = Fusion::Sum;
  L2Scope l2_scope = L2Scope::Embeddings;
  ModelKind model = ModelKind::Mcl;

  void validate() const;  // ConfigError on out-of-range values
  // Flat `key = value` text; unknown keys are errors.
  static TrainConfig from_file(const std::string& path);
  static TrainConfig from_text(const std::string& text);
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;  // byte-stable snapshot, keys in fixed order

  // Contrastive weight after ablation wiring: zero when the term is disabled
  // or either view is missing.
  double effective_beta() const;
};

// Every trainable array, in a fixed registration order shared by the
// optimizer and the checkpoint format.
struct ModelParams {
  std::vector<std::string> names;
  std::vector<ad::Tensor> tensors;

  ad::Tensor& find(const std::string& name);
  std::vector<std::pair<std::string, const ad::Tensor*>> named() const;
  std::vector<ad::Tensor*> pointers();
};

ModelParams init_params(const hin::Hin& hin, const std::vector<hin::MetaPath>& paths, int d,
                        uint64_t seed);

// Precomputed constant tensors for the learned path: one-hop attention
// blocks, per-path dense masks and normalized adjacencies, positive-pair
// masks. Built once per dataset + path set; immutable afterwards.
struct PathContext {
  hin::MetaPath path;
  hin::MetaPathGraph graph;
  size_t param_index;  // position of this path's scorer in ModelParams
  ad::Tensor mask;
  ad::Tensor norm_adj;
};

struct GraphContext {
  const hin::Hin* hin = nullptr;
  std::vector<enc::OneHopContext> one_hop;
  std::vector<PathContext> user_paths;
  std::vector<PathContext> item_paths;
  ad::Tensor pos_user;
  ad::Tensor pos_item;
  ad::Tensor identity_user;  // diagonal-only positives for the InfoNCE ablation
  ad::Tensor identity_item;
};

GraphContext build_graph_context(const hin::Hin& hin, const std::vector<hin::MetaPath>& paths);

struct EpochReport {
  int epoch = 0;
  double l_bpr = 0.0;
  double l_u = 0.0;
  double l_i = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  double val_recall20 = 0.0;
  double seconds = 0.0;
};

// Inputs of one optimization step, held explicitly so a step's loss is a
// pure function of (params, masks, batch) -- which is what the
// finite-difference checks differentiate.
struct StepInputs {
  aug::MaskVector user_mask;
  aug::MaskVector item_mask;
  std::vector<BprTriple> batch;
};

struct StepLosses {
  double l_bpr = 0.0;
  double l_u = 0.0;
  double l_i = 0.0;
  double total = 0.0;
};

class Trainer {
 public:
  Trainer(const GraphContext& ctx, const InteractionSplit& split, TrainConfig cfg);

  // Forward + loss for fixed step inputs; gradients (aligned with
  // params().names) are returned when grads != nullptr.
  StepLosses compute_loss(const StepInputs& inputs, std::vector<ad::Tensor>* grads);

  StepInputs draw_step_inputs();
  EpochReport train_epoch();

  struct FitResult {
    int best_epoch = -1;
    double best_val_recall20 = 0.0;
    std::vector<EpochReport> history;
  };
  // Runs up to cfg.epochs epochs with early stopping on validation
  // Recall@20 (patience cfg.patience); restores the best checkpoint.
  // Appends one JSON object per epoch to `jsonl` when given.
  FitResult fit(std::ostream* jsonl = nullptr);

  // Evaluation-mode representations (masking disabled) under the current
  // parameters: fused user and item embeddings for scoring.
  std::pair<ad::Tensor, ad::Tensor> final_reps();

  double validation_recall20();

  ModelParams& params() { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const InteractionSplit& split() const { return split_; }
  int batches_per_epoch() const;

 private:
  struct RegisteredVars;
  struct ViewReps;
  RegisteredVars make_vars(ad::Tape& tape, bool trainable);
  ViewReps forward_views(ad::Tape& tape, RegisteredVars& vars, const StepInputs* step) const;

  const GraphContext& ctx_;
  InteractionSplit split_;
  TrainConfig cfg_;
  ModelParams params_;
  ad::AdamState adam_;
  Rng mask_rng_;
  Rng sample_rng_;
  int epoch_ = 0;
};

}  // namespace mcl::train
