#pragma once

#include <vector>

#include "mcl/hin.hpp"
#include "mcl/tensor.hpp"

namespace mcl::enc {

// One attention block of the one-hop view: target nodes of one type
// attending over the neighbors they reach through one relation step.
// Self-relations collapse both directions into a single block.
struct OneHopBlock {
  hin::RelId rel = -1;
  hin::TypeId source_type = -1;
  ad::Tensor mask;  // n_target x n_source incidence
};

struct OneHopContext {
  hin::TypeId target_type = -1;
  std::vector<OneHopBlock> blocks;
};

// One context per node type, deterministic block order (relation id, forward
// direction first).
std::vector<OneHopContext> build_one_hop_contexts(const hin::Hin& hin);

// Per-relation parameters already registered on the tape.
struct OneHopVars {
  std::vector<ad::Var> projection;  // P_r, d x d
  std::vector<ad::Var> scorer;      // a_r, 2d x 1
};

struct OneHopResult {
  std::vector<ad::Var> by_type;            // h^1 per node type
  std::vector<ad::Var> attention_by_type;  // row-stochastic over concatenated neighbors
};

// Relational attention over one-hop neighbors: scores use the projected
// neighbor, aggregation uses the raw neighbor embedding unless
// `aggregate_projected` is set.
OneHopResult one_hop_encode(const std::vector<OneHopContext>& contexts,
                            const std::vector<ad::Var>& embeddings_by_type,
                            const OneHopVars& params, bool aggregate_projected = false);

struct NodeLevelResult {
  ad::Var h;
  ad::Var attention;
};

// Attention over one meta-path subgraph on (augmented) embeddings; isolated
// nodes come out as sigma(0) = 0 rows.
NodeLevelResult node_level_encode(ad::Var adjacency_mask, ad::Var embeddings, ad::Var scorer);

struct SemanticVars {
  ad::Var w;  // d x d
  ad::Var b;  // 1 x d
  ad::Var q;  // d x 1
};

struct FusedEmbedding {
  ad::Var h;
  std::vector<double> gamma;  // per-path weights, sums to 1
};

// Meta-path importance weighting: w_rho = mean_e q^T tanh(W h_e + b),
// gamma = softmax(w), output = sum_j gamma_j h^{rho_j}.
FusedEmbedding semantic_fuse(const std::vector<ad::Var>& path_embeddings,
                             const SemanticVars& params);

}  // namespace mcl::enc
