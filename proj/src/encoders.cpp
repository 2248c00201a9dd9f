#include "mcl/encoders.hpp"

#include <numeric>

namespace mcl::enc {

using ad::Tensor;
using ad::Var;

std::vector<OneHopContext> build_one_hop_contexts(const hin::Hin& hin) {
  std::vector<OneHopContext> contexts(hin.num_types());
  for (hin::TypeId t = 0; t < hin.num_types(); ++t) contexts[t].target_type = t;
  for (hin::RelId r = 0; r < hin.num_relations(); ++r) {
    const auto [src_t, dst_t] = hin.step_types({r, false});
    if (src_t == dst_t) {
      // union of both directions as one neighbor set
      Tensor mask = hin.relation_mask(r, false);
      Tensor rev = hin.relation_mask(r, true);
      for (size_t i = 0; i < mask.size(); ++i)
        if (rev.data[i] != 0.0) mask.data[i] = 1.0;
      contexts[src_t].blocks.push_back({r, src_t, std::move(mask)});
      continue;
    }
    contexts[src_t].blocks.push_back({r, dst_t, hin.relation_mask(r, false)});
    contexts[dst_t].blocks.push_back({r, src_t, hin.relation_mask(r, true)});
  }
  return contexts;
}

namespace {

// LeakyReLU(a^T [h_e || h_w]) decomposed as the outer sum of the two halves
// of the scorer applied to target and neighbor features.
Var pairwise_scores(Var target_feats, Var neighbor_feats, Var scorer) {
  ad::Tape& tape = *scorer.tape;
  const Tensor& a = tape.value(scorer.id);
  const int d = tape.value(target_feats.id).cols;
  if (a.rows != 2 * d || a.cols != 1)
    fail(ErrorCode::ShapeMismatch, "attention scorer must be a 2d x 1 vector");
  std::vector<int> lo(d), hi(d);
  std::iota(lo.begin(), lo.end(), 0);
  std::iota(hi.begin(), hi.end(), d);
  Var u = ad::matmul(target_feats, ad::gather_rows(scorer, lo));
  Var v = ad::matmul(neighbor_feats, ad::gather_rows(scorer, hi));
  return ad::leaky_relu(ad::outer_add(u, v), 0.2);
}

}  // namespace

OneHopResult one_hop_encode(const std::vector<OneHopContext>& contexts,
                            const std::vector<ad::Var>& embeddings_by_type,
                            const OneHopVars& params, bool aggregate_projected) {
  if (contexts.empty() || embeddings_by_type.size() != contexts.size())
    fail(ErrorCode::MissingEmbedding, "one_hop_encode: need one embedding table per node type");
  ad::Tape& tape = *embeddings_by_type[0].tape;

  OneHopResult result;
  for (const OneHopContext& ctx : contexts) {
    Var h_target = embeddings_by_type[ctx.target_type];
    const Tensor& target_value = tape.value(h_target.id);
    if (ctx.blocks.empty()) {
      // no relations touch this type: sigma(0) rows
      result.by_type.push_back(tape.constant(Tensor(target_value.rows, target_value.cols)));
      result.attention_by_type.push_back(tape.constant(Tensor(target_value.rows, 0)));
      continue;
    }
    std::vector<Var> scores, masks, neighbor_feats;
    for (const OneHopBlock& block : ctx.blocks) {
      Var h_src = embeddings_by_type[block.source_type];
      if (static_cast<size_t>(params.projection.size()) <= static_cast<size_t>(block.rel))
        fail(ErrorCode::MissingEmbedding, "one_hop_encode: missing per-relation parameters");
      Var projected = ad::matmul(h_src, ad::transpose(params.projection[block.rel]));
      scores.push_back(pairwise_scores(h_target, projected, params.scorer[block.rel]));
      masks.push_back(tape.constant_ref(&block.mask));
      neighbor_feats.push_back(aggregate_projected ? projected : h_src);
    }
    Var attention = ad::masked_row_softmax(ad::concat_cols(scores), ad::concat_cols(masks));
    Var h1 = ad::elu(ad::matmul(attention, ad::concat_rows(neighbor_feats)));
    result.by_type.push_back(h1);
    result.attention_by_type.push_back(attention);
  }
  return result;
}

NodeLevelResult node_level_encode(ad::Var adjacency_mask, ad::Var embeddings, ad::Var scorer) {
  ad::Tape& tape = *embeddings.tape;
  const Tensor& mask = tape.value(adjacency_mask.id);
  const Tensor& e = tape.value(embeddings.id);
  if (mask.rows != mask.cols || mask.rows != e.rows)
    fail(ErrorCode::ShapeMismatch, "node_level_encode: mask must be n x n over the embedding rows");
  Var scores = pairwise_scores(embeddings, embeddings, scorer);
  Var attention = ad::masked_row_softmax(scores, adjacency_mask);
  return {ad::elu(ad::matmul(attention, embeddings)), attention};
}

FusedEmbedding semantic_fuse(const std::vector<ad::Var>& path_embeddings,
                             const SemanticVars& params) {
  if (path_embeddings.empty())
    fail(ErrorCode::EmptyPathList, "semantic_fuse: need at least one path embedding");
  ad::Tape& tape = *path_embeddings[0].tape;
  const Tensor& first = tape.value(path_embeddings[0].id);
  for (ad::Var p : path_embeddings)
    if (!tape.value(p.id).same_shape(first))
      fail(ErrorCode::ShapeMismatch, "semantic_fuse: path embeddings differ in shape");

  const int n = first.rows;
  std::vector<Var> importance;
  importance.reserve(path_embeddings.size());
  for (ad::Var h : path_embeddings) {
    Var hidden = ad::tanh_op(ad::add_rowvec(ad::matmul(h, ad::transpose(params.w)), params.b));
    Var per_node = ad::matmul(hidden, params.q);  // n x 1
    importance.push_back(ad::scalar_mul(ad::sum_all(per_node), 1.0 / n));
  }
  Var gamma = ad::row_softmax(ad::concat_cols(importance));  // 1 x N
  Var gamma_col = ad::transpose(gamma);

  Var fused;
  for (size_t j = 0; j < path_embeddings.size(); ++j) {
    Var gj = ad::gather_rows(gamma_col, {static_cast<int>(j)});
    Var term = ad::mul(ad::broadcast_scalar(gj, first.rows, first.cols), path_embeddings[j]);
    fused = j == 0 ? term : ad::add(fused, term);
  }

  FusedEmbedding out;
  out.h = fused;
  const Tensor& g = tape.value(gamma.id);
  out.gamma.assign(g.data.begin(), g.data.end());
  return out;
}

}  // namespace mcl::enc
