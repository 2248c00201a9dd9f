#include "mcl/augmentation.hpp"

namespace mcl::aug {

MaskVector sample_mask(int num_nodes, double delta, Rng& rng) {
  if (delta < 0.0 || delta >= 1.0)
    fail(ErrorCode::InvalidDelta, "mask probability must satisfy 0 <= delta < 1, got " +
                                      std::to_string(delta));
  MaskVector mask;
  mask.delta = delta;
  mask.keep.resize(num_nodes);
  for (int i = 0; i < num_nodes; ++i) mask.keep[i] = rng.bernoulli(1.0 - delta) ? 1 : 0;
  return mask;
}

ad::Var apply_mask(ad::Var embedding, const MaskVector& mask) {
  const ad::Tensor& e = embedding.tape->value(embedding.id);
  if (e.rows != mask.size())
    fail(ErrorCode::LengthMismatch, "apply_mask: mask covers " + std::to_string(mask.size()) +
                                        " nodes but embedding has " + std::to_string(e.rows) +
                                        " rows");
  const double kept_scale = 1.0 / (1.0 - mask.delta);
  std::vector<double> factors(mask.keep.size());
  for (size_t i = 0; i < factors.size(); ++i) factors[i] = mask.keep[i] ? kept_scale : 0.0;
  return ad::scale_rows(embedding, std::move(factors));
}

AugmentedEmbedding propagate_with(ad::Var norm_adj, ad::Var embedding, int order) {
  if (order < 0)
    fail(ErrorCode::NegativeOrder, "propagation order must be non-negative");
  const ad::Tensor& a = norm_adj.tape->value(norm_adj.id);
  const ad::Tensor& e = embedding.tape->value(embedding.id);
  if (a.rows != a.cols || a.cols != e.rows)
    fail(ErrorCode::ShapeMismatch, "propagate: adjacency is " + std::to_string(a.rows) + "x" +
                                       std::to_string(a.cols) + " but embedding has " +
                                       std::to_string(e.rows) + " rows");
  ad::Var acc = embedding;
  ad::Var current = embedding;
  for (int l = 0; l < order; ++l) {
    current = ad::matmul(norm_adj, current);
    acc = ad::add(acc, current);
  }
  return {ad::scalar_mul(acc, 1.0 / (order + 1)), order};
}

AugmentedEmbedding propagate(const hin::MetaPathGraph& graph, ad::Var embedding, int order) {
  ad::Tape& tape = *embedding.tape;
  ad::Var norm_adj = tape.constant(hin::normalized_adjacency(graph));
  return propagate_with(norm_adj, embedding, order);
}

}  // namespace mcl::aug
