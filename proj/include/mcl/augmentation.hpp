#pragma once

#include <cstdint>
#include <vector>

#include "mcl/common.hpp"
#include "mcl/hin.hpp"
#include "mcl/tensor.hpp"

namespace mcl::aug {

// Bernoulli keep/drop flags over the nodes of one type, drawn i.i.d. with
// P(keep) = 1 - delta. Resampled every training step.
struct MaskVector {
  std::vector<uint8_t> keep;
  double delta = 0.0;

  int size() const { return static_cast<int>(keep.size()); }
};

struct AugmentedEmbedding {
  ad::Var matrix;
  int order = 0;
};

MaskVector sample_mask(int num_nodes, double delta, Rng& rng);

// Whole-row masking with inverse-keep scaling: row i becomes E_i / (1-delta)
// when kept and a zero row when dropped.
ad::Var apply_mask(ad::Var embedding, const MaskVector& mask);

// L-step random propagation over the normalized subgraph adjacency,
// averaging orders 0..L. `norm_adj` is the constant D^{-1/2} A D^{-1/2}
// already on the tape.
AugmentedEmbedding propagate_with(ad::Var norm_adj, ad::Var embedding, int order);

// Convenience overload that densifies the subgraph adjacency itself.
AugmentedEmbedding propagate(const hin::MetaPathGraph& graph, ad::Var embedding, int order);

}  // namespace mcl::aug
