#pragma once

#include "mcl/tensor.hpp"

namespace mcl::cl {

// Two-layer projection into the contrast space. One parameter set is shared
// by both views and reused for every node type.
struct ProjectionVars {
  ad::Var w1;  // d x d
  ad::Var b1;  // 1 x d
  ad::Var w2;  // d x d
  ad::Var b2;  // 1 x d
};

// W2 * ELU(W1 h + b1) + b2, applied rowwise.
ad::Var project(ad::Var h, const ProjectionVars& params);

// Row-normalized cross-view similarities. sim1 anchors view 1; sim2 anchors
// view 2 by normalizing the transposed cosine matrix.
struct SimilarityPair {
  ad::Var sim1;
  ad::Var sim2;
  double tau = 0.0;
};

// `double_exp` reproduces the literal softmax(exp(cos/tau)) composition;
// the default applies the temperature once.
SimilarityPair similarity_pair(ad::Var z1, ad::Var z2, double tau, bool double_exp = false);

// Multi-path sampling loss: per-anchor positive mass under each view,
// log-scored and blended by lambda1, averaged over anchors. `positives`
// is a constant 0/1 matrix with unit diagonal.
ad::Var contrastive_loss(const SimilarityPair& pair, ad::Var positives, double lambda1);

}  // namespace mcl::cl
