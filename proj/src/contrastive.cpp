#include "mcl/contrastive.hpp"

namespace mcl::cl {

using ad::Var;

Var project(Var h, const ProjectionVars& params) {
  Var hidden = ad::elu(ad::add_rowvec(ad::matmul(h, ad::transpose(params.w1)), params.b1));
  return ad::add_rowvec(ad::matmul(hidden, ad::transpose(params.w2)), params.b2);
}

SimilarityPair similarity_pair(Var z1, Var z2, double tau, bool double_exp) {
  if (tau <= 0.0)
    fail(ErrorCode::NonpositiveTau, "temperature must be positive, got " + std::to_string(tau));
  const ad::Tensor& a = z1.tape->value(z1.id);
  const ad::Tensor& b = z2.tape->value(z2.id);
  if (a.rows != b.rows || a.cols != b.cols)
    fail(ErrorCode::ShapeMismatch, "similarity_pair: views must have matching shapes");
  Var cos = ad::cosine_similarity_matrix(z1, z2);
  Var scaled = ad::scalar_mul(cos, 1.0 / tau);
  Var scaled_t = ad::transpose(scaled);
  SimilarityPair pair;
  pair.tau = tau;
  if (double_exp) {
    pair.sim1 = ad::row_softmax(ad::exp_op(scaled));
    pair.sim2 = ad::row_softmax(ad::exp_op(scaled_t));
  } else {
    pair.sim1 = ad::row_softmax(scaled);
    pair.sim2 = ad::row_softmax(scaled_t);
  }
  return pair;
}

Var contrastive_loss(const SimilarityPair& pair, Var positives, double lambda1) {
  if (lambda1 < 0.0 || lambda1 > 1.0)
    fail(ErrorCode::ConfigError, "lambda1 must lie in [0, 1], got " + std::to_string(lambda1));
  ad::Tape& tape = *pair.sim1.tape;
  const ad::Tensor& sim = tape.value(pair.sim1.id);
  const ad::Tensor& pos = tape.value(positives.id);
  if (!sim.same_shape(pos))
    fail(ErrorCode::ShapeMismatch, "contrastive_loss: positives do not match similarity shape");
  const int anchors = sim.rows;
  Var score1 = ad::row_sum(ad::mul(pair.sim1, positives));
  Var score2 = ad::row_sum(ad::mul(pair.sim2, positives));
  Var blended = ad::add(ad::scalar_mul(ad::log_eps(score1), -lambda1),
                        ad::scalar_mul(ad::log_eps(score2), -(1.0 - lambda1)));
  return ad::scalar_mul(ad::sum_all(blended), 1.0 / anchors);
}

}  // namespace mcl::cl
