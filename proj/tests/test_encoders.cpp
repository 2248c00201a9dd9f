#include <cmath>

#include "doctest.h"
#include "mcl/augmentation.hpp"
#include "mcl/encoders.hpp"
#include "oracles.hpp"

using namespace mcl;
using namespace mcl::ad;
using namespace mcl::enc;

namespace {

constexpr int kDim = 3;

Tensor random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

double lrelu(double x) { return x > 0 ? x : 0.2 * x; }
double elu_ref(double x) { return x > 0 ? x : std::exp(x) - 1.0; }

struct ToyModel {
  hin::Hin hin;
  std::vector<Tensor> embeddings;  // per type
  std::vector<Tensor> projection;  // per relation
  std::vector<Tensor> scorer;      // per relation
};

ToyModel toy_model(uint64_t seed) {
  std::vector<hin::NodeInput> nodes = {
      {"User", "u0"}, {"User", "u1"},
      {"Movie", "m0"}, {"Movie", "m1"},
      {"Genre", "g0"}, {"Genre", "g1"},
  };
  std::vector<hin::SchemaInput> schema = {{"User", "rate", "Movie"},
                                          {"Movie", "has_genre", "Genre"}};
  std::vector<hin::EdgeInput> edges = {
      {"User", "u0", "rate", "Movie", "m0"},
      {"User", "u0", "rate", "Movie", "m1"},
      {"User", "u1", "rate", "Movie", "m1"},
      {"Movie", "m0", "has_genre", "Genre", "g0"},
      {"Movie", "m1", "has_genre", "Genre", "g0"},
      {"Movie", "m1", "has_genre", "Genre", "g1"},
  };
  ToyModel m{hin::build_hin(nodes, edges, schema), {}, {}, {}};
  Rng rng(seed, "toy-model");
  for (hin::TypeId t = 0; t < m.hin.num_types(); ++t)
    m.embeddings.push_back(random_tensor(m.hin.count(t), kDim, rng));
  for (hin::RelId r = 0; r < m.hin.num_relations(); ++r) {
    m.projection.push_back(random_tensor(kDim, kDim, rng));
    m.scorer.push_back(random_tensor(2 * kDim, 1, rng));
  }
  return m;
}

// Per-node loop oracle for the one-hop view: grouped neighbors, direct
// exp-normalized attention, weighted sum of raw neighbor embeddings.
Tensor one_hop_oracle(const ToyModel& m, hin::TypeId t) {
  const hin::Hin& hin = m.hin;
  Tensor out(hin.count(t), kDim);
  for (int e = 0; e < hin.count(t); ++e) {
    const double* he = m.embeddings[t].row(e);
    struct Nb { hin::TypeId type; int idx; double score; };
    std::vector<Nb> nbs;
    for (const auto& [rel, ids] : hin.one_hop_neighbors(t, e)) {
      const Tensor& p = m.projection[rel];
      const Tensor& a = m.scorer[rel];
      for (int gid : ids) {
        hin::TypeId wt = 0;
        while (wt + 1 < hin.num_types() && hin.global_offset(wt + 1) <= gid) ++wt;
        const int widx = gid - hin.global_offset(wt);
        const double* hw = m.embeddings[wt].row(widx);
        double proj[kDim] = {0, 0, 0};
        for (int i = 0; i < kDim; ++i)
          for (int j = 0; j < kDim; ++j) proj[i] += p.at(i, j) * hw[j];
        double s = 0.0;
        for (int i = 0; i < kDim; ++i) s += a.at(i, 0) * he[i] + a.at(kDim + i, 0) * proj[i];
        nbs.push_back({wt, widx, lrelu(s)});
      }
    }
    if (nbs.empty()) continue;
    double denom = 0.0;
    for (const Nb& nb : nbs) denom += std::exp(nb.score);
    double agg[kDim] = {0, 0, 0};
    for (const Nb& nb : nbs) {
      const double alpha = std::exp(nb.score) / denom;
      const double* hw = m.embeddings[nb.type].row(nb.idx);
      for (int i = 0; i < kDim; ++i) agg[i] += alpha * hw[i];
    }
    for (int i = 0; i < kDim; ++i) out.at(e, i) = elu_ref(agg[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("one_hop_encode") {
  SUBCASE("singleton neighborhood gives alpha = 1") {
    // one user, one movie, one rating; need a third type for heterogeneity
    std::vector<hin::NodeInput> nodes = {{"User", "u"}, {"Movie", "m"}, {"Genre", "g"}};
    std::vector<hin::SchemaInput> schema = {{"User", "rate", "Movie"},
                                            {"Movie", "has_genre", "Genre"}};
    std::vector<hin::EdgeInput> edges = {{"User", "u", "rate", "Movie", "m"}};
    hin::Hin h = hin::build_hin(nodes, edges, schema);
    Rng rng(3, "single");
    Tape tape;
    std::vector<Var> embs;
    std::vector<Tensor> raw;
    for (hin::TypeId t = 0; t < h.num_types(); ++t) {
      raw.push_back(random_tensor(h.count(t), kDim, rng));
      embs.push_back(tape.constant(raw.back()));
    }
    OneHopVars params;
    for (hin::RelId r = 0; r < h.num_relations(); ++r) {
      params.projection.push_back(tape.constant(random_tensor(kDim, kDim, rng)));
      params.scorer.push_back(tape.constant(random_tensor(2 * kDim, 1, rng)));
    }
    auto contexts = build_one_hop_contexts(h);
    OneHopResult res = one_hop_encode(contexts, embs, params);
    const hin::TypeId user_t = h.require_type("User");
    const Tensor& h1 = tape.value(res.by_type[user_t].id);
    const Tensor& movie = raw[h.require_type("Movie")];
    for (int i = 0; i < kDim; ++i)
      CHECK(h1.at(0, i) == doctest::Approx(elu_ref(movie.at(0, i))).epsilon(1e-12));
    // attention over the single neighbor is exactly one
    const Tensor& att = tape.value(res.attention_by_type[user_t].id);
    double sum = 0.0;
    for (int j = 0; j < att.cols; ++j) sum += att.at(0, j);
    CHECK(sum == doctest::Approx(1.0));
  }

  SUBCASE("identical neighbors share attention equally") {
    std::vector<hin::NodeInput> nodes = {
        {"User", "u"}, {"Movie", "m0"}, {"Movie", "m1"}, {"Genre", "g"}};
    std::vector<hin::SchemaInput> schema = {{"User", "rate", "Movie"},
                                            {"Movie", "has_genre", "Genre"}};
    std::vector<hin::EdgeInput> edges = {{"User", "u", "rate", "Movie", "m0"},
                                         {"User", "u", "rate", "Movie", "m1"}};
    hin::Hin h = hin::build_hin(nodes, edges, schema);
    Rng rng(5, "pair");
    Tape tape;
    Tensor movies(2, kDim);
    Tensor one_movie = random_tensor(1, kDim, rng);
    for (int j = 0; j < kDim; ++j) movies.at(0, j) = movies.at(1, j) = one_movie.at(0, j);
    std::vector<Var> embs(h.num_types());
    embs[h.require_type("User")] = tape.constant(random_tensor(1, kDim, rng));
    embs[h.require_type("Movie")] = tape.constant(movies);
    embs[h.require_type("Genre")] = tape.constant(random_tensor(1, kDim, rng));
    OneHopVars params;
    for (hin::RelId r = 0; r < h.num_relations(); ++r) {
      params.projection.push_back(tape.constant(random_tensor(kDim, kDim, rng)));
      params.scorer.push_back(tape.constant(random_tensor(2 * kDim, 1, rng)));
    }
    OneHopResult res = one_hop_encode(build_one_hop_contexts(h), embs, params);
    const Tensor& att = tape.value(res.attention_by_type[h.require_type("User")].id);
    std::vector<double> weights;
    for (int j = 0; j < att.cols; ++j)
      if (att.at(0, j) != 0.0) weights.push_back(att.at(0, j));
    REQUIRE(weights.size() == 2);
    CHECK(weights[0] == doctest::Approx(0.5));
    CHECK(weights[1] == doctest::Approx(0.5));
  }

  SUBCASE("toy HIN matches the per-node loop oracle") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      ToyModel m = toy_model(seed);
      Tape tape;
      std::vector<Var> embs;
      for (const Tensor& e : m.embeddings) embs.push_back(tape.constant(e));
      OneHopVars params;
      for (size_t r = 0; r < m.projection.size(); ++r) {
        params.projection.push_back(tape.constant(m.projection[r]));
        params.scorer.push_back(tape.constant(m.scorer[r]));
      }
      OneHopResult res = one_hop_encode(build_one_hop_contexts(m.hin), embs, params);
      for (hin::TypeId t = 0; t < m.hin.num_types(); ++t) {
        Tensor expected = one_hop_oracle(m, t);
        CHECK(oracle::max_abs_diff(tape.value(res.by_type[t].id), expected) < 1e-10);
      }
    }
  }

  SUBCASE("missing embedding table rejected") {
    ToyModel m = toy_model(1);
    Tape tape;
    std::vector<Var> embs = {tape.constant(m.embeddings[0])};  // only one type provided
    OneHopVars params;
    CHECK_THROWS_AS(one_hop_encode(build_one_hop_contexts(m.hin), embs, params), Error);
  }
}

TEST_CASE("node_level_encode") {
  SUBCASE("complete graph with identical features gives uniform rows") {
    const int n = 4;
    Tensor mask = Tensor::full(n, n, 1.0);
    for (int i = 0; i < n; ++i) mask.at(i, i) = 0.0;
    Tensor e(n, kDim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < kDim; ++j) e.at(i, j) = 0.3 * (j + 1);
    Rng rng(2, "nl");
    Tape tape;
    NodeLevelResult res = node_level_encode(tape.constant(mask), tape.constant(e),
                                            tape.constant(random_tensor(2 * kDim, 1, rng)));
    const Tensor& att = tape.value(res.attention.id);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        CHECK(att.at(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / (n - 1)));
  }
  SUBCASE("isolated node encodes to the zero vector") {
    Tensor mask(3, 3);
    mask.at(0, 1) = mask.at(1, 0) = 1.0;  // node 2 isolated
    Rng rng(4, "nl-iso");
    Tape tape;
    NodeLevelResult res = node_level_encode(tape.constant(mask),
                                            tape.constant(random_tensor(3, kDim, rng)),
                                            tape.constant(random_tensor(2 * kDim, 1, rng)));
    const Tensor& h = tape.value(res.h.id);
    for (int j = 0; j < kDim; ++j) CHECK(h.at(2, j) == 0.0);
  }
  SUBCASE("random subgraph matches the per-node loop oracle") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed, "nl-prop");
      const int n = 10;
      Tensor mask(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          if (rng.bernoulli(0.35)) mask.at(i, j) = mask.at(j, i) = 1.0;
      Tensor e = random_tensor(n, kDim, rng);
      Tensor a = random_tensor(2 * kDim, 1, rng);
      Tape tape;
      NodeLevelResult res =
          node_level_encode(tape.constant(mask), tape.constant(e), tape.constant(a));
      // oracle
      Tensor expected(n, kDim);
      for (int i = 0; i < n; ++i) {
        double denom = 0.0;
        std::vector<std::pair<int, double>> ws;
        for (int j = 0; j < n; ++j) {
          if (mask.at(i, j) == 0.0) continue;
          double s = 0.0;
          for (int k = 0; k < kDim; ++k)
            s += a.at(k, 0) * e.at(i, k) + a.at(kDim + k, 0) * e.at(j, k);
          const double es = std::exp(lrelu(s));
          ws.push_back({j, es});
          denom += es;
        }
        double agg[kDim] = {0, 0, 0};
        for (auto [j, w] : ws)
          for (int k = 0; k < kDim; ++k) agg[k] += (w / denom) * e.at(j, k);
        for (int k = 0; k < kDim; ++k)
          expected.at(i, k) = ws.empty() ? 0.0 : elu_ref(agg[k]);
      }
      CHECK(oracle::max_abs_diff(tape.value(res.h.id), expected) < 1e-10);
      // attention rows over nonempty neighborhoods are probability vectors
      const Tensor& att = tape.value(res.attention.id);
      for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        bool any = false;
        for (int j = 0; j < n; ++j) {
          CHECK(att.at(i, j) >= 0.0);
          if (mask.at(i, j) == 0.0) CHECK(att.at(i, j) == 0.0);
          sum += att.at(i, j);
          any = any || mask.at(i, j) != 0.0;
        }
        if (any) CHECK(std::fabs(sum - 1.0) < 1e-9);
      }
    }
  }
  SUBCASE("relabeling nodes permutes outputs identically") {
    Rng rng(9, "nl-perm");
    const int n = 6;
    Tensor mask(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.bernoulli(0.4)) mask.at(i, j) = mask.at(j, i) = 1.0;
    Tensor e = random_tensor(n, kDim, rng);
    Tensor a = random_tensor(2 * kDim, 1, rng);
    std::vector<int> perm = {3, 1, 5, 0, 4, 2};
    Tensor pmask(n, n), pe(n, kDim);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) pmask.at(i, j) = mask.at(perm[i], perm[j]);
      for (int k = 0; k < kDim; ++k) pe.at(i, k) = e.at(perm[i], k);
    }
    Tape tape;
    const Tensor& base =
        tape.value(node_level_encode(tape.constant(mask), tape.constant(e), tape.constant(a)).h.id);
    const Tensor& permuted =
        tape.value(node_level_encode(tape.constant(pmask), tape.constant(pe), tape.constant(a)).h.id);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < kDim; ++k)
        CHECK(permuted.at(i, k) == doctest::Approx(base.at(perm[i], k)).epsilon(1e-12));
  }
}

TEST_CASE("semantic_fuse") {
  Rng rng(11, "fuse");
  const int n = 5;
  SemanticVars make_params_storage;
  (void)make_params_storage;

  auto make_params = [&rng](Tape& tape) {
    SemanticVars p;
    p.w = tape.constant(random_tensor(kDim, kDim, rng));
    p.b = tape.constant(random_tensor(1, kDim, rng));
    p.q = tape.constant(random_tensor(kDim, 1, rng));
    return p;
  };

  SUBCASE("single path passes through with gamma = 1") {
    Tape tape;
    Tensor h = random_tensor(n, kDim, rng);
    FusedEmbedding out = semantic_fuse({tape.constant(h)}, make_params(tape));
    REQUIRE(out.gamma.size() == 1);
    CHECK(out.gamma[0] == doctest::Approx(1.0));
    CHECK(oracle::max_abs_diff(tape.value(out.h.id), h) < 1e-15);
  }
  SUBCASE("two identical paths split gamma evenly") {
    Tape tape;
    Tensor h = random_tensor(n, kDim, rng);
    Var v1 = tape.constant(h), v2 = tape.constant(h);
    FusedEmbedding out = semantic_fuse({v1, v2}, make_params(tape));
    CHECK(out.gamma[0] == doctest::Approx(0.5));
    CHECK(out.gamma[1] == doctest::Approx(0.5));
  }
  SUBCASE("three random paths match the direct formula oracle") {
    Tape tape;
    std::vector<Tensor> hs = {random_tensor(n, kDim, rng), random_tensor(n, kDim, rng),
                              random_tensor(n, kDim, rng)};
    Tensor w = random_tensor(kDim, kDim, rng);
    Tensor b = random_tensor(1, kDim, rng);
    Tensor q = random_tensor(kDim, 1, rng);
    SemanticVars params{tape.constant(w), tape.constant(b), tape.constant(q)};
    std::vector<Var> vars;
    for (const Tensor& h : hs) vars.push_back(tape.constant(h));
    FusedEmbedding out = semantic_fuse(vars, params);

    // oracle: w_j = mean_e q^T tanh(W h_e + b); gamma = softmax; h = sum gamma h_j
    std::vector<double> wj;
    for (const Tensor& h : hs) {
      double total = 0.0;
      for (int e = 0; e < n; ++e) {
        for (int i = 0; i < kDim; ++i) {
          double pre = b.at(0, i);
          for (int j = 0; j < kDim; ++j) pre += w.at(i, j) * h.at(e, j);
          total += q.at(i, 0) * std::tanh(pre);
        }
      }
      wj.push_back(total / n);
    }
    double denom = 0.0;
    for (double x : wj) denom += std::exp(x);
    Tensor expected(n, kDim);
    double gamma_sum = 0.0;
    for (size_t j = 0; j < hs.size(); ++j) {
      const double gamma = std::exp(wj[j]) / denom;
      gamma_sum += gamma;
      CHECK(out.gamma[j] == doctest::Approx(gamma).epsilon(1e-10));
      for (size_t i = 0; i < expected.size(); ++i) expected.data[i] += gamma * hs[j].data[i];
    }
    CHECK(gamma_sum == doctest::Approx(1.0));
    CHECK(oracle::max_abs_diff(tape.value(out.h.id), expected) < 1e-10);
  }
  SUBCASE("gamma is shift-invariant in the importance scores") {
    // softmax(w) == softmax(w + c), which is what makes "larger gamma means
    // more important" well defined
    Tape tape;
    Tensor w(1, 3, {0.2, -1.0, 0.5});
    Tensor shifted(1, 3, {7.2, 6.0, 7.5});
    const Tensor& g1 = tape.value(row_softmax(tape.constant(w)).id);
    const Tensor& g2 = tape.value(row_softmax(tape.constant(shifted)).id);
    CHECK(oracle::max_abs_diff(g1, g2) < 1e-12);
  }
  SUBCASE("fused rows recompose from the reported gamma") {
    Tape tape;
    std::vector<Tensor> hs = {random_tensor(n, kDim, rng), random_tensor(n, kDim, rng)};
    std::vector<Var> vars = {tape.constant(hs[0]), tape.constant(hs[1])};
    FusedEmbedding out = semantic_fuse(vars, make_params(tape));
    Tensor recomposed(n, kDim);
    for (size_t j = 0; j < hs.size(); ++j)
      for (size_t i = 0; i < recomposed.size(); ++i)
        recomposed.data[i] += out.gamma[j] * hs[j].data[i];
    CHECK(oracle::max_abs_diff(tape.value(out.h.id), recomposed) < 1e-12);
  }
  SUBCASE("empty path list rejected") {
    Tape tape;
    CHECK_THROWS_AS(semantic_fuse({}, make_params(tape)), Error);
  }
  SUBCASE("mismatched shapes rejected") {
    Tape tape;
    SemanticVars p = make_params(tape);
    Var a = tape.constant(random_tensor(4, kDim, rng));
    Var b = tape.constant(random_tensor(5, kDim, rng));
    CHECK_THROWS_AS(semantic_fuse({a, b}, p), Error);
  }
}

TEST_CASE("encoder gradients flow end to end") {
  // gradient of a scalar readout of the full two-level encoder wrt all params
  ToyModel m = toy_model(42);
  Rng rng(77, "enc-grad");
  Tensor scorer = random_tensor(2 * kDim, 1, rng);
  Tensor sem_w = random_tensor(kDim, kDim, rng);
  Tensor sem_b = random_tensor(1, kDim, rng);
  Tensor sem_q = random_tensor(kDim, 1, rng);
  const hin::RelId rate = m.hin.require_relation("rate");
  hin::MetaPathGraph umu = hin::metapath_subgraph(
      m.hin, hin::make_metapath(m.hin, "UMU", {{rate, false}, {rate, true}}));
  Tensor mask = hin::adjacency_mask(umu);
  Tensor weights = random_tensor(m.hin.count(0), kDim, rng);

  Tensor grad_e0, grad_scorer, grad_w;
  auto run = [&](bool grad) {
    Tape tape;
    std::vector<Var> embs;
    for (const Tensor& e : m.embeddings) embs.push_back(tape.constant(e));
    Var e_user = tape.param(m.embeddings[0]);
    embs[0] = e_user;
    OneHopVars oh;
    for (size_t r = 0; r < m.projection.size(); ++r) {
      oh.projection.push_back(tape.constant(m.projection[r]));
      oh.scorer.push_back(tape.constant(m.scorer[r]));
    }
    OneHopResult one_hop = one_hop_encode(build_one_hop_contexts(m.hin), embs, oh);
    Var sc = tape.param(scorer);
    NodeLevelResult nl = node_level_encode(tape.constant(mask), e_user, sc);
    Var wv = tape.param(sem_w);
    SemanticVars sem{wv, tape.constant(sem_b), tape.constant(sem_q)};
    FusedEmbedding fused = semantic_fuse({nl.h, one_hop.by_type[0]}, sem);
    Var loss = sum_all(mul(fused.h, tape.constant(weights)));
    if (grad) {
      tape.backward(loss);
      grad_e0 = tape.grad(e_user);
      grad_scorer = tape.grad(sc);
      grad_w = tape.grad(wv);
    }
    return tape.value(loss.id).scalar();
  };
  run(true);
  CHECK(oracle::fd_max_rel_error(m.embeddings[0], grad_e0, [&] { return run(false); }) < 1e-4);
  CHECK(oracle::fd_max_rel_error(scorer, grad_scorer, [&] { return run(false); }) < 1e-4);
  CHECK(oracle::fd_max_rel_error(sem_w, grad_w, [&] { return run(false); }) < 1e-4);
}
