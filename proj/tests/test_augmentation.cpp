#include <cmath>

#include "doctest.h"
#include "mcl/augmentation.hpp"
#include "oracles.hpp"

using namespace mcl;
using namespace mcl::ad;
using namespace mcl::aug;

namespace {

// Independent propagation oracle: dense symmetric normalization and naive
// repeated matrix-vector products, averaged over orders.
Tensor propagate_oracle(const hin::MetaPathGraph& g, const Tensor& e, int order) {
  const int n = g.n;
  std::vector<std::vector<double>> abar(n, std::vector<double>(n, 0.0));
  std::vector<double> deg(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (g.has_edge(i, j)) deg[i] += 1.0;
  for (int i = 0; i < n; ++i) {
    if (deg[i] == 0.0) {
      abar[i][i] = 1.0;
      continue;
    }
    for (int j = 0; j < n; ++j)
      if (g.has_edge(i, j)) abar[i][j] = 1.0 / std::sqrt(deg[i] * (deg[j] > 0 ? deg[j] : 1.0));
  }
  std::vector<std::vector<double>> x(n, std::vector<double>(e.cols));
  std::vector<std::vector<double>> sum = x;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < e.cols; ++c) sum[i][c] = x[i][c] = e.at(i, c);
  for (int l = 0; l < order; ++l) {
    std::vector<std::vector<double>> next(n, std::vector<double>(e.cols, 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (abar[i][j] != 0.0)
          for (int c = 0; c < e.cols; ++c) next[i][c] += abar[i][j] * x[j][c];
    x = next;
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < e.cols; ++c) sum[i][c] += x[i][c];
  }
  Tensor out(n, e.cols);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < e.cols; ++c) out.at(i, c) = sum[i][c] / (order + 1);
  return out;
}

hin::MetaPathGraph graph_from_pairs(int n, const std::vector<std::pair<int, int>>& undirected) {
  std::vector<std::vector<int>> rows(n);
  for (auto [a, b] : undirected) {
    rows[a].push_back(b);
    rows[b].push_back(a);
  }
  hin::MetaPathGraph g;
  g.endpoint_type = 0;
  g.n = n;
  g.row_ptr.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) {
    std::sort(rows[i].begin(), rows[i].end());
    rows[i].erase(std::unique(rows[i].begin(), rows[i].end()), rows[i].end());
    for (int j : rows[i]) g.cols.push_back(j);
    g.row_ptr[i + 1] = static_cast<int>(g.cols.size());
    g.degrees.push_back(static_cast<int>(rows[i].size()));
  }
  return g;
}

Tensor random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("sample_mask") {
  SUBCASE("delta 0 keeps everything") {
    Rng rng(1, "mask");
    MaskVector m = sample_mask(100, 0.0, rng);
    for (uint8_t k : m.keep) CHECK(k == 1);
  }
  SUBCASE("invalid delta rejected") {
    Rng rng(1, "mask");
    CHECK_THROWS_AS(sample_mask(10, 1.0, rng), Error);
    CHECK_THROWS_AS(sample_mask(10, -0.1, rng), Error);
    CHECK_NOTHROW(sample_mask(10, 1.0 - 1e-9, rng));  // near-1 is a config-layer concern
  }
  SUBCASE("keep fraction concentrates at 1 - delta") {
    Rng rng(7, "mask-mc");
    int kept = 0;
    const int draws = 100000;
    MaskVector m = sample_mask(draws, 0.5, rng);
    for (uint8_t k : m.keep) kept += k;
    CHECK(std::fabs(kept / static_cast<double>(draws) - 0.5) < 0.01);
  }
  SUBCASE("fixed seed reproduces the mask") {
    Rng a(9, "mask"), b(9, "mask");
    MaskVector ma = sample_mask(1000, 0.3, a), mb = sample_mask(1000, 0.3, b);
    CHECK(ma.keep == mb.keep);
  }
}

TEST_CASE("apply_mask") {
  SUBCASE("delta 0 is the exact identity") {
    Rng rng(2, "am");
    Tensor e0 = random_tensor(6, 4, rng);
    Tape t;
    MaskVector m = sample_mask(6, 0.0, rng);
    Var out = apply_mask(t.constant(e0), m);
    CHECK(oracle::max_abs_diff(t.value(out), e0) == 0.0);
  }
  SUBCASE("kept rows scale by 1/(1-delta), dropped rows zero out") {
    Tape t;
    Tensor e0(2, 3, {1, 2, 3, 4, 5, 6});
    MaskVector m;
    m.delta = 0.5;
    m.keep = {1, 0};
    Var out = apply_mask(t.constant(e0), m);
    const Tensor& y = t.value(out);
    CHECK(y.at(0, 0) == doctest::Approx(2.0));
    CHECK(y.at(0, 2) == doctest::Approx(6.0));
    for (int j = 0; j < 3; ++j) CHECK(y.at(1, j) == 0.0);
  }
  SUBCASE("mask length must match rows") {
    Tape t;
    Rng rng(3, "am2");
    MaskVector m = sample_mask(5, 0.1, rng);
    CHECK_THROWS_AS(apply_mask(t.constant(Tensor(6, 2)), m), Error);
  }
  SUBCASE("masking is unbiased over resamples") {
    Rng draw(11, "am-mc");
    Rng data(12, "am-data");
    Tensor e0 = random_tensor(5, 3, data, 0.5, 1.5);
    const int resamples = 10000;
    Tensor mean(5, 3);
    for (int r = 0; r < resamples; ++r) {
      Tape t;
      MaskVector m = sample_mask(5, 0.1, draw);
      const Tensor& y = t.value(apply_mask(t.constant(e0), m));
      for (size_t i = 0; i < mean.size(); ++i) mean.data[i] += y.data[i];
    }
    for (size_t i = 0; i < mean.size(); ++i) {
      mean.data[i] /= resamples;
      CHECK(std::fabs(mean.data[i] - e0.data[i]) / std::fabs(e0.data[i]) < 0.02);
    }
  }
}

TEST_CASE("propagate") {
  SUBCASE("order 0 returns the input") {
    Rng rng(4, "prop");
    Tensor e0 = random_tensor(5, 3, rng);
    hin::MetaPathGraph g = graph_from_pairs(5, {{0, 1}, {1, 2}, {3, 4}});
    Tape t;
    AugmentedEmbedding out = propagate(g, t.constant(e0), 0);
    CHECK(out.order == 0);
    CHECK(oracle::max_abs_diff(t.value(out.matrix), e0) == 0.0);
  }
  SUBCASE("two nodes with one edge average their features at L=1") {
    hin::MetaPathGraph g = graph_from_pairs(2, {{0, 1}});
    Tensor e0(2, 2, {1, 0, 0, 1});
    Tape t;
    AugmentedEmbedding out = propagate(g, t.constant(e0), 1);
    // Abar = [[0,1],[1,0]]; average of ([x1,x2],[x2,x1]) = [.5,.5] rows
    const Tensor& y = t.value(out.matrix);
    for (size_t i = 0; i < y.size(); ++i) CHECK(y.data[i] == doctest::Approx(0.5));
  }
  SUBCASE("random 12-node graph matches the dense power-iteration oracle") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed, "prop-prop");
      std::vector<std::pair<int, int>> edges;
      for (int i = 0; i < 12; ++i)
        for (int j = i + 1; j < 12; ++j)
          if (rng.bernoulli(0.25)) edges.push_back({i, j});
      hin::MetaPathGraph g = graph_from_pairs(12, edges);
      Tensor e0 = random_tensor(12, 4, rng);
      Tape t;
      AugmentedEmbedding out = propagate(g, t.constant(e0), 3);
      CHECK(oracle::max_abs_diff(t.value(out.matrix), propagate_oracle(g, e0, 3)) < 1e-10);
    }
  }
  SUBCASE("linearity, exact on a 4-regular graph with dyadic coefficients") {
    // Cycle with chords: every node has degree 4, so Abar entries are 0.25.
    std::vector<std::pair<int, int>> edges;
    const int n = 8;
    for (int i = 0; i < n; ++i) {
      edges.push_back({i, (i + 1) % n});
      edges.push_back({i, (i + 2) % n});
    }
    hin::MetaPathGraph g = graph_from_pairs(n, edges);
    for (int i = 0; i < n; ++i) REQUIRE(g.degrees[i] == 4);
    Tensor x(n, 2), y(n, 2);
    Rng rng(8, "lin");
    for (double& v : x.data) v = static_cast<double>(rng.bounded(17)) - 8;
    for (double& v : y.data) v = static_cast<double>(rng.bounded(17)) - 8;
    const double a = 2.0, b = 0.5;
    Tensor combo(n, 2);
    for (size_t i = 0; i < combo.size(); ++i) combo.data[i] = a * x.data[i] + b * y.data[i];
    Tape t;
    const Tensor& lhs = t.value(propagate(g, t.constant(combo), 3).matrix);
    const Tensor& px = t.value(propagate(g, t.constant(x), 3).matrix);
    const Tensor& py = t.value(propagate(g, t.constant(y), 3).matrix);
    for (size_t i = 0; i < lhs.size(); ++i)
      CHECK(lhs.data[i] == a * px.data[i] + b * py.data[i]);  // bitwise: all dyadic
  }
  SUBCASE("general linearity within fp tolerance") {
    Rng rng(13, "lin2");
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < 9; ++i)
      for (int j = i + 1; j < 9; ++j)
        if (rng.bernoulli(0.3)) edges.push_back({i, j});
    hin::MetaPathGraph g = graph_from_pairs(9, edges);
    Tensor x = random_tensor(9, 3, rng), y = random_tensor(9, 3, rng);
    Tensor combo(9, 3);
    for (size_t i = 0; i < combo.size(); ++i) combo.data[i] = 1.7 * x.data[i] - 0.3 * y.data[i];
    Tape t;
    const Tensor& lhs = t.value(propagate(g, t.constant(combo), 2).matrix);
    const Tensor& px = t.value(propagate(g, t.constant(x), 2).matrix);
    const Tensor& py = t.value(propagate(g, t.constant(y), 2).matrix);
    for (size_t i = 0; i < lhs.size(); ++i)
      CHECK(lhs.data[i] == doctest::Approx(1.7 * px.data[i] - 0.3 * py.data[i]).epsilon(1e-12));
  }
  SUBCASE("regular graphs preserve constant inputs") {
    std::vector<std::pair<int, int>> edges;
    const int n = 6;
    for (int i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});  // 2-regular cycle
    hin::MetaPathGraph g = graph_from_pairs(n, edges);
    Tape t;
    const Tensor& y = t.value(propagate(g, t.constant(Tensor::full(n, 3, 2.5)), 4).matrix);
    for (double v : y.data) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
  }
  SUBCASE("zero-degree rows pass through unchanged") {
    hin::MetaPathGraph g = graph_from_pairs(4, {{0, 1}});  // nodes 2, 3 isolated
    Rng rng(5, "iso");
    Tensor e0 = random_tensor(4, 3, rng);
    Tape t;
    const Tensor& y = t.value(propagate(g, t.constant(e0), 3).matrix);
    for (int j = 0; j < 3; ++j) {
      CHECK(y.at(2, j) == e0.at(2, j));
      CHECK(y.at(3, j) == e0.at(3, j));
    }
  }
  SUBCASE("negative order rejected") {
    hin::MetaPathGraph g = graph_from_pairs(2, {{0, 1}});
    Tape t;
    CHECK_THROWS_AS(propagate(g, t.constant(Tensor(2, 2)), -1), Error);
  }
  SUBCASE("shape mismatch rejected") {
    hin::MetaPathGraph g = graph_from_pairs(3, {{0, 1}});
    Tape t;
    CHECK_THROWS_AS(propagate(g, t.constant(Tensor(5, 2)), 1), Error);
  }
  SUBCASE("full augmentation with delta=0 and L=0 is the identity") {
    Rng rng(6, "id");
    Tensor e0 = random_tensor(7, 5, rng);
    hin::MetaPathGraph g = graph_from_pairs(7, {{0, 1}, {2, 3}, {4, 5}});
    Tape t;
    MaskVector m = sample_mask(7, 0.0, rng);
    Var masked = apply_mask(t.constant(e0), m);
    AugmentedEmbedding out = propagate(g, masked, 0);
    CHECK(oracle::max_abs_diff(t.value(out.matrix), e0) == 0.0);
  }
}

TEST_CASE("scale_rows gradient") {
  Rng rng(21, "sr");
  Tensor x0 = random_tensor(4, 3, rng);
  Tensor w = random_tensor(4, 3, rng);
  std::vector<double> f = {2.0, 0.0, -1.5, 0.5};
  Tensor analytic;
  auto run = [&](bool grad) {
    Tape t;
    Var x = t.param(x0);
    Var loss = sum_all(mul(scale_rows(x, f), t.constant(w)));
    if (grad) {
      t.backward(loss);
      analytic = t.grad(x);
    }
    return t.value(loss).scalar();
  };
  run(true);
  CHECK(oracle::fd_max_rel_error(x0, analytic, [&] { return run(false); }) < 1e-4);
}
