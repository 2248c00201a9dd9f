// Small synthetic HIN datasets shared by the trainer/evaluation tests and
// the acceptance suite.
#pragma once

#include <string>
#include <vector>

#include "mcl/hin.hpp"
#include "mcl/trainer.hpp"

namespace fixtures {

struct ToyDataset {
  mcl::hin::Hin hin;
  std::vector<mcl::train::Interaction> interactions;
  std::vector<mcl::hin::MetaPath> paths;
  int num_users = 0;
  int num_items = 0;
};

// Users and items fall into `blocks` preference groups; every user interacts
// with every item of their own block plus a sprinkle of cross-block noise.
// Items carry one genre per block, giving the meta-path view real signal.
inline ToyDataset make_blocked_dataset(int users, int items, int blocks, double noise,
                                       uint64_t seed) {
  using namespace mcl;
  std::vector<hin::NodeInput> nodes;
  std::vector<hin::EdgeInput> edges;
  std::vector<hin::SchemaInput> schema = {{"User", "interacts", "Item"},
                                          {"Item", "has_genre", "Genre"}};
  for (int u = 0; u < users; ++u) nodes.push_back({"User", "u" + std::to_string(u)});
  for (int i = 0; i < items; ++i) nodes.push_back({"Item", "i" + std::to_string(i)});
  for (int g = 0; g < blocks; ++g) nodes.push_back({"Genre", "g" + std::to_string(g)});

  ToyDataset data;
  Rng rng(seed, "fixture");
  for (int u = 0; u < users; ++u)
    for (int i = 0; i < items; ++i) {
      const bool same_block = (u % blocks) == (i % blocks);
      if (same_block || rng.bernoulli(noise)) {
        edges.push_back({"User", "u" + std::to_string(u), "interacts", "Item",
                         "i" + std::to_string(i)});
        data.interactions.push_back({u, i});
      }
    }
  for (int i = 0; i < items; ++i)
    edges.push_back({"Item", "i" + std::to_string(i), "has_genre", "Genre",
                     "g" + std::to_string(i % blocks)});

  data.hin = hin::build_hin(nodes, edges, schema);
  data.hin.set_roles(data.hin.require_type("User"), data.hin.require_type("Item"));
  const hin::RelId inter = data.hin.require_relation("interacts");
  const hin::RelId genre = data.hin.require_relation("has_genre");
  data.paths.push_back(hin::make_metapath(data.hin, "UIU", {{inter, false}, {inter, true}}));
  data.paths.push_back(hin::make_metapath(data.hin, "IUI", {{inter, true}, {inter, false}}));
  data.paths.push_back(hin::make_metapath(data.hin, "IGI", {{genre, false}, {genre, true}}));
  data.num_users = users;
  data.num_items = items;
  return data;
}

// Dense toy with `per_user` random distinct items per user: the interaction
// pattern carries no block shortcut, so ranking it requires actual training.
inline ToyDataset make_random_dataset(int users, int items, int per_user, int genres,
                                      uint64_t seed) {
  using namespace mcl;
  std::vector<hin::NodeInput> nodes;
  std::vector<hin::EdgeInput> edges;
  std::vector<hin::SchemaInput> schema = {{"User", "interacts", "Item"},
                                          {"Item", "has_genre", "Genre"}};
  for (int u = 0; u < users; ++u) nodes.push_back({"User", "u" + std::to_string(u)});
  for (int i = 0; i < items; ++i) nodes.push_back({"Item", "i" + std::to_string(i)});
  for (int g = 0; g < genres; ++g) nodes.push_back({"Genre", "g" + std::to_string(g)});

  ToyDataset data;
  Rng rng(seed, "fixture-random");
  for (int u = 0; u < users; ++u) {
    std::vector<int> pool(items);
    for (int i = 0; i < items; ++i) pool[i] = i;
    rng.shuffle(pool);
    for (int k = 0; k < per_user; ++k) {
      edges.push_back({"User", "u" + std::to_string(u), "interacts", "Item",
                       "i" + std::to_string(pool[k])});
      data.interactions.push_back({u, pool[k]});
    }
  }
  for (int i = 0; i < items; ++i)
    edges.push_back({"Item", "i" + std::to_string(i), "has_genre", "Genre",
                     "g" + std::to_string(i % genres)});

  data.hin = hin::build_hin(nodes, edges, schema);
  data.hin.set_roles(data.hin.require_type("User"), data.hin.require_type("Item"));
  const hin::RelId inter = data.hin.require_relation("interacts");
  const hin::RelId genre = data.hin.require_relation("has_genre");
  data.paths.push_back(hin::make_metapath(data.hin, "UIU", {{inter, false}, {inter, true}}));
  data.paths.push_back(hin::make_metapath(data.hin, "IUI", {{inter, true}, {inter, false}}));
  data.paths.push_back(hin::make_metapath(data.hin, "IGI", {{genre, false}, {genre, true}}));
  data.num_users = users;
  data.num_items = items;
  return data;
}

}  // namespace fixtures
