#pragma once

#include <map>
#include <array>
#include <string>
#include <vector>

#include "mcl/hin.hpp"
#include "mcl/trainer.hpp"

namespace mcl::app {

// Dataset description for the generic TSV loader. Meta-paths are declared as
// relation-name sequences; a step traverses its relation forward, `<rel>_rev`
// (or a declared reverse alias such as `rated_by`) traverses it backward.
struct DatasetManifest {
  std::string name;
  std::string nodes_path;
  std::string edges_path;
  std::string schema_path;
  std::string user_type = "User";
  std::string item_type = "Item";
  std::string interaction_relation;
  double rating_threshold = 0.0;  // applied when edges.tsv carries a 4th column

  struct PathDecl {
    std::string name;
    std::vector<std::string> steps;
    bool additional = false;  // Table-5-style extra path for robustness runs
  };
  std::vector<PathDecl> metapaths;
  std::map<std::string, std::string> reverse_aliases;  // alias -> base relation

  static DatasetManifest from_file(const std::string& path);
};

struct Dataset {
  std::string name;
  std::string interaction_relation;
  hin::Hin hin;
  std::vector<train::Interaction> interactions;
  std::vector<hin::MetaPath> base_paths;
  std::vector<hin::MetaPath> extra_paths;
};

// Resolves step tokens (forward names, `_rev` suffixes, reverse aliases)
// and type-checks the path against the schema.
hin::MetaPath parse_metapath(const hin::Hin& hin, const std::string& name,
                             const std::vector<std::string>& steps,
                             const std::map<std::string, std::string>& reverse_aliases = {});

// ml-100k directory loader: u.data / u.user / u.item. Node types User,
// Movie, Age (nine fixed ten-year classes), Occupation, Genre; every rating
// is an implicit positive interaction.
Dataset load_movielens(const std::string& dir);

// Generic TSV loader per the manifest. Edge endpoint types are resolved
// through the relation's schema triple.
Dataset load_generic(const DatasetManifest& manifest);

// Dispatch: a directory containing u.data loads as Movielens, otherwise the
// path is read as a manifest file.
Dataset load_dataset(const std::string& path);

// Writes nodes.tsv / edges.tsv / schema.tsv for a built HIN.
void export_tsv(const hin::Hin& hin, const std::string& dir);

// Ships-with-the-repo synthetic fixtures, one per dataset shape
// ("movielens", "amazon", "yelp"): ~200 nodes with planted block structure.
void write_synthetic_fixture(const std::string& shape, const std::string& dir, uint64_t seed);

}  // namespace mcl::app
