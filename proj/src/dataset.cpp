#include "mcl/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace mcl::app {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(tok);
  return out;
}

std::ifstream open_or_fail(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, "cannot open " + path);
  return in;
}

[[noreturn]] void malformed(const std::string& path, int line_no, const std::string& why) {
  fail(ErrorCode::MalformedRow, path + ":" + std::to_string(line_no) + ": " + why);
}

// Nine fixed ten-year age classes; all registered as nodes even when a
// class goes unobserved.
const char* kAgeClasses[9] = {"0-9",   "10-19", "20-29", "30-39", "40-49",
                              "50-59", "60-69", "70-79", "80+"};

std::string age_class(int age) {
  if (age < 0) fail(ErrorCode::MalformedRow, "negative age");
  return kAgeClasses[std::min(age / 10, 8)];
}

}  // namespace

hin::MetaPath parse_metapath(const hin::Hin& hin, const std::string& name,
                             const std::vector<std::string>& steps,
                             const std::map<std::string, std::string>& reverse_aliases) {
  std::vector<hin::MetaPathStep> resolved;
  for (const std::string& raw : steps) {
    const std::string token = trim(raw);
    if (auto it = reverse_aliases.find(token); it != reverse_aliases.end()) {
      resolved.push_back({hin.require_relation(it->second), true});
      continue;
    }
    if (hin.relation_id(token) >= 0) {
      resolved.push_back({hin.relation_id(token), false});
      continue;
    }
    if (token.size() > 4 && token.ends_with("_rev") &&
        hin.relation_id(token.substr(0, token.size() - 4)) >= 0) {
      resolved.push_back({hin.relation_id(token.substr(0, token.size() - 4)), true});
      continue;
    }
    fail(ErrorCode::SchemaViolation,
         "meta-path '" + name + "': unknown relation step '" + token + "'");
  }
  return hin::make_metapath(hin, name, std::move(resolved));
}

// ---------------------------------------------------------------------------
// Movielens (ml-100k layout)
// ---------------------------------------------------------------------------

Dataset load_movielens(const std::string& dir) {
  const std::string data_path = dir + "/u.data";
  const std::string user_path = dir + "/u.user";
  const std::string item_path = dir + "/u.item";
  for (const std::string* p : {&data_path, &user_path, &item_path})
    if (!fs::exists(*p)) fail(ErrorCode::MissingFile, "missing Movielens file " + *p);

  std::vector<hin::NodeInput> nodes;
  std::vector<hin::EdgeInput> edges;
  std::vector<hin::SchemaInput> schema = {
      {"User", "rate", "Movie"},
      {"User", "has_age", "Age"},
      {"User", "has_occupation", "Occupation"},
      {"Movie", "has_genre", "Genre"},
  };
  for (const char* a : kAgeClasses) nodes.push_back({"Age", a});

  // u.user: id|age|gender|occupation|zip
  std::set<std::string> occupations;
  std::vector<std::array<std::string, 3>> user_rows;  // id, age class, occupation
  {
    std::ifstream in = open_or_fail(user_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cols = split(line, '|');
      if (cols.size() < 4) malformed(user_path, line_no, "expected id|age|gender|occupation|zip");
      int age = 0;
      try {
        age = std::stoi(cols[1]);
      } catch (...) {
        malformed(user_path, line_no, "age is not an integer");
      }
      user_rows.push_back({trim(cols[0]), age_class(age), trim(cols[3])});
      occupations.insert(trim(cols[3]));
    }
  }
  for (const std::string& occ : occupations) nodes.push_back({"Occupation", occ});
  for (const auto& row : user_rows) nodes.push_back({"User", row[0]});
  for (const auto& row : user_rows) {
    edges.push_back({"User", row[0], "has_age", "Age", row[1]});
    edges.push_back({"User", row[0], "has_occupation", "Occupation", row[2]});
  }

  // u.item: id|title|release|video|url|<19 genre flags>
  std::vector<std::pair<std::string, std::vector<int>>> movie_rows;
  int genre_count = 0;
  {
    std::ifstream in = open_or_fail(item_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cols = split(line, '|');
      if (cols.size() < 6) malformed(item_path, line_no, "expected at least six |-separated fields");
      std::vector<int> genres;
      const int flags = static_cast<int>(cols.size()) - 5;
      genre_count = std::max(genre_count, flags);
      for (int g = 0; g < flags; ++g)
        if (trim(cols[5 + g]) == "1") genres.push_back(g);
      movie_rows.push_back({trim(cols[0]), std::move(genres)});
    }
  }
  for (int g = 0; g < genre_count; ++g) nodes.push_back({"Genre", "genre" + std::to_string(g)});
  for (const auto& [id, genres] : movie_rows) nodes.push_back({"Movie", id});
  for (const auto& [id, genres] : movie_rows)
    for (int g : genres)
      edges.push_back({"Movie", id, "has_genre", "Genre", "genre" + std::to_string(g)});

  // u.data: user \t item \t rating \t timestamp; every rating is a positive
  std::vector<std::pair<std::string, std::string>> ratings;
  {
    std::ifstream in = open_or_fail(data_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cols = split(line, '\t');
      if (cols.size() < 3) malformed(data_path, line_no, "expected user\\titem\\trating");
      ratings.push_back({trim(cols[0]), trim(cols[1])});
      edges.push_back({"User", trim(cols[0]), "rate", "Movie", trim(cols[1])});
    }
  }

  Dataset ds;
  ds.name = "movielens";
  ds.interaction_relation = "rate";
  ds.hin = hin::build_hin(nodes, edges, schema);
  ds.hin.set_roles(ds.hin.require_type("User"), ds.hin.require_type("Movie"));
  const hin::TypeId user_t = ds.hin.user_type();
  const hin::TypeId item_t = ds.hin.item_type();
  ds.interactions.reserve(ratings.size());
  for (const auto& [u, m] : ratings)
    ds.interactions.push_back({ds.hin.internal_id(user_t, u), ds.hin.internal_id(item_t, m)});

  const std::map<std::string, std::string> aliases = {{"rated_by", "rate"}};
  ds.base_paths = {
      parse_metapath(ds.hin, "UMU", {"rate", "rated_by"}, aliases),
      parse_metapath(ds.hin, "MUM", {"rated_by", "rate"}, aliases),
      parse_metapath(ds.hin, "MGM", {"has_genre", "has_genre_rev"}, aliases),
  };
  ds.extra_paths = {
      parse_metapath(ds.hin, "UMGMU", {"rate", "has_genre", "has_genre_rev", "rated_by"}, aliases),
      parse_metapath(ds.hin, "UAU", {"has_age", "has_age_rev"}, aliases),
      parse_metapath(ds.hin, "UOU", {"has_occupation", "has_occupation_rev"}, aliases),
      parse_metapath(ds.hin, "MUAUM", {"rated_by", "has_age", "has_age_rev", "rate"}, aliases),
  };
  return ds;
}

// ---------------------------------------------------------------------------
// Generic TSV loader
// ---------------------------------------------------------------------------

DatasetManifest DatasetManifest::from_file(const std::string& path) {
  std::ifstream in = open_or_fail(path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&base](const std::string& p) {
    return fs::path(p).is_absolute() ? p : (base / p).string();
  };
  DatasetManifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) malformed(path, line_no, "expected 'key = value'");
    std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.rfind("metapath ", 0) == 0 || key.rfind("add_metapath ", 0) == 0) {
      PathDecl decl;
      decl.additional = key.rfind("add_", 0) == 0;
      decl.name = trim(key.substr(key.find(' ') + 1));
      for (const std::string& step : split(value, ',')) decl.steps.push_back(trim(step));
      if (decl.name.empty() || decl.steps.empty())
        malformed(path, line_no, "meta-path declaration needs a name and steps");
      m.metapaths.push_back(std::move(decl));
    } else if (key.rfind("reverse_alias ", 0) == 0) {
      m.reverse_aliases[trim(key.substr(key.find(' ') + 1))] = value;
    } else if (key == "name") {
      m.name = value;
    } else if (key == "nodes") {
      m.nodes_path = resolve(value);
    } else if (key == "edges") {
      m.edges_path = resolve(value);
    } else if (key == "schema") {
      m.schema_path = resolve(value);
    } else if (key == "user_type") {
      m.user_type = value;
    } else if (key == "item_type") {
      m.item_type = value;
    } else if (key == "interaction_relation") {
      m.interaction_relation = value;
    } else if (key == "rating_threshold") {
      try {
        m.rating_threshold = std::stod(value);
      } catch (...) {
        malformed(path, line_no, "rating_threshold is not a number");
      }
    } else {
      fail(ErrorCode::ConfigError, path + ":" + std::to_string(line_no) +
                                       ": unknown manifest key '" + key + "'");
    }
  }
  if (m.nodes_path.empty() || m.schema_path.empty())
    fail(ErrorCode::ConfigError, "manifest must declare nodes and schema files");
  return m;
}

Dataset load_generic(const DatasetManifest& manifest) {
  std::vector<hin::SchemaInput> schema;
  {
    std::ifstream in = open_or_fail(manifest.schema_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cols = split(line, '\t');
      if (cols.size() != 3)
        malformed(manifest.schema_path, line_no, "expected src_type\\trelation\\tdst_type");
      schema.push_back({trim(cols[0]), trim(cols[1]), trim(cols[2])});
    }
  }
  std::vector<hin::NodeInput> nodes;
  {
    std::ifstream in = open_or_fail(manifest.nodes_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cols = split(line, '\t');
      if (cols.size() != 2)
        malformed(manifest.nodes_path, line_no, "expected external_id\\ttype_name");
      nodes.push_back({trim(cols[1]), trim(cols[0])});
    }
  }
  // relation -> (src type, dst type) for endpoint resolution
  std::map<std::string, std::pair<std::string, std::string>> rel_types;
  for (const hin::SchemaInput& s : schema) {
    auto [it, inserted] = rel_types.emplace(s.rel, std::pair{s.src_type, s.dst_type});
    if (!inserted)
      fail(ErrorCode::SchemaViolation, "relation '" + s.rel + "' declared more than once");
  }
  std::vector<hin::EdgeInput> edges;
  std::vector<std::pair<std::string, std::string>> raw_interactions;
  if (!manifest.edges_path.empty() && fs::exists(manifest.edges_path)) {
    std::ifstream in = open_or_fail(manifest.edges_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cols = split(line, '\t');
      if (cols.size() != 3 && cols.size() != 4)
        malformed(manifest.edges_path, line_no,
                  "expected src\\trelation\\tdst with an optional weight");
      const std::string rel = trim(cols[1]);
      auto it = rel_types.find(rel);
      if (it == rel_types.end())
        malformed(manifest.edges_path, line_no, "relation '" + rel + "' is not in the schema");
      if (cols.size() == 4) {
        double weight = 0.0;
        try {
          weight = std::stod(cols[3]);
        } catch (...) {
          malformed(manifest.edges_path, line_no, "edge weight is not a number");
        }
        if (weight < manifest.rating_threshold) continue;
      }
      edges.push_back({it->second.first, trim(cols[0]), rel, it->second.second, trim(cols[2])});
      if (rel == manifest.interaction_relation)
        raw_interactions.push_back({trim(cols[0]), trim(cols[2])});
    }
  }

  Dataset ds;
  ds.name = manifest.name.empty() ? "generic" : manifest.name;
  ds.interaction_relation = manifest.interaction_relation;
  ds.hin = hin::build_hin(nodes, edges, schema);
  ds.hin.set_roles(ds.hin.require_type(manifest.user_type),
                   ds.hin.require_type(manifest.item_type));
  for (const auto& [u, i] : raw_interactions)
    ds.interactions.push_back({ds.hin.internal_id(ds.hin.user_type(), u),
                               ds.hin.internal_id(ds.hin.item_type(), i)});
  for (const DatasetManifest::PathDecl& decl : manifest.metapaths) {
    hin::MetaPath path = parse_metapath(ds.hin, decl.name, decl.steps, manifest.reverse_aliases);
    (decl.additional ? ds.extra_paths : ds.base_paths).push_back(std::move(path));
  }
  return ds;
}

Dataset load_dataset(const std::string& path) {
  if (fs::is_directory(path)) {
    if (fs::exists(fs::path(path) / "u.data")) return load_movielens(path);
    if (fs::exists(fs::path(path) / "manifest.txt"))
      return load_generic(DatasetManifest::from_file((fs::path(path) / "manifest.txt").string()));
    fail(ErrorCode::MissingFile,
         "directory " + path + " holds neither u.data nor manifest.txt");
  }
  if (!fs::exists(path)) fail(ErrorCode::MissingFile, "dataset path does not exist: " + path);
  return load_generic(DatasetManifest::from_file(path));
}

void export_tsv(const hin::Hin& hin, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir + "/nodes.tsv");
    for (hin::TypeId t = 0; t < hin.num_types(); ++t)
      for (int i = 0; i < hin.count(t); ++i)
        out << hin.external_id(t, i) << '\t' << hin.type_name(t) << '\n';
  }
  {
    std::ofstream out(dir + "/edges.tsv");
    for (const hin::Hin::Edge& e : hin.edges())
      out << hin.external_id(e.src_type, e.src) << '\t' << hin.relation_name(e.rel) << '\t'
          << hin.external_id(e.dst_type, e.dst) << '\n';
  }
  {
    std::ofstream out(dir + "/schema.tsv");
    for (const hin::SchemaTriple& s : hin.schema())
      out << hin.type_name(s.src_type) << '\t' << hin.relation_name(s.rel) << '\t'
          << hin.type_name(s.dst_type) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic fixtures
// ---------------------------------------------------------------------------

namespace {

struct FixtureShape {
  std::string user_type, item_type, interaction;
  // attribute types: (type name, relation from, count, attached-to-user?)
  struct Attribute {
    std::string type;
    std::string relation;
    int count;
    bool on_user;
  };
  std::vector<Attribute> attributes;
  std::vector<std::pair<std::string, std::string>> base_paths;   // name, steps
  std::vector<std::pair<std::string, std::string>> extra_paths;
};

FixtureShape shape_for(const std::string& name) {
  if (name == "movielens")
    return {"User",
            "Movie",
            "rate",
            {{"Age", "has_age", 5, true},
             {"Occupation", "has_occupation", 6, true},
             {"Genre", "has_genre", 6, false}},
            {{"UMU", "rate, rate_rev"},
             {"MUM", "rate_rev, rate"},
             {"MGM", "has_genre, has_genre_rev"}},
            {{"UMGMU", "rate, has_genre, has_genre_rev, rate_rev"},
             {"UAU", "has_age, has_age_rev"},
             {"UOU", "has_occupation, has_occupation_rev"},
             {"MUAUM", "rate_rev, has_age, has_age_rev, rate"}}};
  if (name == "amazon")
    return {"User",
            "Item",
            "rate",
            {{"View", "viewed_with", 10, false},
             {"Category", "has_category", 8, false},
             {"Brand", "has_brand", 8, false}},
            {{"UIU", "rate, rate_rev"},
             {"IUI", "rate_rev, rate"},
             {"IBI", "has_brand, has_brand_rev"},
             {"ICI", "has_category, has_category_rev"}},
            {{"UIBIU", "rate, has_brand, has_brand_rev, rate_rev"},
             {"UICIU", "rate, has_category, has_category_rev, rate_rev"},
             {"IVI", "viewed_with, viewed_with_rev"}}};
  if (name == "yelp")
    return {"User",
            "Business",
            "rate",
            {{"Compliment", "gives_compliment", 8, true},
             {"City", "in_city", 6, false},
             {"Category", "has_category", 8, false}},
            {{"UBU", "rate, rate_rev"},
             {"BUB", "rate_rev, rate"},
             {"BCiB", "in_city, in_city_rev"},
             {"BCaB", "has_category, has_category_rev"}},
            {{"UCoU", "gives_compliment, gives_compliment_rev"},
             {"UBCiBU", "rate, in_city, in_city_rev, rate_rev"},
             {"UBCaBU", "rate, has_category, has_category_rev, rate_rev"}}};
  fail(ErrorCode::ConfigError, "unknown fixture shape '" + name + "' (movielens, amazon, yelp)");
}

}  // namespace

void write_synthetic_fixture(const std::string& shape_name, const std::string& dir,
                             uint64_t seed) {
  const FixtureShape shape = shape_for(shape_name);
  const int users = 100, items = 80, blocks = 4;
  Rng rng(seed, "fixture." + shape_name);
  fs::create_directories(dir);

  std::ofstream nodes(dir + "/nodes.tsv");
  std::ofstream edges(dir + "/edges.tsv");
  std::ofstream schema(dir + "/schema.tsv");

  schema << shape.user_type << '\t' << shape.interaction << '\t' << shape.item_type << '\n';
  for (const auto& attr : shape.attributes)
    schema << (attr.on_user ? shape.user_type : shape.item_type) << '\t' << attr.relation << '\t'
           << attr.type << '\n';

  for (int u = 0; u < users; ++u) nodes << 'u' << u << '\t' << shape.user_type << '\n';
  for (int i = 0; i < items; ++i) nodes << 'i' << i << '\t' << shape.item_type << '\n';
  for (const auto& attr : shape.attributes)
    for (int a = 0; a < attr.count; ++a)
      nodes << attr.type << '_' << a << '\t' << attr.type << '\n';

  // blocked preferences with cross-block noise
  for (int u = 0; u < users; ++u)
    for (int i = 0; i < items; ++i) {
      const bool same_block = (u % blocks) == (i % blocks);
      const bool keep = same_block ? rng.bernoulli(0.55) : rng.bernoulli(0.03);
      if (keep)
        edges << 'u' << u << '\t' << shape.interaction << '\t' << 'i' << i << '\n';
    }
  // attributes correlate with blocks, plus one random assignment each
  for (const auto& attr : shape.attributes) {
    const int owners = attr.on_user ? users : items;
    const char prefix = attr.on_user ? 'u' : 'i';
    for (int o = 0; o < owners; ++o) {
      const int aligned = (o % blocks) % attr.count;
      edges << prefix << o << '\t' << attr.relation << '\t' << attr.type << '_' << aligned << '\n';
      if (rng.bernoulli(0.25)) {
        const int extra = static_cast<int>(rng.bounded(attr.count));
        if (extra != aligned)
          edges << prefix << o << '\t' << attr.relation << '\t' << attr.type << '_' << extra
                << '\n';
      }
    }
  }

  std::ofstream manifest(dir + "/manifest.txt");
  manifest << "name = synthetic-" << shape_name << '\n';
  manifest << "nodes = nodes.tsv\n";
  manifest << "edges = edges.tsv\n";
  manifest << "schema = schema.tsv\n";
  manifest << "user_type = " << shape.user_type << '\n';
  manifest << "item_type = " << shape.item_type << '\n';
  manifest << "interaction_relation = " << shape.interaction << '\n';
  for (const auto& [name, steps] : shape.base_paths)
    manifest << "metapath " << name << " = " << steps << '\n';
  for (const auto& [name, steps] : shape.extra_paths)
    manifest << "add_metapath " << name << " = " << steps << '\n';
}

}  // namespace mcl::app
