// Exercises the public extern-C surface end to end, the way an embedding
// application (or the CLI) drives it.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "mcl/mcl.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("mcl_capi_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

struct Engine {
  mcl_engine* ptr;
  Engine() : ptr(mcl_engine_new()) {}
  ~Engine() { mcl_engine_free(ptr); }
};

}  // namespace

TEST_CASE("version string") {
  CHECK(std::strlen(mcl_version()) > 0);
}

TEST_CASE("error paths set status and message") {
  Engine e;
  SUBCASE("training without a dataset is a config error") {
    CHECK(mcl_run_train(e.ptr, "/tmp/none") == MCL_ERR_CONFIG);
    CHECK(std::string(mcl_last_error(e.ptr)).find("no dataset") != std::string::npos);
  }
  SUBCASE("unknown config key") {
    CHECK(mcl_config_set(e.ptr, "momentum", "0.9") == MCL_ERR_CONFIG);
    CHECK(std::string(mcl_last_error(e.ptr)).find("unknown config key") != std::string::npos);
  }
  SUBCASE("missing dataset path is a data error") {
    CHECK(mcl_load_dataset(e.ptr, "/nonexistent/path") == MCL_ERR_DATA);
  }
  SUBCASE("success clears the last error") {
    CHECK(mcl_config_set(e.ptr, "momentum", "0.9") == MCL_ERR_CONFIG);
    CHECK(mcl_config_set(e.ptr, "lr", "0.05") == MCL_OK);
    CHECK(std::string(mcl_last_error(e.ptr)).empty());
  }
}

TEST_CASE("fixture -> train -> evaluate -> export through the C API") {
  TempDir data("data");
  TempDir out("out");
  REQUIRE(mcl_write_fixture("movielens", data.str().c_str(), 17) == MCL_OK);

  Engine e;
  REQUIRE(mcl_config_set(e.ptr, "d", "10") == MCL_OK);
  REQUIRE(mcl_config_set(e.ptr, "epochs", "5") == MCL_OK);
  REQUIRE(mcl_config_set(e.ptr, "batch", "128") == MCL_OK);
  REQUIRE(mcl_config_set(e.ptr, "prop_order_L", "1") == MCL_OK);
  REQUIRE(mcl_config_set(e.ptr, "seed", "4") == MCL_OK);
  REQUIRE(mcl_load_dataset(e.ptr, data.str().c_str()) == MCL_OK);

  REQUIRE(mcl_run_train(e.ptr, out.str().c_str()) == MCL_OK);
  const double recall20 = mcl_metric(e.ptr, "recall", 20);
  const double ndcg20 = mcl_metric(e.ptr, "ndcg", 20);
  CHECK(recall20 > 0.0);
  CHECK(recall20 <= 1.0);
  CHECK(ndcg20 > 0.0);
  CHECK(mcl_metric(e.ptr, "recall", 7) == -1.0);
  CHECK(mcl_best_val_recall20(e.ptr) >= 0.0);

  const std::string run_dir = out.str() + "/synthetic-movielens-clean-s4";
  const std::string checkpoint = run_dir + "/checkpoint.bin";
  REQUIRE(fs::exists(checkpoint));

  SUBCASE("evaluate reproduces the training metrics") {
    REQUIRE(mcl_run_evaluate(e.ptr, checkpoint.c_str(), out.str().c_str()) == MCL_OK);
    CHECK(mcl_metric(e.ptr, "recall", 20) == doctest::Approx(recall20).epsilon(1e-12));
  }
  SUBCASE("embedding export writes one row per user and item") {
    const std::string tsv = out.str() + "/embs.tsv";
    REQUIRE(mcl_export_embeddings(e.ptr, checkpoint.c_str(), tsv.c_str()) == MCL_OK);
    std::ifstream in(tsv);
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 180);  // 100 users + 80 items
  }
  SUBCASE("sweep over a tiny grid succeeds") {
    REQUIRE(mcl_run_sweep(e.ptr, out.str().c_str(), "tau=0.6,0.8") == MCL_OK);
    CHECK(fs::exists(out.str() + "/sweep_summary.csv"));
    CHECK(mcl_run_sweep(e.ptr, out.str().c_str(), "nope=1") == MCL_ERR_CONFIG);
  }
}
