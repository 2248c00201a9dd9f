// Regenerates the synthetic fixture datasets under data/fixtures/.
#include <cstdio>
#include <string>

#include "mcl/mcl.h"

int main(int argc, char** argv) {
  const char* root = argc > 1 ? argv[1] : "data/fixtures";
  const char* shapes[] = {"movielens", "amazon", "yelp"};
  for (const char* shape : shapes) {
    const std::string dir = std::string(root) + "/" + shape;
    if (mcl_write_fixture(shape, dir.c_str(), 20240501) != MCL_OK) {
      std::fprintf(stderr, "failed to write %s fixture\n", shape);
      return 1;
    }
    std::printf("wrote %s\n", dir.c_str());
  }
  return 0;
}
