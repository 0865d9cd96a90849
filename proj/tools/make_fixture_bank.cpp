#include <CLI11.hpp>
#include <iostream>

#include "dvp/embedders.hpp"
#include "dvp/theme_bank.hpp"
#include "fixture_bank.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a small synthetic theme bank of PNGs, ingest and mock-index it", "make_fixture_bank"};
  app.option_defaults()->always_capture_default();
  std::string dir;
  std::string theme = "tintin";
  int count = 16;
  std::uint64_t seed = 1;
  bool index = true;
  app.add_option("dir", dir, "Output directory")->required();
  app.add_option("--theme", theme, "Theme name; picks the palette (tintin, ocean, forest)");
  app.add_option("--count", count, "Number of images");
  app.add_option("--seed", seed, "Pixel seed");
  app.add_option("--index", index, "Ingest and build the mock embedding cache");
  CLI11_PARSE(app, argc, argv);
  try {
    dvp::fixtures::write_bank(dir, theme, count, seed);
    if (index) {
      dvp::ingest(dir, theme);
      dvp::MockJointEmbedder embedder;
      dvp::index_bank(dir, embedder);
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  std::cout << "wrote " << count << " images to " << dir << "\n";
  return 0;
}
