#include <catch_amalgamated.hpp>

#include "dvp/composer.hpp"
#include "oracle_resize.hpp"

using namespace dvp;

namespace {

SlotAssignment fill_all(const GridSpec& g, const std::vector<ImageId>& ids) {
  SlotAssignment a;
  std::size_t i = 0;
  for (const auto& c : g.reference_cells()) {
    a.placements[c] = ids[i++ % ids.size()];
    a.element_of[c] = 0;
  }
  return a;
}

std::map<ImageId, RasterImage> solid_images(int n) {
  std::map<ImageId, RasterImage> m;
  for (int i = 0; i < n; ++i) {
    RasterImage img(40 + i, 30 + 2 * i);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(20 * i + 5);
    m["img" + std::to_string(i)] = img;
  }
  return m;
}

}  // namespace

TEST_CASE("default grid at 256 px: composite and mask geometry") {
  GridSpec g = default_grid(256);
  auto images = solid_images(8);
  std::vector<ImageId> ids;
  for (const auto& [id, _] : images) ids.push_back(id);
  auto vp = compose(fill_all(g, ids), images, g);
  REQUIRE(vp.composite.width == 768);
  REQUIRE(vp.composite.height == 768);
  REQUIRE(vp.mask.width == 768);
  for (int y = 0; y < 768; ++y) {
    for (int x = 0; x < 768; ++x) {
      const bool inside = x >= 256 && x < 512 && y >= 256 && y < 512;
      REQUIRE(vp.mask.at(x, y)[0] == (inside ? kMaskGenerate : kMaskKeep));
      if (inside) REQUIRE(vp.composite.at(x, y)[1] == kCanvasGray);
    }
  }
}

TEST_CASE("each cell holds exactly its fitted image") {
  GridSpec g = default_grid(64);
  std::map<ImageId, RasterImage> images;
  std::vector<ImageId> ids;
  for (int i = 0; i < 8; ++i) {
    ids.push_back("g" + std::to_string(i));
    images[ids.back()] = oracle::gradient(50 + 13 * i, 90 - 7 * i);
  }
  auto a = fill_all(g, ids);
  auto vp = compose(a, images, g);
  for (const auto& c : g.reference_cells()) {
    auto expected = oracle::resize_then_crop(images.at(a.placements.at(c)), 64);
    CHECK(crop(vp.composite, c.col * 64, c.row * 64, 64, 64) == expected);
  }
}

TEST_CASE("changing one placement only changes that cell") {
  GridSpec g = default_grid(32);
  auto images = solid_images(9);
  std::vector<ImageId> ids;
  for (const auto& [id, _] : images) ids.push_back(id);
  auto a = fill_all(g, std::vector<ImageId>(ids.begin(), ids.begin() + 8));
  auto base = compose(a, images, g);
  for (const auto& target : g.reference_cells()) {
    auto b = a;
    b.placements[target] = ids[8];
    auto vp = compose(b, images, g);
    for (int y = 0; y < 96; ++y) {
      for (int x = 0; x < 96; ++x) {
        const bool in_target = x / 32 == target.col && y / 32 == target.row;
        if (!in_target) REQUIRE(std::equal(vp.composite.at(x, y), vp.composite.at(x, y) + 3, base.composite.at(x, y)));
      }
    }
    CHECK(vp.mask == base.mask);
  }
}

TEST_CASE("a 1x2 grid keeps the left reference and masks the right half") {
  GridSpec g = make_grid(1, 2, {0, 1}, {0, 1}, 16);
  std::map<ImageId, RasterImage> images = {{"a", RasterImage(16, 16, 200)}};
  SlotAssignment a;
  a.placements[{0, 0}] = "a";
  a.element_of[{0, 0}] = 0;
  auto vp = compose(a, images, g);
  CHECK(vp.composite.at(3, 3)[0] == 200);
  CHECK(vp.composite.at(20, 3)[0] == kCanvasGray);
  CHECK(vp.mask.at(3, 3)[0] == 0);
  CHECK(vp.mask.at(20, 3)[0] == 255);
}

TEST_CASE("borders inset the image and stay black") {
  GridSpec g = default_grid(32);
  g.border_px = 4;
  auto images = solid_images(1);
  auto vp = compose(fill_all(g, {"img0"}), images, g);
  CHECK(vp.composite.at(0, 0)[0] == 0);
  CHECK(vp.composite.at(4, 4)[0] == 5);
  CHECK(vp.composite.at(28, 28)[0] == 0);
}

TEST_CASE("crop_canvas returns the canvas region") {
  GridSpec g = default_grid(256);
  auto images = solid_images(2);
  auto vp = compose(fill_all(g, {"img0", "img1"}), images, g);
  auto canvas = crop_canvas(vp.composite, g);
  CHECK(canvas.width == 256);
  CHECK(canvas.height == 256);
  CHECK(canvas == RasterImage(256, 256, kCanvasGray));

  RasterImage marked = vp.composite;
  marked.at(256, 256)[0] = 7;
  CHECK(crop_canvas(marked, g).at(0, 0)[0] == 7);
  try {
    (void)crop_canvas(RasterImage(700, 768), g);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DimensionMismatch);
  }
}

TEST_CASE("missing images are reported") {
  GridSpec g = default_grid(16);
  try {
    (void)compose(fill_all(g, {"ghost"}), std::map<ImageId, RasterImage>{}, g);
    FAIL("expected MissingImage");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingImage);
  }
}

TEST_CASE("composite PNG bytes are stable across runs") {
  GridSpec g = default_grid(48);
  std::map<ImageId, RasterImage> images;
  std::vector<ImageId> ids;
  for (int i = 0; i < 8; ++i) {
    ids.push_back("g" + std::to_string(i));
    images[ids.back()] = oracle::gradient(60 + i, 48 + 3 * i);
  }
  auto a = compose(fill_all(g, ids), images, g);
  auto b = compose(fill_all(g, ids), images, g);
  CHECK(sha256(encode_png(a.composite)) == sha256(encode_png(b.composite)));
  CHECK(decode_image(encode_png(a.composite)) == a.composite);
}
