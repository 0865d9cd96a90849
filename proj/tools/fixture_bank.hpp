#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dvp/codec.hpp"
#include "dvp/image.hpp"

namespace dvp::fixtures {

struct Palette {
  std::array<int, 3> base;
  std::array<int, 3> accent;
};

inline Palette palette_for(const std::string& theme) {
  if (theme == "ocean") return {{30, 90, 170}, {220, 230, 240}};
  if (theme == "forest") return {{40, 120, 50}, {120, 80, 40}};
  return {{200, 70, 40}, {250, 210, 80}};  // warm default
}

// Smooth background near the theme colour with one accent disc. Every
// fourth image is landscape so resizing paths get exercised.
inline RasterImage themed_image(const Palette& p, std::uint64_t seed, int index) {
  SplitMix64 rng(seed * 0x100000001B3ULL + static_cast<std::uint64_t>(index) + 1);
  const int w = index % 4 == 3 ? 96 : 64;
  const int h = 64;
  RasterImage img(w, h);
  std::array<double, 3> jitter{};
  for (auto& j : jitter) j = 24.0 * rng.next_signed_unit();
  const double cx = w * (0.3 + 0.4 * (rng.next_signed_unit() + 1.0) / 2.0);
  const double cy = h * (0.3 + 0.4 * (rng.next_signed_unit() + 1.0) / 2.0);
  const double r = 8.0 + 8.0 * (rng.next_signed_unit() + 1.0) / 2.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool disc = std::hypot(x - cx, y - cy) < r;
      const double shade = 0.85 + 0.3 * static_cast<double>(y) / h;
      for (int c = 0; c < 3; ++c) {
        double v = disc ? p.accent[c] + jitter[c] / 2 : (p.base[c] + jitter[c]) * shade;
        img.at(x, y)[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

inline void write_bank(const std::filesystem::path& dir, const std::string& theme, int count, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const Palette p = palette_for(theme);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%s-%02d.png", theme.c_str(), i);
    save_png((dir / name).string(), themed_image(p, seed, i));
  }
}

}  // namespace dvp::fixtures
