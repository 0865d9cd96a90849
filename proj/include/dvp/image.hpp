#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dvp/codec.hpp"
#include "dvp/error.hpp"

namespace dvp {

// Row-major interleaved 8-bit raster. Channels is 3 for RGB, 1 for masks.
template <int Channels>
struct Raster {
  static constexpr int channels = Channels;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * Channels, fill) {}

  bool empty() const { return width == 0 || height == 0; }

  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)) * Channels;
  }
  std::uint8_t* at(int x, int y) { return pixels.data() + offset(x, y); }
  const std::uint8_t* at(int x, int y) const { return pixels.data() + offset(x, y); }

  friend bool operator==(const Raster&, const Raster&) = default;
};

using RasterImage = Raster<3>;
using MaskImage = Raster<1>;

// Decodes PNG or JPEG (sniffed from magic bytes) to canonical RGB with any
// EXIF orientation already applied. Alpha is composited onto black.
RasterImage decode_image(std::span<const std::uint8_t> bytes);
RasterImage load_image(const std::string& path);

std::vector<std::uint8_t> encode_png(const RasterImage& image);
std::vector<std::uint8_t> encode_png(const MaskImage& mask);
MaskImage decode_png_mask(std::span<const std::uint8_t> bytes);

void save_png(const std::string& path, const RasterImage& image);
void save_png(const std::string& path, const MaskImage& mask);

// EXIF orientation tag (1..8) found in a JPEG APP1 segment or a PNG eXIf
// chunk; 1 when absent or unparseable.
int read_exif_orientation(std::span<const std::uint8_t> bytes);
int parse_exif_block(std::span<const std::uint8_t> tiff);
RasterImage apply_orientation(const RasterImage& src, int orientation);

// Identity hash over the canonical pixel form: u32le width, u32le height,
// then the RGB bytes.
Sha256 pixel_digest(const RasterImage& image);

// Aspect-preserving bilinear resize so the shorter side equals `cell`,
// then a centered cell x cell crop.
RasterImage fit_cell(const RasterImage& src, int cell);

RasterImage crop(const RasterImage& src, int x, int y, int w, int h);

}  // namespace dvp
