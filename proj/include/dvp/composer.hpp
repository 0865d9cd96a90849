#pragma once

#include <functional>
#include <map>

#include "dvp/image.hpp"
#include "dvp/layout.hpp"

namespace dvp {

inline constexpr std::uint8_t kCanvasGray = 128;
inline constexpr std::uint8_t kMaskKeep = 0;
inline constexpr std::uint8_t kMaskGenerate = 255;

struct VisualPrompt {
  RasterImage composite;
  MaskImage mask;  // 255 on canvas pixels, 0 elsewhere
  SlotAssignment assignment;
  GridSpec grid;
};

// Resolves an image id to pixels; throws MissingImage when unknown.
using ImageSource = std::function<RasterImage(const ImageId&)>;

ImageSource map_source(const std::map<ImageId, RasterImage>& images);

// Every placed image is fitted (bilinear, shorter side to cell, centre crop)
// into its cell, inset by border_px on each side; canvas cells are mid-gray.
VisualPrompt compose(const SlotAssignment& assignment, const ImageSource& images, const GridSpec& grid);
VisualPrompt compose(const SlotAssignment& assignment, const std::map<ImageId, RasterImage>& images,
                     const GridSpec& grid);

MaskImage canvas_mask(const GridSpec& grid);

// Exact pixel copy of the canvas rectangle out of a full-size result.
RasterImage crop_canvas(const RasterImage& result, const GridSpec& grid);

}  // namespace dvp
