#include "dvp/composer.hpp"

#include <cstring>

namespace dvp {

ImageSource map_source(const std::map<ImageId, RasterImage>& images) {
  return [&images](const ImageId& id) -> RasterImage {
    auto it = images.find(id);
    if (it == images.end()) throw Error(Errc::MissingImage, "no pixels for image " + id);
    return it->second;
  };
}

MaskImage canvas_mask(const GridSpec& grid) {
  grid.validate();
  MaskImage mask(grid.width_px(), grid.height_px(), kMaskKeep);
  for (const auto& c : grid.canvas_cells) {
    for (int y = 0; y < grid.cell_px; ++y) {
      std::memset(mask.at(c.col * grid.cell_px, c.row * grid.cell_px + y), kMaskGenerate,
                  static_cast<std::size_t>(grid.cell_px));
    }
  }
  return mask;
}

VisualPrompt compose(const SlotAssignment& assignment, const ImageSource& images, const GridSpec& grid) {
  grid.validate();
  const int cell = grid.cell_px;
  const int inner = cell - 2 * grid.border_px;
  VisualPrompt vp;
  vp.grid = grid;
  vp.assignment = assignment;
  vp.composite = RasterImage(grid.width_px(), grid.height_px(), 0);
  vp.mask = canvas_mask(grid);

  for (const auto& c : grid.canvas_cells) {
    for (int y = 0; y < cell; ++y) {
      std::memset(vp.composite.at(c.col * cell, c.row * cell + y), kCanvasGray,
                  static_cast<std::size_t>(cell) * 3);
    }
  }
  std::map<ImageId, RasterImage> fitted;
  for (const auto& c : grid.reference_cells()) {
    auto placed = assignment.placements.find(c);
    if (placed == assignment.placements.end()) {
      throw Error(Errc::MissingImage, "no image assigned to cell " + to_string(c));
    }
    auto it = fitted.find(placed->second);
    if (it == fitted.end()) it = fitted.emplace(placed->second, fit_cell(images(placed->second), inner)).first;
    const RasterImage& tile = it->second;
    const int x0 = c.col * cell + grid.border_px;
    const int y0 = c.row * cell + grid.border_px;
    for (int y = 0; y < inner; ++y) {
      std::memcpy(vp.composite.at(x0, y0 + y), tile.at(0, y), static_cast<std::size_t>(inner) * 3);
    }
  }
  return vp;
}

VisualPrompt compose(const SlotAssignment& assignment, const std::map<ImageId, RasterImage>& images,
                     const GridSpec& grid) {
  return compose(assignment, map_source(images), grid);
}

RasterImage crop_canvas(const RasterImage& result, const GridSpec& grid) {
  grid.validate();
  if (result.width != grid.width_px() || result.height != grid.height_px()) {
    throw Error(Errc::DimensionMismatch,
                "result is " + std::to_string(result.width) + "x" + std::to_string(result.height) +
                    ", composite is " + std::to_string(grid.width_px()) + "x" + std::to_string(grid.height_px()));
  }
  const Cell lo = grid.canvas_min(), hi = grid.canvas_max();
  return crop(result, lo.col * grid.cell_px, lo.row * grid.cell_px, (hi.col - lo.col + 1) * grid.cell_px,
              (hi.row - lo.row + 1) * grid.cell_px);
}

}  // namespace dvp
