#pragma once

#include <compare>
#include <map>
#include <string>
#include <vector>

#include "dvp/similarity.hpp"

namespace dvp {

struct Cell {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

std::string to_string(const Cell& c);

struct GridSpec {
  int rows = 3;
  int cols = 3;
  int cell_px = 512;
  int border_px = 0;
  std::vector<Cell> canvas_cells;  // row-major, forms one rectangle

  bool in_bounds(const Cell& c) const {
    return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols;
  }
  bool is_canvas(const Cell& c) const;
  // Non-canvas cells, row-major.
  std::vector<Cell> reference_cells() const;
  std::size_t reference_slots() const {
    return static_cast<std::size_t>(rows * cols) - canvas_cells.size();
  }
  // Inclusive corners of the canvas rectangle.
  Cell canvas_min() const { return canvas_cells.front(); }
  Cell canvas_max() const { return canvas_cells.back(); }

  int width_px() const { return cols * cell_px; }
  int height_px() const { return rows * cell_px; }

  // Throws InvalidArgument / ZeroSizeCell when an invariant is broken.
  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// rows x cols grid whose canvas is the inclusive rectangle [first, last].
GridSpec make_grid(int rows, int cols, Cell canvas_first, Cell canvas_last, int cell_px = 512);

// 3x3 with the centre cell as canvas: 8 reference slots.
GridSpec default_grid(int cell_px = 512);

// Fixed geometries for the reference-count ablation: 8 (3x3, centre canvas),
// 4 (2x3, middle column canvas) and 2 (1x3, centre canvas).
GridSpec ablation_grid(std::size_t reference_slots, int cell_px = 512);

// "3x3" plus a canvas spec: "center", "r,c" or "r0,c0:r1,c1".
GridSpec parse_grid(const std::string& dims, const std::string& canvas, int cell_px = 512);

struct AttentionPrior {
  std::map<Cell, double> intensities;
  std::string source;
};

// Requires one non-negative entry for every reference cell, none elsewhere.
void validate_prior(const AttentionPrior& prior, const GridSpec& grid);
AttentionPrior parse_prior(const std::string& json_text, const GridSpec& grid);
std::string prior_to_json(const AttentionPrior& prior, const GridSpec& grid);

// The q highest-intensity cells, descending; ties by (row, col).
std::vector<Cell> star_cells(const AttentionPrior& prior, std::size_t q);

// The in-bounds cells immediately left and right of the canvas, on the
// canvas's first row.
std::vector<Cell> default_stars(const GridSpec& grid);

// "r,c;r,c"
std::vector<Cell> parse_cells(const std::string& text);

struct Arrangement {
  std::size_t id = 0;
  std::vector<std::size_t> row_assignment;  // element index -> row band

  friend bool operator==(const Arrangement&, const Arrangement&) = default;
};

inline constexpr std::size_t kMaxElements = 5;

// All n! element-to-band permutations in lexicographic order.
std::vector<Arrangement> enumerate_arrangements(std::size_t n);

// Reference cells split into n bands. When the grid has exactly n rows each
// band is one grid row; otherwise the row-major reference cells are cut into
// n contiguous, near-equal chunks (earlier chunks take the remainder).
std::vector<std::vector<Cell>> row_bands(const GridSpec& grid, std::size_t n);

using Pins = std::map<Cell, ImageId>;

void validate_pins(const Pins& pins, const GridSpec& grid);

struct SlotAssignment {
  std::map<Cell, ImageId> placements;
  Pins pins;
  std::map<Cell, int> element_of;  // -1 for pinned cells

  friend bool operator==(const SlotAssignment&, const SlotAssignment&) = default;
};

std::vector<std::uint8_t> assignment_bytes(const SlotAssignment& a);

// Pins first; then each element's candidates fill its band best-first, with
// the band's starred cells (in star order) ahead of its other free cells in
// row-major order. Candidates that do not fit are dropped; a band with more
// free cells than candidates takes the best leftovers from other bands.
SlotAssignment assign_slots(const CandidateTable& table, const Arrangement& arrangement,
                            const GridSpec& grid, const std::vector<Cell>& stars,
                            const Pins& pins);

}  // namespace dvp
