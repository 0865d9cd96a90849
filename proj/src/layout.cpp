#include "dvp/layout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dvp {

using nlohmann::json;

std::string to_string(const Cell& c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

bool GridSpec::is_canvas(const Cell& c) const {
  return std::binary_search(canvas_cells.begin(), canvas_cells.end(), c);
}

std::vector<Cell> GridSpec::reference_cells() const {
  std::vector<Cell> out;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!is_canvas({r, c})) out.push_back({r, c});
    }
  }
  return out;
}

void GridSpec::validate() const {
  if (rows <= 0 || cols <= 0) throw Error(Errc::InvalidArgument, "grid needs positive rows and cols");
  if (cell_px <= 0) throw Error(Errc::ZeroSizeCell, "cell_px must be positive");
  if (border_px < 0 || 2 * border_px >= cell_px) {
    throw Error(Errc::ZeroSizeCell, "border leaves no room inside a cell");
  }
  if (canvas_cells.empty()) throw Error(Errc::InvalidArgument, "grid has no canvas cell");
  if (!std::is_sorted(canvas_cells.begin(), canvas_cells.end()) ||
      std::adjacent_find(canvas_cells.begin(), canvas_cells.end()) != canvas_cells.end()) {
    throw Error(Errc::InvalidArgument, "canvas cells must be unique and row-major");
  }
  for (const auto& c : canvas_cells) {
    if (!in_bounds(c)) throw Error(Errc::InvalidArgument, "canvas cell " + to_string(c) + " out of bounds");
  }
  const Cell lo = canvas_cells.front(), hi = canvas_cells.back();
  const auto area = static_cast<std::size_t>((hi.row - lo.row + 1) * (hi.col - lo.col + 1));
  bool rect = hi.col >= lo.col && area == canvas_cells.size();
  for (const auto& c : canvas_cells) rect = rect && c.col >= lo.col && c.col <= hi.col;
  if (!rect) throw Error(Errc::InvalidArgument, "canvas cells must form one rectangle");
  if (reference_slots() < 1) throw Error(Errc::InvalidArgument, "grid has no reference slot");
}

GridSpec make_grid(int rows, int cols, Cell first, Cell last, int cell_px) {
  GridSpec g;
  g.rows = rows;
  g.cols = cols;
  g.cell_px = cell_px;
  for (int r = first.row; r <= last.row; ++r) {
    for (int c = first.col; c <= last.col; ++c) g.canvas_cells.push_back({r, c});
  }
  g.validate();
  return g;
}

GridSpec default_grid(int cell_px) { return make_grid(3, 3, {1, 1}, {1, 1}, cell_px); }

GridSpec ablation_grid(std::size_t reference_slots, int cell_px) {
  switch (reference_slots) {
    case 8: return default_grid(cell_px);
    case 4: return make_grid(1, 5, {0, 2}, {0, 2}, cell_px);
    case 2: return make_grid(1, 3, {0, 1}, {0, 1}, cell_px);
    default:
      throw Error(Errc::InvalidArgument,
                  "no ablation geometry for " + std::to_string(reference_slots) + " references");
  }
}

namespace {

int parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw Error(Errc::InvalidArgument, "bad " + what + ": '" + s + "'");
  return v;
}

Cell parse_cell(const std::string& s) {
  auto comma = s.find(',');
  if (comma == std::string::npos) throw Error(Errc::InvalidArgument, "cell must be 'row,col': '" + s + "'");
  return {parse_int(s.substr(0, comma), "row"), parse_int(s.substr(comma + 1), "col")};
}

}  // namespace

GridSpec parse_grid(const std::string& dims, const std::string& canvas, int cell_px) {
  auto x = dims.find_first_of("xX");
  if (x == std::string::npos) throw Error(Errc::InvalidArgument, "grid must look like 3x3: '" + dims + "'");
  const int rows = parse_int(dims.substr(0, x), "grid rows");
  const int cols = parse_int(dims.substr(x + 1), "grid cols");
  if (rows <= 0 || cols <= 0) throw Error(Errc::InvalidArgument, "grid dims must be positive");
  if (canvas.empty() || canvas == "center") {
    return make_grid(rows, cols, {rows / 2, cols / 2}, {rows / 2, cols / 2}, cell_px);
  }
  auto colon = canvas.find(':');
  if (colon == std::string::npos) {
    Cell c = parse_cell(canvas);
    return make_grid(rows, cols, c, c, cell_px);
  }
  return make_grid(rows, cols, parse_cell(canvas.substr(0, colon)), parse_cell(canvas.substr(colon + 1)),
                   cell_px);
}

std::vector<Cell> parse_cells(const std::string& text) {
  std::vector<Cell> cells;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (!item.empty()) cells.push_back(parse_cell(item));
  }
  return cells;
}

void validate_prior(const AttentionPrior& prior, const GridSpec& grid) {
  for (const auto& [cell, v] : prior.intensities) {
    if (!grid.in_bounds(cell) || grid.is_canvas(cell)) {
      throw Error(Errc::InvalidArgument, "attention prior has an entry for non-reference cell " + to_string(cell));
    }
    if (!std::isfinite(v) || v < 0) {
      throw Error(Errc::InvalidArgument, "attention intensity at " + to_string(cell) + " must be finite and >= 0");
    }
  }
  if (prior.intensities.size() != grid.reference_slots()) {
    throw Error(Errc::InvalidArgument, "attention prior must cover every reference cell exactly once");
  }
}

AttentionPrior parse_prior(const std::string& json_text, const GridSpec& grid) {
  AttentionPrior prior;
  try {
    json doc = json::parse(json_text);
    const auto& g = doc.at("grid");
    if (g.at("rows").get<int>() != grid.rows || g.at("cols").get<int>() != grid.cols) {
      throw Error(Errc::InvalidArgument, "attention prior grid does not match the layout grid");
    }
    for (const auto& e : doc.at("intensities")) {
      if (!e.is_array() || e.size() != 3) throw Error(Errc::InvalidArgument, "intensity entries are [row, col, value]");
      Cell c{e[0].get<int>(), e[1].get<int>()};
      if (!prior.intensities.emplace(c, e[2].get<double>()).second) {
        throw Error(Errc::InvalidArgument, "duplicate attention entry for " + to_string(c));
      }
    }
    prior.source = doc.value("source", "");
  } catch (const json::exception& ex) {
    throw Error(Errc::InvalidArgument, std::string("malformed attention prior: ") + ex.what());
  }
  validate_prior(prior, grid);
  return prior;
}

std::string prior_to_json(const AttentionPrior& prior, const GridSpec& grid) {
  json doc;
  doc["grid"] = {{"rows", grid.rows}, {"cols", grid.cols}};
  json entries = json::array();
  for (const auto& [c, v] : prior.intensities) entries.push_back({c.row, c.col, v});
  doc["intensities"] = std::move(entries);
  doc["source"] = prior.source;
  return doc.dump(2) + "\n";
}

std::vector<Cell> star_cells(const AttentionPrior& prior, std::size_t q) {
  if (q > prior.intensities.size()) {
    throw Error(Errc::QTooLarge, "q=" + std::to_string(q) + " exceeds " +
                                     std::to_string(prior.intensities.size()) + " reference cells");
  }
  std::vector<std::pair<Cell, double>> ranked(prior.intensities.begin(), prior.intensities.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<Cell> out;
  for (std::size_t i = 0; i < q; ++i) out.push_back(ranked[i].first);
  return out;
}

std::vector<Cell> default_stars(const GridSpec& grid) {
  const Cell lo = grid.canvas_min(), hi = grid.canvas_max();
  std::vector<Cell> out;
  if (Cell left{lo.row, lo.col - 1}; grid.in_bounds(left)) out.push_back(left);
  if (Cell right{lo.row, hi.col + 1}; grid.in_bounds(right)) out.push_back(right);
  return out;
}

std::vector<Arrangement> enumerate_arrangements(std::size_t n) {
  if (n == 0) throw Error(Errc::InvalidArgument, "need at least one element");
  if (n > kMaxElements) {
    throw Error(Errc::TooManyElements, std::to_string(n) + " elements exceed the limit of " +
                                           std::to_string(kMaxElements));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<Arrangement> out;
  do {
    out.push_back({out.size(), perm});
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

std::vector<std::vector<Cell>> row_bands(const GridSpec& grid, std::size_t n) {
  if (n == 0) throw Error(Errc::InvalidArgument, "need at least one element");
  std::vector<std::vector<Cell>> bands(n);
  const auto cells = grid.reference_cells();
  if (static_cast<std::size_t>(grid.rows) == n) {
    for (const auto& c : cells) bands[static_cast<std::size_t>(c.row)].push_back(c);
    return bands;
  }
  const std::size_t base = cells.size() / n, extra = cells.size() % n;
  std::size_t at = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t take = base + (b < extra ? 1 : 0);
    bands[b].assign(cells.begin() + static_cast<std::ptrdiff_t>(at),
                    cells.begin() + static_cast<std::ptrdiff_t>(at + take));
    at += take;
  }
  return bands;
}

void validate_pins(const Pins& pins, const GridSpec& grid) {
  for (const auto& [cell, id] : pins) {
    if (!grid.in_bounds(cell)) throw Error(Errc::PinOutOfBounds, "pin " + to_string(cell) + " is outside the grid");
    if (grid.is_canvas(cell)) throw Error(Errc::PinOnCanvas, "pin " + to_string(cell) + " is on the canvas");
    if (id.empty()) throw Error(Errc::InvalidArgument, "pin " + to_string(cell) + " has no image");
  }
}

std::vector<std::uint8_t> assignment_bytes(const SlotAssignment& a) {
  std::vector<std::uint8_t> out;
  auto put = [&](const Cell& c, const std::string& id, int element) {
    out.push_back(static_cast<std::uint8_t>(c.row));
    out.push_back(static_cast<std::uint8_t>(c.col));
    out.push_back(static_cast<std::uint8_t>(element + 1));
    out.insert(out.end(), id.begin(), id.end());
    out.push_back(0);
  };
  for (const auto& [c, id] : a.placements) put(c, id, a.element_of.at(c));
  out.push_back(0xFF);
  for (const auto& [c, id] : a.pins) put(c, id, -1);
  return out;
}

SlotAssignment assign_slots(const CandidateTable& table, const Arrangement& arrangement,
                            const GridSpec& grid, const std::vector<Cell>& stars, const Pins& pins) {
  grid.validate();
  validate_pins(pins, grid);
  const std::size_t n = table.n();
  if (n == 0) throw Error(Errc::InvalidArgument, "candidate table is empty");
  if (arrangement.row_assignment.size() != n) {
    throw Error(Errc::InvalidArgument, "arrangement covers " + std::to_string(arrangement.row_assignment.size()) +
                                           " elements, table has " + std::to_string(n));
  }
  for (const auto& s : stars) {
    if (!grid.in_bounds(s) || grid.is_canvas(s)) {
      throw Error(Errc::InvalidArgument, "star " + to_string(s) + " is not a reference cell");
    }
  }
  std::size_t candidates = 0;
  for (const auto& row : table.rows) candidates += row.size();
  if (grid.reference_slots() > candidates + pins.size()) {
    throw Error(Errc::InsufficientCandidates,
                std::to_string(grid.reference_slots()) + " slots but only " +
                    std::to_string(candidates) + " candidates and " + std::to_string(pins.size()) + " pins");
  }

  SlotAssignment out;
  out.pins = pins;
  for (const auto& [cell, id] : pins) {
    out.placements[cell] = id;
    out.element_of[cell] = -1;
  }
  std::set<ImageId> pinned_ids;
  for (const auto& [cell, id] : pins) pinned_ids.insert(id);

  const auto bands = row_bands(grid, n);
  struct Leftover {
    double score;
    std::size_t element;
    ImageId id;
  };
  std::vector<Leftover> leftovers;
  std::vector<Cell> unfilled;

  for (std::size_t e = 0; e < n; ++e) {
    const auto& band = bands.at(arrangement.row_assignment[e]);
    std::vector<Cell> order;
    for (const auto& s : stars) {
      if (std::find(band.begin(), band.end(), s) != band.end() && !pins.contains(s)) order.push_back(s);
    }
    for (const auto& c : band) {
      if (!pins.contains(c) && std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
    }
    std::vector<const MatchScore*> mine;
    for (const auto& m : table.rows[e]) {
      if (!pinned_ids.contains(m.image_id)) mine.push_back(&m);
    }
    std::size_t i = 0;
    for (; i < order.size() && i < mine.size(); ++i) {
      out.placements[order[i]] = mine[i]->image_id;
      out.element_of[order[i]] = static_cast<int>(e);
    }
    for (std::size_t j = i; j < order.size(); ++j) unfilled.push_back(order[j]);
    for (std::size_t j = i; j < mine.size(); ++j) leftovers.push_back({mine[j]->score, e, mine[j]->image_id});
  }

  if (!unfilled.empty()) {
    std::sort(unfilled.begin(), unfilled.end());
    std::stable_sort(leftovers.begin(), leftovers.end(), [](const Leftover& a, const Leftover& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.element != b.element) return a.element < b.element;
      return a.id < b.id;
    });
    std::size_t next = 0;
    for (const auto& cell : unfilled) {
      if (next < leftovers.size()) {
        out.placements[cell] = leftovers[next].id;
        out.element_of[cell] = static_cast<int>(leftovers[next].element);
        ++next;
        continue;
      }
      // Out of distinct candidates: repeat the band owner's best one.
      std::size_t owner = 0;
      for (std::size_t e = 0; e < n; ++e) {
        const auto& band = bands[arrangement.row_assignment[e]];
        if (std::find(band.begin(), band.end(), cell) != band.end()) owner = e;
      }
      const MatchScore* best = nullptr;
      for (const auto& m : table.rows[owner]) {
        if (!pinned_ids.contains(m.image_id)) {
          best = &m;
          break;
        }
      }
      if (best == nullptr && !table.rows[owner].empty()) best = &table.rows[owner].front();
      if (best == nullptr) {
        throw Error(Errc::InsufficientCandidates, "no candidate available for cell " + to_string(cell));
      }
      out.placements[cell] = best->image_id;
      out.element_of[cell] = static_cast<int>(owner);
    }
  }
  return out;
}

}  // namespace dvp
