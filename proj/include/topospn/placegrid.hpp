#pragma once

// Fixed-size category rasters of topological maps and the rotation-invariant
// grid network.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "topospn/spn.hpp"
#include "topospn/topomap.hpp"

namespace topospn {

enum class CollisionRule : std::uint8_t { HighestScore, Deterministic };

struct GridConfig {
  std::size_t rows = 15;
  std::size_t cols = 10;
  double resolution = 1.5;  // meters per cell
  CollisionRule collision_rule = CollisionRule::HighestScore;

  void validate() const;
  std::size_t num_cells() const { return rows * cols; }
};

// Returns a warning when cells are coarser than the place spacing, in which
// case neighboring places may share a cell.
std::optional<std::string> resolution_warning(const GridConfig& config, double node_spacing);

// The first five values coincide with Category.
enum class Cell : std::uint8_t { Corridor = 0, Doorway, SmallOffice, LargeOffice, Unknown, Empty, Missing };

Cell cell_from_category(Category c);
// Text codes: C D S L U . ?
char cell_code(Cell c);
Cell cell_from_code(char code);

struct GridIndex {
  std::size_t row, col;
  friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

class PlaceGrid {
 public:
  PlaceGrid() = default;
  PlaceGrid(std::size_t rows, std::size_t cols, Cell fill = Cell::Empty);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return cells_.size(); }
  // Row-major: variable index = row * cols + col.
  std::size_t index(std::size_t row, std::size_t col) const { return row * cols_ + col; }

  Cell at(std::size_t row, std::size_t col) const { return cells_[index(row, col)]; }
  void set(std::size_t row, std::size_t col, Cell c) { cells_[index(row, col)] = c; }
  const std::vector<Cell>& cells() const { return cells_; }
  std::vector<Cell>& mutable_cells() { return cells_; }

  // Ids of all places projected into each cell, ascending; absent for grids
  // that were not produced by project().
  const std::optional<std::vector<std::vector<PlaceId>>>& back_mapping() const { return back_mapping_; }
  void set_back_mapping(std::vector<std::vector<PlaceId>> mapping);

  std::string to_text() const;
  static PlaceGrid from_text(const std::string& text);

  friend bool operator==(const PlaceGrid&, const PlaceGrid&) = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<Cell> cells_;
  std::optional<std::vector<std::vector<PlaceId>>> back_mapping_;
};

// x maps to rows and y to columns, both relative to the minimum coordinates.
// When several places land in one cell, labeled places win over Missing ones,
// then the collision rule picks among them (ties to the lowest id).
PlaceGrid project(const TopologicalMap& map, const GridConfig& config);

std::vector<VariableSpec> grid_variables(const GridConfig& config);

// Missing cells are unobserved; Empty cells share the Unknown value.
Evidence grid_to_evidence(const PlaceGrid& grid, std::size_t num_variables);
PlaceGrid evidence_to_grid(const Evidence& evidence, std::size_t rows, std::size_t cols);

// Fills Missing cells with the MPE assignment; other cells are kept.
PlaceGrid complete_grid(const SpnNetwork& net, const PlaceGrid& grid);

// Writes each Missing place's cell category back into the map.
TopologicalMap apply_completion_to_map(const TopologicalMap& map, const PlaceGrid& completed);

struct RotationConfig {
  std::uint32_t k = 8;
  double angle(std::uint32_t j) const;
};

// Floor of the rotated point: (floor(cos t x + sin t y), floor(-sin t x + cos t y)).
std::pair<long, long> rotate_point_floor(double x, double y, double theta);

// Rotates a cell about the grid center using cell-center coordinates;
// nullopt when the image leaves the grid.
std::optional<GridIndex> rotate_cell(GridIndex cell, double theta, const GridConfig& config);

// Max over k copies of the base network; copy j reads cell rotate_cell(c,
// theta_j) wherever the base reads cell c, and a constant 1 where that cell
// falls outside the grid. Copies share the base weight sets.
SpnNetwork build_rotation_invariant(const SpnNetwork& base, const GridConfig& grid, const RotationConfig& rotation);

}  // namespace topospn
