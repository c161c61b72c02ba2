#include "topospn/placegrid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace topospn {

void GridConfig::validate() const {
  if (rows == 0 || cols == 0) throw Error(ErrorCode::InvalidArgument, "grid: rows and cols must be at least 1");
  if (!(resolution > 0.0) || !std::isfinite(resolution))
    throw Error(ErrorCode::InvalidArgument, "grid: resolution must be positive");
}

std::optional<std::string> resolution_warning(const GridConfig& config, double node_spacing) {
  if (config.resolution <= node_spacing) return std::nullopt;
  char buf[160];
  std::snprintf(buf, sizeof buf, "grid resolution %.3g m exceeds place spacing %.3g m; places may share cells",
                config.resolution, node_spacing);
  return std::string(buf);
}

Cell cell_from_category(Category c) { return c == Category::Missing ? Cell::Missing : static_cast<Cell>(c); }

namespace {
constexpr char kCodes[] = {'C', 'D', 'S', 'L', 'U', '.', '?'};
}

char cell_code(Cell c) { return kCodes[static_cast<std::size_t>(c)]; }

Cell cell_from_code(char code) {
  for (std::size_t i = 0; i < std::size(kCodes); ++i)
    if (kCodes[i] == code) return static_cast<Cell>(i);
  throw Error(ErrorCode::ParseError, std::string("unknown grid code '") + code + "'");
}

PlaceGrid::PlaceGrid(std::size_t rows, std::size_t cols, Cell fill)
    : rows_(rows), cols_(cols), cells_(rows * cols, fill) {}

void PlaceGrid::set_back_mapping(std::vector<std::vector<PlaceId>> mapping) {
  if (mapping.size() != cells_.size()) throw Error(ErrorCode::DimensionMismatch, "back-mapping size");
  back_mapping_ = std::move(mapping);
}

std::string PlaceGrid::to_text() const {
  std::string out;
  out.reserve(rows_ * (cols_ + 1));
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) out += cell_code(at(r, c));
    out += '\n';
  }
  return out;
}

PlaceGrid PlaceGrid::from_text(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  if (lines.empty()) throw Error(ErrorCode::ParseError, "empty grid");
  PlaceGrid grid(lines.size(), lines[0].size());
  for (std::size_t r = 0; r < lines.size(); ++r) {
    if (lines[r].size() != grid.cols_)
      throw Error(ErrorCode::ParseError, "grid row " + std::to_string(r) + " has a different width");
    for (std::size_t c = 0; c < grid.cols_; ++c) grid.set(r, c, cell_from_code(lines[r][c]));
  }
  return grid;
}

PlaceGrid project(const TopologicalMap& map, const GridConfig& config) {
  config.validate();
  if (map.size() == 0) throw Error(ErrorCode::InvalidArgument, "cannot project an empty map");
  double x_min = map.places()[0].x, y_min = map.places()[0].y;
  for (const auto& p : map.places()) {
    x_min = std::min(x_min, p.x);
    y_min = std::min(y_min, p.y);
  }
  PlaceGrid grid(config.rows, config.cols, Cell::Empty);
  std::vector<std::vector<PlaceId>> mapping(grid.size());
  std::vector<const Place*> winner(grid.size(), nullptr);

  auto better = [&](const Place& a, const Place& b) {
    const bool a_labeled = a.category != Category::Missing, b_labeled = b.category != Category::Missing;
    if (a_labeled != b_labeled) return a_labeled;
    if (config.collision_rule == CollisionRule::HighestScore && a.score() != b.score()) return a.score() > b.score();
    return a.id < b.id;
  };

  for (const auto& p : map.places()) {
    const auto row = static_cast<long>(std::floor((p.x - x_min) / config.resolution));
    const auto col = static_cast<long>(std::floor((p.y - y_min) / config.resolution));
    if (row >= static_cast<long>(config.rows) || col >= static_cast<long>(config.cols))
      throw Error(ErrorCode::GridOverflow, "place " + std::to_string(p.id) + " maps to cell (" +
                                               std::to_string(row) + ", " + std::to_string(col) +
                                               ") outside " + std::to_string(config.rows) + " x " +
                                               std::to_string(config.cols));
    const auto i = grid.index(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
    mapping[i].push_back(p.id);
    if (!winner[i] || better(p, *winner[i])) winner[i] = &p;
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!winner[i]) continue;
    grid.mutable_cells()[i] = cell_from_category(winner[i]->category);
    std::sort(mapping[i].begin(), mapping[i].end());
  }
  grid.set_back_mapping(std::move(mapping));
  return grid;
}

std::vector<VariableSpec> grid_variables(const GridConfig& config) {
  return uniform_variables(config.num_cells(), kNumCategoryValues);
}

Evidence grid_to_evidence(const PlaceGrid& grid, std::size_t num_variables) {
  if (grid.size() != num_variables)
    throw Error(ErrorCode::DimensionMismatch, "grid has " + std::to_string(grid.size()) + " cells but the model has " +
                                                  std::to_string(num_variables) + " variables");
  const auto vars = uniform_variables(num_variables, kNumCategoryValues);
  Evidence e(vars);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Cell c = grid.cells()[i];
    if (c == Cell::Missing) continue;
    const auto value = c == Cell::Empty ? category_value(Category::Unknown) : static_cast<std::uint32_t>(c);
    e.observe(static_cast<VarId>(i), value);
  }
  return e;
}

PlaceGrid evidence_to_grid(const Evidence& evidence, std::size_t rows, std::size_t cols) {
  if (evidence.num_variables() != rows * cols) throw Error(ErrorCode::DimensionMismatch, "evidence size");
  PlaceGrid grid(rows, cols, Cell::Missing);
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (auto v = evidence.observed_value(static_cast<VarId>(i)))
      grid.mutable_cells()[i] = cell_from_category(category_from_value(*v));
  return grid;
}

PlaceGrid complete_grid(const SpnNetwork& net, const PlaceGrid& grid) {
  PlaceGrid out = grid;
  if (std::none_of(grid.cells().begin(), grid.cells().end(), [](Cell c) { return c == Cell::Missing; }))
    return out;
  const auto result = mpe(net, grid_to_evidence(grid, net.num_variables()));
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.cells()[i] == Cell::Missing)
      out.mutable_cells()[i] = cell_from_category(category_from_value(result.assignment[i]));
  return out;
}

TopologicalMap apply_completion_to_map(const TopologicalMap& map, const PlaceGrid& completed) {
  if (!completed.back_mapping())
    throw Error(ErrorCode::MissingBackMapping, "grid carries no cell-to-place mapping");
  TopologicalMap out = map;
  const auto& mapping = *completed.back_mapping();
  for (std::size_t i = 0; i < mapping.size(); ++i) {
    const Cell c = completed.cells()[i];
    for (PlaceId id : mapping[i]) {
      auto& place = out.mutable_places()[out.index_of(id)];
      if (place.category != Category::Missing) continue;
      if (c == Cell::Missing) throw Error(ErrorCode::InvalidArgument, "grid cell " + std::to_string(i) + " is not completed");
      place.category = c == Cell::Empty ? Category::Unknown : static_cast<Category>(c);
    }
  }
  return out;
}

double RotationConfig::angle(std::uint32_t j) const {
  return 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(k);
}

std::pair<long, long> rotate_point_floor(double x, double y, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {static_cast<long>(std::floor(c * x + s * y)), static_cast<long>(std::floor(-s * x + c * y))};
}

std::optional<GridIndex> rotate_cell(GridIndex cell, double theta, const GridConfig& config) {
  const double half_r = 0.5 * static_cast<double>(config.rows), half_c = 0.5 * static_cast<double>(config.cols);
  const double x = static_cast<double>(cell.row) + 0.5 - half_r;
  const double y = static_cast<double>(cell.col) + 0.5 - half_c;
  const double c = std::cos(theta), s = std::sin(theta);
  // Adding the half extent maps rotated cell centers to i + 0.5, so floor
  // recovers the cell index.
  const double row = std::floor(c * x + s * y + half_r), col = std::floor(-s * x + c * y + half_c);
  if (row < 0.0 || col < 0.0 || row >= static_cast<double>(config.rows) || col >= static_cast<double>(config.cols))
    return std::nullopt;
  return GridIndex{static_cast<std::size_t>(row), static_cast<std::size_t>(col)};
}

SpnNetwork build_rotation_invariant(const SpnNetwork& base, const GridConfig& grid, const RotationConfig& rotation) {
  if (rotation.k == 0) throw Error(ErrorCode::InvalidArgument, "rotation: k must be at least 1");
  if (base.num_variables() != grid.num_cells())
    throw Error(ErrorCode::DimensionMismatch, "base network does not match the grid layout");
  NetworkBuilder builder(base.variables());
  std::vector<WeightSetId> sets;
  for (WeightSetId s = 0; s < base.num_weight_sets(); ++s) {
    const auto w = base.weights(s);
    sets.push_back(builder.add_weight_set({w.begin(), w.end()}));
  }
  std::vector<NodeId> copies;
  std::vector<NodeId> map(base.num_nodes());
  for (std::uint32_t j = 0; j < rotation.k; ++j) {
    const double theta = rotation.angle(j);
    std::vector<std::optional<GridIndex>> source(grid.num_cells());
    for (std::size_t r = 0; r < grid.rows; ++r)
      for (std::size_t c = 0; c < grid.cols; ++c) source[r * grid.cols + c] = rotate_cell({r, c}, theta, grid);
    for (NodeId id : base.topological_order()) {
      std::vector<NodeId> children;
      for (NodeId child : base.children(id)) children.push_back(map[child]);
      switch (base.kind(id)) {
        case NodeKind::Sum: map[id] = builder.shared_sum(std::move(children), sets[base.weight_set(id)]); break;
        case NodeKind::Product: map[id] = builder.product(std::move(children)); break;
        case NodeKind::Max: map[id] = builder.max(std::move(children)); break;
        case NodeKind::Constant: map[id] = builder.constant(); break;
        case NodeKind::Indicator: {
          const auto& src = source[base.var(id)];
          map[id] = src ? builder.indicator(static_cast<VarId>(src->row * grid.cols + src->col), base.value(id))
                        : builder.constant();
          break;
        }
      }
    }
    copies.push_back(map[base.root()]);
  }
  const NodeId root = builder.max(std::move(copies));
  return std::move(builder).build(root, ValidationPolicy::Permissive);
}

}  // namespace topospn
