#include <algorithm>
#include <cmath>
#include <optional>
#include <span>

#include "topospn/random.hpp"
#include "topospn/topomap.hpp"

namespace topospn {

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, "generator: " + msg); };
  if (!(node_spacing > 0.0) || !std::isfinite(node_spacing)) fail("node_spacing must be positive");
  if (target_node_count == 0) fail("target_node_count must be positive");
  if (!(node_count_spread >= 0.0 && node_count_spread < 1.0)) fail("node_count_spread must lie in [0, 1)");
  if (min_corridors < 1 || min_corridors > max_corridors || max_corridors > 2)
    fail("corridor counts must satisfy 1 <= min <= max <= 2");
  if (!(corridor_fraction > 0.0 && corridor_fraction <= 1.0)) fail("corridor_fraction must lie in (0, 1]");
  if (small_office_ratio < 0.0 || large_office_ratio < 0.0 || unknown_room_ratio < 0.0 ||
      !(small_office_ratio + large_office_ratio + unknown_room_ratio > 0.0))
    fail("room ratios must be non-negative with a positive sum");
  if (!(diagonal_edge_probability >= 0.0 && diagonal_edge_probability <= 1.0))
    fail("diagonal_edge_probability must lie in [0, 1]");
  // Diagonal edges have length sqrt(2) d_n; jitter must keep them under 1.5 d_n.
  if (!(position_jitter >= 0.0 && position_jitter <= 0.03)) fail("position_jitter must lie in [0, 0.03]");
  if (!(width_m >= 3.0 * node_spacing && height_m >= 3.0 * node_spacing))
    fail("layout box must span at least three node spacings");
  if (!std::isfinite(rotation)) fail("rotation must be finite");
}

namespace {

constexpr int kFree = -1;

struct Cell {
  int x, y;
};

struct Structure {
  Category category;
  bool horizontal = true;  // corridors only
};

// Lattice layout with one owner per cell. Each structure (corridor, or room
// plus its doorway) keeps an empty 8-neighborhood ring against other
// structures, except that doorways may touch corridors.
class Layout {
 public:
  Layout(int width, int height) : width_(width), height_(height), owner_(width * height, kFree) {}

  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  int owner(int x, int y) const { return inside(x, y) ? owner_[y * width_ + x] : kFree; }
  bool is_corridor(int x, int y) const {
    const int o = owner(x, y);
    return o != kFree && structures_[o].category == Category::Corridor;
  }

  // A cell may join structure s if it is free and its 8-neighborhood holds only
  // free cells, cells of s, or (when allowed) corridor cells.
  bool can_claim(int x, int y, int s, bool corridor_ok) const {
    if (!inside(x, y) || owner(x, y) != kFree) return false;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int o = owner(x + dx, y + dy);
        if (o == kFree || o == s) continue;
        if (corridor_ok && structures_[o].category == Category::Corridor) continue;
        return false;
      }
    return true;
  }

  int add_structure(Structure s) {
    structures_.push_back(s);
    return static_cast<int>(structures_.size()) - 1;
  }
  const Structure& structure(int s) const { return structures_[s]; }
  std::size_t structure_count() const { return structures_.size(); }

  std::size_t claim(int x, int y, int s, Category category) {
    owner_[y * width_ + x] = s;
    cells_.push_back({x, y});
    categories_.push_back(category);
    return cells_.size() - 1;
  }
  void release_last(std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto c = cells_.back();
      owner_[c.y * width_ + c.x] = kFree;
      cells_.pop_back();
      categories_.pop_back();
    }
  }

  const std::vector<Cell>& cells() const { return cells_; }
  const std::vector<Category>& categories() const { return categories_; }

 private:
  int width_, height_;
  std::vector<int> owner_;
  std::vector<Structure> structures_;
  std::vector<Cell> cells_;
  std::vector<Category> categories_;
};

struct Corridor {
  int structure;
  bool horizontal;
  int fixed;   // y for horizontal corridors, x for vertical ones
  int lo, hi;  // inclusive extent along the corridor axis
};

Cell corridor_cell(const Corridor& c, int t) { return c.horizontal ? Cell{t, c.fixed} : Cell{c.fixed, t}; }

struct Door {
  std::size_t corridor_node, doorway_node, entry_node;
};

struct RoomShape {
  int lateral, depth;
};

constexpr RoomShape kSmallShapes[] = {{2, 2}, {2, 3}, {3, 2}};
constexpr RoomShape kLargeShapes[] = {{3, 3}, {3, 4}, {4, 3}, {4, 4}, {3, 5}, {5, 3}};

class Builder {
 public:
  Builder(const GeneratorConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        rng_(seed),
        layout_(static_cast<int>(std::floor(cfg.width_m / cfg.node_spacing)) + 1,
                static_cast<int>(std::floor(cfg.height_m / cfg.node_spacing)) + 1),
        width_(static_cast<int>(std::floor(cfg.width_m / cfg.node_spacing)) + 1),
        height_(static_cast<int>(std::floor(cfg.height_m / cfg.node_spacing)) + 1) {}

  std::optional<TopologicalMap> run() {
    const double scale = rng_.uniform(1.0 - cfg_.node_count_spread, 1.0 + cfg_.node_count_spread);
    target_ = std::max<std::size_t>(1, static_cast<std::size_t>(
                                           std::llround(static_cast<double>(cfg_.target_node_count) * scale)));
    place_main_corridor();
    const auto corridors = cfg_.min_corridors + rng_.uniform_index(cfg_.max_corridors - cfg_.min_corridors + 1);
    if (corridors >= 2) place_spur();
    place_rooms();
    if (!fill_deficit()) return std::nullopt;
    return finish();
  }

 private:
  std::size_t remaining() const { return target_ - layout_.cells().size(); }

  void place_main_corridor() {
    const int max_len = width_ - 2;
    const auto want = static_cast<long>(std::llround(static_cast<double>(target_) * cfg_.corridor_fraction));
    const int len = static_cast<int>(std::clamp<long>(want, 1, std::min<long>(max_len, target_)));
    const int x0 = 1 + static_cast<int>(rng_.uniform_index(static_cast<std::uint64_t>(max_len - len + 1)));
    const int y_mid = height_ / 2;
    const int y = std::clamp(y_mid - 1 + static_cast<int>(rng_.uniform_index(3)), 0, height_ - 1);
    Corridor c{layout_.add_structure({Category::Corridor, true}), true, y, x0, x0 + len - 1};
    for (int t = c.lo; t <= c.hi; ++t) layout_.claim(t, y, c.structure, Category::Corridor);
    corridors_.push_back(c);
  }

  void place_spur() {
    const auto& main = corridors_[0];
    if (main.hi - main.lo < 4 || remaining() < 3) return;
    const int xs = main.lo + 2 + static_cast<int>(rng_.uniform_index(static_cast<std::uint64_t>(main.hi - main.lo - 3)));
    const int dir = rng_.bernoulli(0.5) ? 1 : -1;
    const auto want = static_cast<long>(std::llround(static_cast<double>(target_) * cfg_.corridor_fraction * 0.4));
    const int len = static_cast<int>(std::clamp<long>(want, 2, static_cast<long>(remaining())));
    Corridor spur{layout_.add_structure({Category::Corridor, false}), false, xs, 0, 0};
    int placed = 0;
    for (int k = 1; k <= len; ++k) {
      const int y = main.fixed + dir * k;
      if (!layout_.can_claim(xs, y, spur.structure, true)) break;
      layout_.claim(xs, y, spur.structure, Category::Corridor);
      ++placed;
    }
    if (placed == 0) return;
    spur.lo = std::min(main.fixed + dir, main.fixed + dir * placed);
    spur.hi = std::max(main.fixed + dir, main.fixed + dir * placed);
    corridors_.push_back(spur);
  }

  Category draw_room_category() {
    const double total = cfg_.small_office_ratio + cfg_.large_office_ratio + cfg_.unknown_room_ratio;
    const double u = rng_.uniform01() * total;
    if (u < cfg_.small_office_ratio) return Category::SmallOffice;
    if (u < cfg_.small_office_ratio + cfg_.large_office_ratio) return Category::LargeOffice;
    return Category::Unknown;
  }

  RoomShape draw_shape(Category category) {
    const bool small =
        category == Category::SmallOffice || (category == Category::Unknown && rng_.bernoulli(0.5));
    if (small) return kSmallShapes[rng_.uniform_index(std::size(kSmallShapes))];
    return kLargeShapes[rng_.uniform_index(std::size(kLargeShapes))];
  }

  // Attaches a room through a doorway next to corridor cell t of corridor c.
  bool try_room(const Corridor& c, int t, int side, Category category, RoomShape shape) {
    const auto need = static_cast<std::size_t>(shape.lateral * shape.depth + 1);
    if (need > remaining()) return false;
    const Cell at = corridor_cell(c, t);
    // Unit vectors: n points away from the corridor, l runs along it.
    const int nx = c.horizontal ? 0 : side, ny = c.horizontal ? side : 0;
    const int lx = c.horizontal ? 1 : 0, ly = c.horizontal ? 0 : 1;
    const int offset = static_cast<int>(rng_.uniform_index(static_cast<std::uint64_t>(shape.lateral)));
    const int s = layout_.add_structure({category});

    const std::size_t before = layout_.cells().size();
    auto abort = [&] {
      layout_.release_last(layout_.cells().size() - before);
      return false;
    };
    const Cell door{at.x + nx, at.y + ny};
    if (!layout_.can_claim(door.x, door.y, s, true)) return abort();
    const auto door_node = layout_.claim(door.x, door.y, s, Category::Doorway);
    std::size_t entry_node = 0;
    for (int d = 0; d < shape.depth; ++d)
      for (int k = 0; k < shape.lateral; ++k) {
        const int along = k - offset;
        const int x = door.x + nx * (1 + d) + lx * along, y = door.y + ny * (1 + d) + ly * along;
        if (!layout_.can_claim(x, y, s, false)) return abort();
        const auto node = layout_.claim(x, y, s, category);
        if (d == 0 && along == 0) entry_node = node;
      }
    // The doorway may only touch its own corridor cell among corridor cells.
    for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const int x = door.x + dx, y = door.y + dy;
      if ((x != at.x || y != at.y) && layout_.is_corridor(x, y)) return abort();
    }
    doors_.push_back({corridor_node_at(at), door_node, entry_node});
    return true;
  }

  std::size_t corridor_node_at(Cell c) const {
    const auto& cells = layout_.cells();
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i].x == c.x && cells[i].y == c.y) return i;
    throw Error(ErrorCode::InvariantViolation, "generator: corridor cell not found");
  }

  void place_rooms() {
    int failures = 0;
    while (failures < 300 && remaining() >= 5) {
      const auto& c = corridors_[rng_.uniform_index(corridors_.size())];
      const int t = c.lo + static_cast<int>(rng_.uniform_index(static_cast<std::uint64_t>(c.hi - c.lo + 1)));
      const int side = rng_.bernoulli(0.5) ? 1 : -1;
      const auto category = draw_room_category();
      if (!try_room(c, t, side, category, draw_shape(category))) ++failures;
    }
  }

  bool extend_corridor(Corridor& c, bool at_lo) {
    const int t = at_lo ? c.lo - 1 : c.hi + 1;
    const Cell next = corridor_cell(c, t);
    if (!layout_.can_claim(next.x, next.y, c.structure, true)) return false;
    // Do not run into the side of another corridor.
    const Cell beyond = corridor_cell(c, at_lo ? t - 1 : t + 1);
    if (layout_.owner(beyond.x, beyond.y) != kFree) return false;
    layout_.claim(next.x, next.y, c.structure, Category::Corridor);
    (at_lo ? c.lo : c.hi) = t;
    return true;
  }

  bool grow_room() {
    const auto& cells = layout_.cells();
    const auto& cats = layout_.categories();
    std::vector<std::pair<Cell, int>> options;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto cat = cats[i];
      if (cat != Category::LargeOffice && cat != Category::Unknown) continue;
      const int s = layout_.owner(cells[i].x, cells[i].y);
      for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
        const int x = cells[i].x + dx, y = cells[i].y + dy;
        if (layout_.can_claim(x, y, s, false)) options.push_back({{x, y}, s});
      }
    }
    if (options.empty()) return false;
    const auto [cell, s] = options[rng_.uniform_index(options.size())];
    Category cat = Category::Unknown;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (layout_.owner(cells[i].x, cells[i].y) == s && cats[i] != Category::Doorway) cat = cats[i];
    layout_.claim(cell.x, cell.y, s, cat);
    return true;
  }

  bool fill_deficit() {
    while (remaining() > 0) {
      std::vector<std::pair<std::size_t, bool>> ends;
      for (std::size_t i = 0; i < corridors_.size(); ++i) {
        ends.push_back({i, true});
        ends.push_back({i, false});
      }
      rng_.shuffle(std::span(ends));
      bool grown = false;
      for (auto [i, at_lo] : ends)
        if (extend_corridor(corridors_[i], at_lo)) {
          grown = true;
          break;
        }
      if (!grown && !grow_room()) return false;
    }
    return true;
  }

  TopologicalMap finish() {
    const auto& cells = layout_.cells();
    const auto& cats = layout_.categories();
    std::vector<std::pair<PlaceId, PlaceId>> edges;
    auto node_at = [&](int x, int y) -> std::optional<std::size_t> {
      if (layout_.owner(x, y) == kFree) return std::nullopt;
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i].x == x && cells[i].y == y) return i;
      return std::nullopt;
    };
    auto add = [&](std::size_t a, std::size_t b) {
      edges.emplace_back(static_cast<PlaceId>(a), static_cast<PlaceId>(b));
    };
    auto same_room = [&](std::size_t i, int x, int y) {
      return layout_.owner(x, y) == layout_.owner(cells[i].x, cells[i].y);
    };

    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto [x, y] = cells[i];
      for (auto [dx, dy] : {std::pair{1, 0}, {0, 1}}) {
        const auto j = node_at(x + dx, y + dy);
        if (!j) continue;
        const bool corridors = cats[i] == Category::Corridor && cats[*j] == Category::Corridor;
        const bool room = cats[i] != Category::Corridor && cats[i] != Category::Doorway &&
                          cats[*j] != Category::Corridor && cats[*j] != Category::Doorway &&
                          same_room(i, x + dx, y + dy);
        if (corridors || room) add(i, *j);
      }
      // One diagonal per fully occupied 2x2 block of a room.
      if (cats[i] == Category::Corridor || cats[i] == Category::Doorway) continue;
      const auto right = node_at(x + 1, y), down = node_at(x, y + 1), diag = node_at(x + 1, y + 1);
      const auto in_room = [&](std::optional<std::size_t> j) {
        return j && cats[*j] != Category::Doorway && same_room(i, cells[*j].x, cells[*j].y);
      };
      if (in_room(right) && in_room(down) && in_room(diag) && rng_.bernoulli(cfg_.diagonal_edge_probability)) {
        if (rng_.bernoulli(0.5)) add(i, *diag);
        else add(*right, *down);
      }
    }
    for (const auto& d : doors_) {
      add(d.corridor_node, d.doorway_node);
      add(d.doorway_node, d.entry_node);
    }

    const double d = cfg_.node_spacing;
    const double cx = 0.5 * static_cast<double>(width_ - 1) * d, cy = 0.5 * static_cast<double>(height_ - 1) * d;
    const double cr = std::cos(cfg_.rotation), sr = std::sin(cfg_.rotation);
    std::vector<Place> places;
    places.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const double jx = rng_.uniform(-1.0, 1.0) * cfg_.position_jitter * d;
      const double jy = rng_.uniform(-1.0, 1.0) * cfg_.position_jitter * d;
      const double px = cells[i].x * d + jx - cx, py = cells[i].y * d + jy - cy;
      Place p;
      p.id = static_cast<PlaceId>(i);
      p.x = cx + cr * px - sr * py;
      p.y = cy + sr * px + cr * py;
      p.category = cats[i];
      places.push_back(p);
    }
    return TopologicalMap(std::move(places), std::move(edges));
  }

  const GeneratorConfig& cfg_;
  Rng rng_;
  Layout layout_;
  int width_, height_;
  std::size_t target_ = 0;
  std::vector<Corridor> corridors_;
  std::vector<Door> doors_;
};

}  // namespace

TopologicalMap synthesize(const GeneratorConfig& config) {
  config.validate();
  constexpr std::uint64_t kAttempts = 32;
  for (std::uint64_t attempt = 0; attempt < kAttempts; ++attempt) {
    Builder builder(config, derive_seed(config.seed, attempt));
    if (auto map = builder.run()) return std::move(*map);
  }
  throw Error(ErrorCode::InfeasibleConfig,
              "generator: cannot place " + std::to_string(config.target_node_count) + " nodes in a " +
                  std::to_string(config.width_m) + " x " + std::to_string(config.height_m) + " m box");
}

}  // namespace topospn
