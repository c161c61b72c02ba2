#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "topospn/learning.hpp"
#include "topospn/placegrid.hpp"
#include "topospn/random.hpp"
#include "topospn/structure.hpp"

namespace topospn {
namespace {

Place place(PlaceId id, double x, double y, Category c, std::optional<double> score = {}) {
  return Place{id, x, y, c, score};
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

TEST(Project, FloorFormula) {
  const TopologicalMap map({place(0, 10.0, -2.0, Category::Corridor), place(1, 13.2, 2.9, Category::Doorway)}, {});
  GridConfig cfg;
  const auto grid = project(map, cfg);
  EXPECT_EQ(grid.at(0, 0), Cell::Corridor);
  EXPECT_EQ(grid.at(2, 3), Cell::Doorway);
  EXPECT_EQ(grid.at(1, 1), Cell::Empty);
  EXPECT_EQ((*grid.back_mapping())[grid.index(2, 3)], std::vector<PlaceId>{1});
}

TEST(Project, CollisionRules) {
  const TopologicalMap map({place(0, 0.0, 0.0, Category::SmallOffice, 0.4), place(1, 0.1, 0.1, Category::LargeOffice, 0.9),
                            place(2, 5.0, 5.0, Category::Corridor)},
                           {});
  GridConfig cfg;
  EXPECT_EQ(project(map, cfg).at(0, 0), Cell::LargeOffice);
  cfg.collision_rule = CollisionRule::Deterministic;
  EXPECT_EQ(project(map, cfg).at(0, 0), Cell::SmallOffice);
  const auto grid = project(map, cfg);
  EXPECT_EQ((*grid.back_mapping())[0], (std::vector<PlaceId>{0, 1}));
}

TEST(Project, LabeledPlaceBeatsMissing) {
  const TopologicalMap map({place(0, 0.0, 0.0, Category::Missing, 1.0), place(1, 0.1, 0.1, Category::Doorway, 0.2)}, {});
  EXPECT_EQ(project(map, GridConfig{}).at(0, 0), Cell::Doorway);
}

TEST(Project, OverflowAndWarnings) {
  const TopologicalMap map({place(0, 0.0, 0.0, Category::Corridor), place(7, 30.0, 0.0, Category::Corridor)}, {});
  EXPECT_EQ(code_of([&] { project(map, GridConfig{}); }), ErrorCode::GridOverflow);
  EXPECT_TRUE(resolution_warning(GridConfig{}, 1.0).has_value());
  GridConfig fine;
  fine.resolution = 1.0;
  EXPECT_FALSE(resolution_warning(fine, 1.0).has_value());
}

TEST(Project, GeneratedMapsKeepNeighborsAdjacent) {
  GridConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GeneratorConfig gen;
    gen.seed = seed;
    const auto map = synthesize(gen);
    const auto grid = project(map, cfg);
    std::vector<GridIndex> cell_of(map.size());
    const auto& mapping = *grid.back_mapping();
    for (std::size_t i = 0; i < mapping.size(); ++i)
      for (PlaceId id : mapping[i]) cell_of[map.index_of(id)] = {i / cfg.cols, i % cfg.cols};
    for (auto [a, b] : map.edges()) {
      const auto &p = map.places()[map.index_of(a)], &q = map.places()[map.index_of(b)];
      if (std::hypot(p.x - q.x, p.y - q.y) > cfg.resolution) continue;
      const auto ca = cell_of[map.index_of(a)], cb = cell_of[map.index_of(b)];
      EXPECT_LE(std::abs(long(ca.row) - long(cb.row)), 1);
      EXPECT_LE(std::abs(long(ca.col) - long(cb.col)), 1);
    }
  }
}

TEST(GridText, RoundTrip) {
  const std::string text = "CD.\nSLU\n??C\n";
  const auto grid = PlaceGrid::from_text(text);
  EXPECT_EQ(grid.rows(), 3u);
  EXPECT_EQ(grid.at(1, 1), Cell::LargeOffice);
  EXPECT_EQ(grid.to_text(), text);
  EXPECT_THROW(PlaceGrid::from_text("CX\n"), Error);
}

TEST(GridEvidence, MissingAndLabeledCells) {
  const PlaceGrid missing(3, 2, Cell::Missing);
  const auto e = grid_to_evidence(missing, 6);
  for (VarId v = 0; v < 6; ++v) EXPECT_EQ(e.state(v), Evidence::State::Unobserved);

  const auto labeled = PlaceGrid::from_text("CD\nSL\nU.\n");
  const auto f = grid_to_evidence(labeled, 6);
  for (VarId v = 0; v < 6; ++v) EXPECT_TRUE(f.is_observed(v));
  EXPECT_EQ(*f.observed_value(5), category_value(Category::Unknown));
  EXPECT_EQ(code_of([&] { grid_to_evidence(labeled, 7); }), ErrorCode::DimensionMismatch);
}

TEST(GridEvidence, RoundTripMergesEmptyIntoUnknown) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    PlaceGrid grid(4, 5);
    for (auto& c : grid.mutable_cells()) c = static_cast<Cell>(rng.uniform_index(7));
    auto expected = grid;
    for (auto& c : expected.mutable_cells())
      if (c == Cell::Empty) c = Cell::Unknown;
    EXPECT_EQ(evidence_to_grid(grid_to_evidence(grid, 20), 4, 5), expected);
  }
}

// 3x3 grids that are uniformly one office kind, with a little noise.
SpnNetwork trained_block_model() {
  GridConfig cfg{3, 3, 1.0, CollisionRule::Deterministic};
  DecompConfig dc;
  dc.num_mixtures = 3;
  dc.max_singleton_mixtures = 2;
  dc.seed = 4;
  dc.share_weights_per_level = false;
  auto net = generate_dense(grid_variables(cfg), dc);
  initialize_weights(net, 9, 0.9);
  Rng rng(17);
  std::vector<Evidence> data;
  for (int i = 0; i < 300; ++i) {
    const auto kind = rng.bernoulli(0.5) ? Category::SmallOffice : Category::LargeOffice;
    PlaceGrid g(3, 3, cell_from_category(kind));
    if (rng.bernoulli(0.3)) g.mutable_cells()[rng.uniform_index(9)] = Cell::Unknown;
    data.push_back(grid_to_evidence(g, 9));
  }
  TrainConfig tc;
  tc.epochs = 30;
  tc.smoothing = 0.1;
  tc.batch_size = 1;
  train(net, data, tc);
  return net;
}

TEST(CompleteGrid, FillsOnlyMissingCells) {
  const auto net = trained_block_model();
  const auto full = PlaceGrid::from_text("SSS\nSSS\nSSS\n");
  EXPECT_EQ(complete_grid(net, full), full);

  const auto query = PlaceGrid::from_text("SSS\nS?S\nSSS\n");
  const auto done = complete_grid(net, query);
  EXPECT_EQ(done.at(1, 1), Cell::SmallOffice);
  // Enumeration oracle over the single missing cell.
  std::uint32_t best = 0;
  double best_value = kLogZero;
  for (std::uint32_t a = 0; a < kNumCategoryValues; ++a) {
    auto filled = query;
    filled.set(1, 1, static_cast<Cell>(a));
    const double v = log_value(net, grid_to_evidence(filled, 9));
    if (v > best_value) best_value = v, best = a;
  }
  EXPECT_EQ(static_cast<Cell>(best), Cell::SmallOffice);
  for (std::size_t i = 0; i < 9; ++i)
    if (query.cells()[i] != Cell::Missing) EXPECT_EQ(done.cells()[i], query.cells()[i]);

  const auto large = complete_grid(net, PlaceGrid::from_text("LL?\nL?L\n?LL\n"));
  EXPECT_EQ(large.to_text(), "LLL\nLLL\nLLL\n");
}

TEST(ApplyCompletion, WritesBackToMissingPlaces) {
  const TopologicalMap map({place(0, 0.0, 0.0, Category::Missing), place(1, 0.2, 0.2, Category::Missing),
                            place(2, 2.0, 0.0, Category::Corridor)},
                           {{0, 2}});
  const GridConfig cfg{2, 1, 1.5, CollisionRule::Deterministic};
  auto grid = project(map, cfg);
  EXPECT_EQ(grid.at(0, 0), Cell::Missing);
  grid.set(0, 0, Cell::LargeOffice);
  const auto done = apply_completion_to_map(map, grid);
  EXPECT_EQ(done.places()[0].category, Category::LargeOffice);
  EXPECT_EQ(done.places()[1].category, Category::LargeOffice);
  EXPECT_EQ(done.places()[2].category, Category::Corridor);
  EXPECT_EQ(category_counts(done)[static_cast<std::size_t>(Category::Missing)], 0u);

  const TopologicalMap labeled({place(0, 0.0, 0.0, Category::Doorway)}, {});
  EXPECT_EQ(apply_completion_to_map(labeled, project(labeled, cfg)), labeled);
  EXPECT_EQ(code_of([&] { apply_completion_to_map(map, PlaceGrid(2, 1)); }), ErrorCode::MissingBackMapping);
}

TEST(Rotation, CellTransform) {
  const GridConfig cfg{15, 10, 1.5, CollisionRule::HighestScore};
  for (std::size_t r = 0; r < cfg.rows; ++r)
    for (std::size_t c = 0; c < cfg.cols; ++c) EXPECT_EQ(rotate_cell({r, c}, 0.0, cfg), (GridIndex{r, c}));
  EXPECT_EQ(rotate_point_floor(1.0, 0.0, std::numbers::pi / 2), (std::pair<long, long>{0, -1}));
  EXPECT_FALSE(rotate_cell({0, 0}, std::numbers::pi / 4, cfg).has_value());
  // Quarter turns permute the cells of a square grid.
  const GridConfig square{6, 6, 1.0, CollisionRule::HighestScore};
  std::vector<bool> hit(36, false);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) {
      const auto to = rotate_cell({r, c}, std::numbers::pi / 2, square);
      ASSERT_TRUE(to.has_value());
      hit[to->row * 6 + to->col] = true;
    }
  EXPECT_TRUE(std::all_of(hit.begin(), hit.end(), [](bool b) { return b; }));
}

SpnNetwork random_grid_net(const GridConfig& cfg, std::uint64_t seed) {
  DecompConfig dc;
  dc.num_mixtures = 2;
  dc.seed = seed;
  auto net = generate_dense(grid_variables(cfg), dc);
  initialize_weights(net, seed, 0.5);
  return net;
}

TEST(Rotation, SingleDirectionMatchesBase) {
  const GridConfig cfg{4, 3, 1.0, CollisionRule::HighestScore};
  const auto base = random_grid_net(cfg, 2);
  const auto inv = build_rotation_invariant(base, cfg, RotationConfig{1});
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    PlaceGrid g(4, 3);
    for (auto& c : g.mutable_cells()) c = static_cast<Cell>(rng.uniform_index(7));
    const auto e = grid_to_evidence(g, 12);
    EXPECT_DOUBLE_EQ(log_value(inv, e), log_value(base, e));
  }
}

TEST(Rotation, QuarterTurnInvariance) {
  const GridConfig cfg{8, 8, 1.0, CollisionRule::HighestScore};
  const auto base = random_grid_net(cfg, 6);
  const auto inv = build_rotation_invariant(base, cfg, RotationConfig{4});
  EXPECT_EQ(inv.num_weight_sets(), base.num_weight_sets());
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    PlaceGrid g(8, 8, Cell::Missing);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) {
        const double x = r + 0.5 - 4.0, y = c + 0.5 - 4.0;
        if (x * x + y * y <= 16.0) g.set(r, c, static_cast<Cell>(rng.uniform_index(6)));
      }
    PlaceGrid turned(8, 8, Cell::Missing);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) {
        const auto to = *rotate_cell({r, c}, std::numbers::pi / 2, cfg);
        turned.set(to.row, to.col, g.at(r, c));
      }
    ASSERT_NE(turned, g);
    EXPECT_NEAR(log_value(inv, grid_to_evidence(g, 64)), log_value(inv, grid_to_evidence(turned, 64)), 1e-12);
  }
}

TEST(Rotation, OutOfBoundsCellsBecomeConstants) {
  const GridConfig cfg{5, 3, 1.0, CollisionRule::HighestScore};
  const auto base = random_grid_net(cfg, 1);
  const auto inv = build_rotation_invariant(base, cfg, RotationConfig{8});
  std::size_t constants = 0;
  for (NodeId id = 0; id < inv.num_nodes(); ++id) constants += inv.kind(id) == NodeKind::Constant;
  EXPECT_EQ(constants, 1u);
  EXPECT_EQ(inv.kind(inv.root()), NodeKind::Max);
  EXPECT_EQ(inv.children(inv.root()).size(), 8u);
  EXPECT_TRUE(std::isfinite(log_value(inv, grid_to_evidence(PlaceGrid(5, 3, Cell::Corridor), 15))));
}

}  // namespace
}  // namespace topospn
