#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "topospn/topomap.hpp"

namespace topospn {
namespace {

TopologicalMap generated(std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.seed = seed;
  return synthesize(cfg);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("topomap_test_" + name);
}

TEST(Category, NamesRoundTrip) {
  for (auto c : {Category::Corridor, Category::Doorway, Category::SmallOffice, Category::LargeOffice,
                 Category::Unknown, Category::Missing}) {
    EXPECT_EQ(category_from_string(to_string(c)), c);
    EXPECT_EQ(category_from_short_label(short_label(c)), c);
  }
  EXPECT_EQ(short_label(Category::SmallOffice), "1PO");
  EXPECT_THROW(category_from_string("kitchen"), Error);
  EXPECT_THROW(category_value(Category::Missing), Error);
}

TEST(Generator, SmallTargetIsDeterministicAndConnected) {
  GeneratorConfig cfg;
  cfg.target_node_count = 10;
  cfg.node_count_spread = 0.0;
  cfg.min_corridors = cfg.max_corridors = 1;
  cfg.seed = 42;
  const auto a = synthesize(cfg);
  const auto b = synthesize(cfg);
  EXPECT_EQ(a.size(), 10u);
  EXPECT_TRUE(a.is_connected());
  EXPECT_EQ(a, b);
}

TEST(Generator, CalibratedToReferenceScale) {
  double nodes = 0.0, edges = 0.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto map = generated(seed);
    nodes += static_cast<double>(map.size());
    edges += static_cast<double>(map.edges().size());
  }
  nodes /= 40.0;
  edges /= 40.0;
  EXPECT_NEAR(nodes, 103.62, 0.15 * 103.62);
  EXPECT_NEAR(edges, 159.90, 0.20 * 159.90);
}

TEST(Generator, RoomsReachCorridorsOnlyThroughDoorways) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto map = generated(seed);
    ASSERT_TRUE(map.is_connected()) << seed;
    const auto adj = map.adjacency();
    const auto& places = map.places();
    // Flood from every corridor node without crossing doorways.
    std::vector<bool> seen(places.size(), false);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < places.size(); ++i)
      if (places[i].category == Category::Corridor) {
        seen[i] = true;
        stack.push_back(i);
      }
    while (!stack.empty()) {
      const auto n = stack.back();
      stack.pop_back();
      for (auto m : adj[n])
        if (!seen[m] && places[m].category != Category::Doorway) {
          seen[m] = true;
          stack.push_back(m);
        }
    }
    for (std::size_t i = 0; i < places.size(); ++i)
      if (places[i].category != Category::Corridor && places[i].category != Category::Doorway)
        EXPECT_FALSE(seen[i]) << "seed " << seed << " place " << i;
  }
}

TEST(Generator, GeometryInvariants) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.node_spacing = 1.3;
    cfg.width_m = 21.0 * 1.3;
    cfg.height_m = 13.5 * 1.3;
    const auto map = synthesize(cfg);
    const auto adj = map.adjacency();
    const auto& places = map.places();
    for (auto [a, b] : map.edges()) {
      const auto& p = places[map.index_of(a)];
      const auto& q = places[map.index_of(b)];
      const double dist = std::hypot(p.x - q.x, p.y - q.y);
      EXPECT_GE(dist, 0.5 * cfg.node_spacing);
      EXPECT_LE(dist, 1.5 * cfg.node_spacing);
    }
    for (std::size_t i = 0; i < places.size(); ++i) {
      if (places[i].category == Category::Doorway) EXPECT_LE(adj[i].size(), 3u);
      if (places[i].category != Category::Corridor) continue;
      std::vector<std::size_t> run;
      for (auto m : adj[i])
        if (places[m].category == Category::Corridor) run.push_back(m);
      if (run.size() != 2) continue;
      const auto &a = places[run[0]], &c = places[i], &b = places[run[1]];
      const double turn = std::abs(std::remainder(
          std::atan2(b.y - c.y, b.x - c.x) - std::atan2(c.y - a.y, c.x - a.x), 2.0 * std::numbers::pi));
      EXPECT_LT(turn, std::numbers::pi / 4.0) << "seed " << seed << " place " << i;
    }
  }
}

TEST(Generator, RotationPreservesStructure) {
  GeneratorConfig cfg;
  cfg.seed = 3;
  const auto plain = synthesize(cfg);
  cfg.rotation = 0.7;
  const auto rotated = synthesize(cfg);
  ASSERT_EQ(plain.size(), rotated.size());
  EXPECT_EQ(plain.edges(), rotated.edges());
  for (auto [a, b] : plain.edges()) {
    const auto &p = plain.places()[a], &q = plain.places()[b];
    const auto &rp = rotated.places()[a], &rq = rotated.places()[b];
    EXPECT_NEAR(std::hypot(p.x - q.x, p.y - q.y), std::hypot(rp.x - rq.x, rp.y - rq.y), 1e-9);
  }
}

TEST(Generator, RejectsBadConfig) {
  GeneratorConfig cfg;
  cfg.node_spacing = 0.0;
  EXPECT_THROW(synthesize(cfg), Error);
  cfg = {};
  cfg.max_corridors = 3;
  EXPECT_THROW(synthesize(cfg), Error);
  cfg = {};
  cfg.target_node_count = 5000;
  try {
    synthesize(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InfeasibleConfig);
  }
}

TEST(MapIo, SaveLoadRoundTrip) {
  auto map = generated(7);
  map.mutable_places()[3].existence_score = 0.25;
  const auto path = temp_path("roundtrip.json");
  save_map(map, path);
  EXPECT_EQ(load_map(path), map);
  std::filesystem::remove(path);
}

TEST(MapIo, RejectsDanglingEdgeAndMissingTruth) {
  const nlohmann::json dangling = {
      {"places", {{{"id", 0}, {"x", 0.0}, {"y", 0.0}, {"category", "corridor"}}}}, {"edges", {{0, 1}}}};
  try {
    map_from_json(dangling);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvariantViolation);
  }
  const nlohmann::json missing = {
      {"places", {{{"id", 0}, {"x", 0.0}, {"y", 0.0}, {"category", "missing"}}}}, {"edges", nlohmann::json::array()}};
  try {
    map_from_json(missing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvariantViolation);
  }
  EXPECT_NO_THROW(map_from_json(missing, true));
}

TEST(MapIo, ParseErrorReportsLine) {
  const auto path = temp_path("broken.json");
  std::ofstream(path) << "{\n\"places\": [\n,]\n}";
  try {
    load_map(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(Occlusion, Modes) {
  std::vector<Place> places;
  for (PlaceId i = 0; i < 100; ++i) places.push_back({i, double(i % 10), double(i / 10), Category::Corridor, {}});
  const TopologicalMap map(places, {});

  const auto none = occlude(map, RandomOcclusion{0.0}, 1);
  EXPECT_EQ(none.query, map);
  EXPECT_TRUE(none.occluded.empty());

  const auto all = occlude(map, FullOcclusion{}, 1);
  EXPECT_EQ(all.occluded.size(), 100u);
  for (const auto& p : all.query.places()) EXPECT_EQ(p.category, Category::Missing);

  const auto some = occlude(map, RandomOcclusion{0.2}, 9);
  EXPECT_EQ(some.occluded.size(), 20u);
  EXPECT_EQ(some.truth, map);
  EXPECT_TRUE(std::is_sorted(some.occluded.begin(), some.occluded.end()));
  EXPECT_EQ(occlude(map, RandomOcclusion{0.2}, 9).occluded, some.occluded);

  const auto region = occlude(map, RegionOcclusion{0.0, 0.0, 4.0, 1.0}, 0);
  EXPECT_EQ(region.occluded.size(), 10u);
}

TEST(Swap, InvolutionAndCounts) {
  const auto map = generated(11);
  const auto swapped = swap_categories(map, Category::Doorway, Category::Corridor);
  const auto before = category_counts(map), after = category_counts(swapped);
  EXPECT_EQ(after[0], before[1]);
  EXPECT_EQ(after[1], before[0]);
  EXPECT_EQ(after[2], before[2]);
  EXPECT_EQ(swap_categories(swapped, Category::Doorway, Category::Corridor), map);
  try {
    swap_categories(map, Category::Unknown, Category::Unknown);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SameCategory);
  }
}

}  // namespace
}  // namespace topospn
