#pragma once

// Topological maps: places with metric coordinates and a category label,
// connected by undirected navigation edges.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "topospn/error.hpp"

namespace topospn {

// The first five values double as SPN variable values; Missing marks an
// occluded label in query maps and is never ground truth.
enum class Category : std::uint8_t { Corridor = 0, Doorway, SmallOffice, LargeOffice, Unknown, Missing };

inline constexpr std::uint32_t kNumCategoryValues = 5;
inline constexpr std::array<Category, kNumCategoryValues> kLabelCategories{
    Category::Corridor, Category::Doorway, Category::SmallOffice, Category::LargeOffice, Category::Unknown};

// Lowercase names used in files: corridor|doorway|small_office|large_office|unknown|missing.
std::string_view to_string(Category c);
Category category_from_string(std::string_view name);
// Short labels used in experiment tables: CR, DW, 1PO, 2PO, UN, ??.
std::string_view short_label(Category c);
Category category_from_short_label(std::string_view label);
std::uint32_t category_value(Category c);
Category category_from_value(std::uint32_t value);

using PlaceId = std::uint32_t;

struct Place {
  PlaceId id = 0;
  double x = 0.0;
  double y = 0.0;
  Category category = Category::Unknown;
  std::optional<double> existence_score;

  double score() const { return existence_score.value_or(1.0); }
  friend bool operator==(const Place&, const Place&) = default;
};

class TopologicalMap {
 public:
  TopologicalMap() = default;
  // Edges are stored once as (min, max) pairs in ascending order.
  TopologicalMap(std::vector<Place> places, std::vector<std::pair<PlaceId, PlaceId>> edges);

  const std::vector<Place>& places() const { return places_; }
  std::vector<Place>& mutable_places() { return places_; }
  const std::vector<std::pair<PlaceId, PlaceId>>& edges() const { return edges_; }
  std::size_t size() const { return places_.size(); }

  // Position of a place in places(); throws InvariantViolation if absent.
  std::size_t index_of(PlaceId id) const;
  // Neighbors by position in places().
  std::vector<std::vector<std::size_t>> adjacency() const;
  bool is_connected() const;

  // Throws InvariantViolation naming the offending field.
  void validate(bool allow_missing) const;

  friend bool operator==(const TopologicalMap&, const TopologicalMap&) = default;

 private:
  std::vector<Place> places_;
  std::vector<std::pair<PlaceId, PlaceId>> edges_;
};

std::array<std::size_t, 6> category_counts(const TopologicalMap& map);

nlohmann::json map_to_json(const TopologicalMap& map);
TopologicalMap map_from_json(const nlohmann::json& doc, bool allow_missing = false);
void save_map(const TopologicalMap& map, const std::filesystem::path& path);
TopologicalMap load_map(const std::filesystem::path& path, bool allow_missing = false);

struct GeneratorConfig {
  double node_spacing = 1.0;             // d_n in meters
  std::size_t target_node_count = 104;
  double node_count_spread = 0.15;       // per-map target drawn in target * [1 - s, 1 + s]
  std::uint32_t min_corridors = 1;
  std::uint32_t max_corridors = 2;       // the second corridor branches off the first
  double corridor_fraction = 0.25;       // share of the node budget spent on the main corridor
  double small_office_ratio = 0.45;      // room category mix
  double large_office_ratio = 0.4;
  double unknown_room_ratio = 0.15;
  double diagonal_edge_probability = 0.75;
  double position_jitter = 0.025;        // fraction of node_spacing
  double width_m = 21.0;                 // layout bounding box
  double height_m = 13.5;
  double rotation = 0.0;                 // radians, applied to the whole map
  std::uint64_t seed = 0;

  void validate() const;
};

// Corridors are straight lattice lines; rooms are rectangular clusters of one
// category attached to a corridor through a single degree-2 doorway.
TopologicalMap synthesize(const GeneratorConfig& config);

struct RegionOcclusion {
  double x_min, y_min, x_max, y_max;
};
struct RandomOcclusion {
  double fraction;
};
struct FullOcclusion {};
using OcclusionMode = std::variant<RegionOcclusion, RandomOcclusion, FullOcclusion>;

struct Occlusion {
  TopologicalMap query;
  TopologicalMap truth;
  std::vector<PlaceId> occluded;  // ascending
};

// RandomOcclusion hides exactly round(fraction * size) places.
Occlusion occlude(const TopologicalMap& map, const OcclusionMode& mode, std::uint64_t seed);

TopologicalMap swap_categories(const TopologicalMap& map, Category a, Category b);

}  // namespace topospn
