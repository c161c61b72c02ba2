#include "topospn/topomap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "topospn/random.hpp"
#include "topospn/spn_io.hpp"

namespace topospn {

using nlohmann::json;

namespace {

struct CategoryName {
  Category category;
  std::string_view name;
  std::string_view label;
};

constexpr std::array<CategoryName, 6> kNames{{
    {Category::Corridor, "corridor", "CR"},
    {Category::Doorway, "doorway", "DW"},
    {Category::SmallOffice, "small_office", "1PO"},
    {Category::LargeOffice, "large_office", "2PO"},
    {Category::Unknown, "unknown", "UN"},
    {Category::Missing, "missing", "??"},
}};

}  // namespace

std::string_view to_string(Category c) { return kNames[static_cast<std::size_t>(c)].name; }

std::string_view short_label(Category c) { return kNames[static_cast<std::size_t>(c)].label; }

Category category_from_string(std::string_view name) {
  for (const auto& n : kNames)
    if (n.name == name) return n.category;
  throw Error(ErrorCode::ParseError, "unknown category '" + std::string(name) + "'");
}

Category category_from_short_label(std::string_view label) {
  for (const auto& n : kNames)
    if (n.label == label) return n.category;
  return category_from_string(label);
}

std::uint32_t category_value(Category c) {
  if (c == Category::Missing) throw Error(ErrorCode::InvalidArgument, "missing has no variable value");
  return static_cast<std::uint32_t>(c);
}

Category category_from_value(std::uint32_t value) {
  if (value >= kNumCategoryValues) throw Error(ErrorCode::InvalidArgument, "category value out of range");
  return static_cast<Category>(value);
}

// --- map -------------------------------------------------------------------

TopologicalMap::TopologicalMap(std::vector<Place> places, std::vector<std::pair<PlaceId, PlaceId>> edges)
    : places_(std::move(places)) {
  for (auto [a, b] : edges) edges_.emplace_back(std::min(a, b), std::max(a, b));
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

std::size_t TopologicalMap::index_of(PlaceId id) const {
  // Generated and loaded maps usually have ids equal to positions.
  if (id < places_.size() && places_[id].id == id) return id;
  for (std::size_t i = 0; i < places_.size(); ++i)
    if (places_[i].id == id) return i;
  throw Error(ErrorCode::InvariantViolation, "no place with id " + std::to_string(id));
}

std::vector<std::vector<std::size_t>> TopologicalMap::adjacency() const {
  std::map<PlaceId, std::size_t> pos;
  for (std::size_t i = 0; i < places_.size(); ++i) pos[places_[i].id] = i;
  std::vector<std::vector<std::size_t>> adj(places_.size());
  for (auto [a, b] : edges_) {
    const auto ia = pos.at(a), ib = pos.at(b);
    adj[ia].push_back(ib);
    adj[ib].push_back(ia);
  }
  for (auto& n : adj) std::sort(n.begin(), n.end());
  return adj;
}

bool TopologicalMap::is_connected() const {
  if (places_.empty()) return true;
  const auto adj = adjacency();
  std::vector<bool> seen(places_.size(), false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    const auto n = stack.back();
    stack.pop_back();
    for (auto m : adj[n])
      if (!seen[m]) {
        seen[m] = true;
        ++count;
        stack.push_back(m);
      }
  }
  return count == places_.size();
}

void TopologicalMap::validate(bool allow_missing) const {
  std::set<PlaceId> ids;
  for (std::size_t i = 0; i < places_.size(); ++i) {
    const auto& p = places_[i];
    const std::string where = "places[" + std::to_string(i) + "]";
    if (!ids.insert(p.id).second)
      throw Error(ErrorCode::InvariantViolation, where + ".id: duplicate id " + std::to_string(p.id));
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw Error(ErrorCode::InvariantViolation, where + ": coordinates must be finite");
    if (!allow_missing && p.category == Category::Missing)
      throw Error(ErrorCode::InvariantViolation, where + ".category: 'missing' is not a ground-truth label");
    if (p.existence_score && !(*p.existence_score > 0.0 && *p.existence_score <= 1.0))
      throw Error(ErrorCode::InvariantViolation, where + ".existence_score: must lie in (0, 1]");
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const auto [a, b] = edges_[i];
    const std::string where = "edges[" + std::to_string(i) + "]";
    if (a == b) throw Error(ErrorCode::InvariantViolation, where + ": self-loop on " + std::to_string(a));
    if (!ids.count(a) || !ids.count(b))
      throw Error(ErrorCode::InvariantViolation,
                  where + ": references missing place " + std::to_string(ids.count(a) ? b : a));
  }
}

std::array<std::size_t, 6> category_counts(const TopologicalMap& map) {
  std::array<std::size_t, 6> counts{};
  for (const auto& p : map.places()) ++counts[static_cast<std::size_t>(p.category)];
  return counts;
}

json map_to_json(const TopologicalMap& map) {
  json places = json::array();
  for (const auto& p : map.places()) {
    json jp{{"id", p.id}, {"x", p.x}, {"y", p.y}, {"category", std::string(to_string(p.category))}};
    if (p.existence_score) jp["existence_score"] = *p.existence_score;
    places.push_back(std::move(jp));
  }
  json edges = json::array();
  for (auto [a, b] : map.edges()) edges.push_back({a, b});
  return json{{"places", std::move(places)}, {"edges", std::move(edges)}};
}

TopologicalMap map_from_json(const json& doc, bool allow_missing) {
  std::vector<Place> places;
  std::vector<std::pair<PlaceId, PlaceId>> edges;
  std::string field = "document";
  try {
    const auto& jp = doc.at("places");
    for (std::size_t i = 0; i < jp.size(); ++i) {
      field = "places[" + std::to_string(i) + "]";
      const auto& p = jp.at(i);
      Place place;
      place.id = p.at("id").get<PlaceId>();
      place.x = p.at("x").get<double>();
      place.y = p.at("y").get<double>();
      field += ".category";
      place.category = category_from_string(p.at("category").get<std::string>());
      if (p.contains("existence_score")) place.existence_score = p.at("existence_score").get<double>();
      places.push_back(place);
    }
    const auto& je = doc.at("edges");
    for (std::size_t i = 0; i < je.size(); ++i) {
      field = "edges[" + std::to_string(i) + "]";
      const auto& e = je.at(i);
      if (e.size() != 2) throw Error(ErrorCode::ParseError, "edge must have two endpoints");
      edges.emplace_back(e.at(0).get<PlaceId>(), e.at(1).get<PlaceId>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, field + ": " + e.what());
  } catch (const Error& e) {
    throw Error(e.code(), field + ": " + e.what());
  }
  TopologicalMap map(std::move(places), std::move(edges));
  map.validate(allow_missing);
  return map;
}

void save_map(const TopologicalMap& map, const std::filesystem::path& path) {
  write_file_atomic(path, map_to_json(map).dump(1) + "\n");
}

TopologicalMap load_map(const std::filesystem::path& path, bool allow_missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto offset = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n');
    throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
  try {
    return map_from_json(doc, allow_missing);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

// --- mutations -------------------------------------------------------------

Occlusion occlude(const TopologicalMap& map, const OcclusionMode& mode, std::uint64_t seed) {
  Occlusion out{map, map, {}};
  auto& places = out.query.mutable_places();
  std::vector<std::size_t> chosen;
  if (const auto* region = std::get_if<RegionOcclusion>(&mode)) {
    for (std::size_t i = 0; i < places.size(); ++i)
      if (places[i].x >= region->x_min && places[i].x <= region->x_max && places[i].y >= region->y_min &&
          places[i].y <= region->y_max)
        chosen.push_back(i);
  } else if (const auto* random = std::get_if<RandomOcclusion>(&mode)) {
    if (!(random->fraction >= 0.0 && random->fraction <= 1.0))
      throw Error(ErrorCode::InvalidArgument, "occlusion fraction must lie in [0, 1]");
    const auto k = static_cast<std::size_t>(std::llround(random->fraction * static_cast<double>(places.size())));
    std::vector<std::size_t> order(places.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    for (std::size_t i = 0; i < places.size(); ++i) chosen.push_back(i);
  }
  for (auto i : chosen) {
    places[i].category = Category::Missing;
    out.occluded.push_back(places[i].id);
  }
  std::sort(out.occluded.begin(), out.occluded.end());
  return out;
}

TopologicalMap swap_categories(const TopologicalMap& map, Category a, Category b) {
  if (a == b) throw Error(ErrorCode::SameCategory, std::string(to_string(a)));
  TopologicalMap out = map;
  for (auto& p : out.mutable_places()) {
    if (p.category == a) p.category = b;
    else if (p.category == b) p.category = a;
  }
  return out;
}

}  // namespace topospn
