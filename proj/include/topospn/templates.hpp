#pragma once

// Small subgraph templates, greedy graph partition, template hierarchies and
// per-map instance networks assembled from shared-weight template networks.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "topospn/learning.hpp"
#include "topospn/random.hpp"
#include "topospn/spn.hpp"
#include "topospn/structure.hpp"
#include "topospn/topomap.hpp"

namespace topospn {

// ThreeStar is a center with three leaves (four nodes).
enum class TemplateKind : std::uint8_t { Single, Pair, ThreeChain, ThreeStar };

std::size_t arity(TemplateKind kind);
std::string_view to_string(TemplateKind kind);  // single|pair|three_chain|three_star
TemplateKind template_kind_from_string(std::string_view name);

// Undirected graph with a per-node key used for canonical ordering (place ids
// for maps, minimum member id for supergraphs).
struct Graph {
  std::vector<std::vector<std::size_t>> adjacency;  // sorted
  std::vector<std::uint64_t> order_key;

  std::size_t size() const { return adjacency.size(); }
  static Graph from_map(const TopologicalMap& map);
};

// Nodes matching the template pattern among `available`, containing v, in
// canonical order: Pair by key; ThreeChain end, middle, end with ends by key;
// ThreeStar center then leaves by key. Empty when nothing matches. Among
// several matches one is drawn with rng.
std::vector<std::size_t> match_graph(const Graph& graph, const std::vector<bool>& available, std::size_t v,
                                     TemplateKind kind, Rng& rng);

struct Partition {
  std::vector<std::vector<std::size_t>> groups;             // canonical order within each group
  std::vector<std::size_t> uncovered;                       // ascending
  std::vector<std::pair<std::size_t, std::size_t>> edges;   // supergraph, between group indices
  std::vector<long> group_of;                               // -1 for uncovered nodes

  Graph supergraph(const Graph& graph) const;
};

// Repeatedly draws an available node uniformly at random, matches the template
// around it and retires the matched nodes (or the node alone when nothing
// matches). Supergraph edges join groups that share an original edge.
Partition graph_partition(const Graph& graph, TemplateKind kind, std::uint64_t seed);

// Adjacent uncovered nodes are paired greedily in ascending key order; the
// rest stay single. Each returned group is in canonical order.
std::vector<std::vector<std::size_t>> regroup_uncovered(const Graph& graph, const std::vector<std::size_t>& uncovered);

// Per attempt, the number of nodes that no partition up to that attempt has
// covered. Attempt a uses seed derive_seed(seed, a).
std::vector<std::size_t> coverage_curve(const Graph& graph, TemplateKind kind, std::size_t attempts,
                                        std::uint64_t seed);

using TemplateHierarchy = std::vector<TemplateKind>;

// "three_chain>pair" for pairs of three-node chains.
std::string hierarchy_key(const TemplateHierarchy& hierarchy, std::size_t levels);

// A unit of a hierarchical partition: the template key and the covered map
// node indices in canonical order.
struct Unit {
  std::string key;
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> chain_offsets;  // where each ThreeChain group starts within nodes
};

// Level 0 partitions the map; level l partitions the supergraph of level
// l - 1. Groups left unmatched at a level keep their lower-level key; nodes
// left uncovered at level 0 become pair/single units.
std::vector<Unit> partition_map(const TopologicalMap& map, const TemplateHierarchy& hierarchy, std::uint64_t seed);

using TemplateSamples = std::map<std::string, std::vector<std::vector<Category>>>;

// One sample per unit per attempt; units containing chains are emitted a
// second time with every chain reversed.
TemplateSamples extract_training_samples(const std::vector<TopologicalMap>& maps, const TemplateHierarchy& hierarchy,
                                         std::size_t attempts, std::uint64_t seed);

// "key,c1,c2,..." rows with lowercase category names.
std::string samples_to_csv(const TemplateSamples& samples);

struct TemplateTrainingConfig {
  DecompConfig structure{2, 2, 4, 5, 0, false};
  TrainConfig train{TrainMethod::HardEM, 0.05, 30, 0.1, 16, 0, true};
  double init_jitter = 0.5;
};

using TemplateLibrary = std::map<std::string, SpnNetwork>;

// When curves is given it receives the likelihood curve of every template.
TemplateLibrary train_templates(const TemplateSamples& samples, const TemplateTrainingConfig& config,
                                std::uint64_t seed, std::map<std::string, LikelihoodCurve>* curves = nullptr);

struct InstanceSpnConfig {
  std::size_t attempts = 10;  // K
  std::uint64_t seed = 0;
};

struct InstanceSpn {
  SpnNetwork net;
  std::vector<std::vector<Unit>> attempts;  // construction log
};

// Root sum over K products (weights 1/K), each covering every map node with
// copies of the library templates. Copies of one template share its weight
// sets. Wrappers with a single child are collapsed.
InstanceSpn build_instance_spn(const TopologicalMap& map, const TemplateHierarchy& hierarchy,
                               const InstanceSpnConfig& config, const TemplateLibrary& library);

nlohmann::json instance_log_to_json(const TopologicalMap& map, const InstanceSpn& instance);

Evidence map_to_evidence(const TopologicalMap& map);

// MPE over the instance network fills the Missing places.
TopologicalMap complete_map(const TopologicalMap& map, const TemplateHierarchy& hierarchy,
                            const InstanceSpnConfig& config, const TemplateLibrary& library);

}  // namespace topospn
