#include "topospn/templates.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace topospn {

namespace {

constexpr std::array<std::string_view, 4> kKindNames{"single", "pair", "three_chain", "three_star"};

}  // namespace

std::size_t arity(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::Single: return 1;
    case TemplateKind::Pair: return 2;
    case TemplateKind::ThreeChain: return 3;
    case TemplateKind::ThreeStar: return 4;
  }
  return 0;
}

std::string_view to_string(TemplateKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

TemplateKind template_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<TemplateKind>(i);
  throw Error(ErrorCode::ParseError, "unknown template '" + std::string(name) + "'");
}

Graph Graph::from_map(const TopologicalMap& map) {
  Graph g;
  g.adjacency = map.adjacency();
  for (const auto& p : map.places()) g.order_key.push_back(p.id);
  return g;
}

std::vector<std::size_t> match_graph(const Graph& graph, const std::vector<bool>& available, std::size_t v,
                                     TemplateKind kind, Rng& rng) {
  const auto& adj = graph.adjacency;
  auto by_key = [&](std::size_t a, std::size_t b) { return graph.order_key[a] < graph.order_key[b]; };
  auto free_neighbors = [&](std::size_t n, std::size_t except) {
    std::vector<std::size_t> out;
    for (auto m : adj[n])
      if (available[m] && m != except) out.push_back(m);
    return out;
  };

  std::vector<std::vector<std::size_t>> candidates;
  switch (kind) {
    case TemplateKind::Single: return {v};
    case TemplateKind::Pair:
      for (auto u : free_neighbors(v, v)) {
        std::vector<std::size_t> c{v, u};
        std::sort(c.begin(), c.end(), by_key);
        candidates.push_back(c);
      }
      break;
    case TemplateKind::ThreeChain: {
      auto chain = [&](std::size_t end1, std::size_t mid, std::size_t end2) {
        if (by_key(end2, end1)) std::swap(end1, end2);
        candidates.push_back({end1, mid, end2});
      };
      const auto nv = free_neighbors(v, v);
      for (std::size_t i = 0; i < nv.size(); ++i)
        for (std::size_t j = i + 1; j < nv.size(); ++j) chain(nv[i], v, nv[j]);
      for (auto u : nv)
        for (auto w : free_neighbors(u, v)) chain(v, u, w);
      break;
    }
    case TemplateKind::ThreeStar: {
      auto star = [&](std::size_t center, std::vector<std::size_t> leaves) {
        std::sort(leaves.begin(), leaves.end(), by_key);
        leaves.insert(leaves.begin(), center);
        candidates.push_back(std::move(leaves));
      };
      const auto nv = free_neighbors(v, v);
      for (std::size_t i = 0; i < nv.size(); ++i)
        for (std::size_t j = i + 1; j < nv.size(); ++j)
          for (std::size_t k = j + 1; k < nv.size(); ++k) star(v, {nv[i], nv[j], nv[k]});
      for (auto u : nv) {
        const auto nu = free_neighbors(u, v);
        for (std::size_t i = 0; i < nu.size(); ++i)
          for (std::size_t j = i + 1; j < nu.size(); ++j) star(u, {v, nu[i], nu[j]});
      }
      break;
    }
  }
  if (candidates.empty()) return {};
  return candidates[rng.uniform_index(candidates.size())];
}

Graph Partition::supergraph(const Graph& graph) const {
  Graph h;
  h.adjacency.resize(groups.size());
  for (const auto& g : groups) {
    std::uint64_t key = graph.order_key[g.front()];
    for (auto n : g) key = std::min(key, graph.order_key[n]);
    h.order_key.push_back(key);
  }
  for (auto [a, b] : edges) {
    h.adjacency[a].push_back(b);
    h.adjacency[b].push_back(a);
  }
  for (auto& n : h.adjacency) std::sort(n.begin(), n.end());
  return h;
}

Partition graph_partition(const Graph& graph, TemplateKind kind, std::uint64_t seed) {
  Partition p;
  const std::size_t n = graph.size();
  p.group_of.assign(n, -1);
  std::vector<bool> available(n, true);
  // Dense list of available nodes for uniform draws.
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> where(n);
  std::iota(where.begin(), where.end(), std::size_t{0});
  auto retire = [&](std::size_t v) {
    available[v] = false;
    const auto i = where[v];
    where[pool.back()] = i;
    std::swap(pool[i], pool.back());
    pool.pop_back();
  };

  Rng rng(seed);
  while (!pool.empty()) {
    const std::size_t v = pool[rng.uniform_index(pool.size())];
    auto used = match_graph(graph, available, v, kind, rng);
    if (used.empty()) {
      retire(v);
      p.uncovered.push_back(v);
      continue;
    }
    for (auto u : used) {
      retire(u);
      p.group_of[u] = static_cast<long>(p.groups.size());
    }
    p.groups.push_back(std::move(used));
  }
  std::sort(p.uncovered.begin(), p.uncovered.end());

  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t a = 0; a < n; ++a)
    for (auto b : graph.adjacency[a]) {
      const long ga = p.group_of[a], gb = p.group_of[b];
      if (ga < 0 || gb < 0 || ga == gb) continue;
      edges.emplace(std::min(ga, gb), std::max(ga, gb));
    }
  p.edges.assign(edges.begin(), edges.end());
  return p;
}

std::vector<std::vector<std::size_t>> regroup_uncovered(const Graph& graph, const std::vector<std::size_t>& uncovered) {
  std::vector<std::size_t> order = uncovered;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return graph.order_key[a] < graph.order_key[b]; });
  std::vector<bool> open(graph.size(), false);
  for (auto v : order) open[v] = true;
  std::vector<std::vector<std::size_t>> out;
  for (auto v : order) {
    if (!open[v]) continue;
    open[v] = false;
    std::optional<std::size_t> mate;
    for (auto u : graph.adjacency[v])
      if (open[u] && (!mate || graph.order_key[u] < graph.order_key[*mate])) mate = u;
    if (mate) {
      open[*mate] = false;
      out.push_back({v, *mate});  // v has the smaller key
    } else {
      out.push_back({v});
    }
  }
  return out;
}

std::vector<std::size_t> coverage_curve(const Graph& graph, TemplateKind kind, std::size_t attempts,
                                        std::uint64_t seed) {
  if (attempts == 0) throw Error(ErrorCode::InvalidArgument, "coverage curve needs at least one attempt");
  std::vector<bool> covered(graph.size(), false);
  std::size_t uncovered = graph.size();
  std::vector<std::size_t> curve;
  for (std::size_t a = 0; a < attempts; ++a) {
    const auto p = graph_partition(graph, kind, derive_seed(seed, a));
    for (std::size_t v = 0; v < graph.size(); ++v)
      if (p.group_of[v] >= 0 && !covered[v]) {
        covered[v] = true;
        --uncovered;
      }
    curve.push_back(uncovered);
  }
  return curve;
}

std::string hierarchy_key(const TemplateHierarchy& hierarchy, std::size_t levels) {
  std::string key;
  for (std::size_t l = 0; l < levels; ++l) {
    if (l) key += '>';
    key += to_string(hierarchy[l]);
  }
  return key;
}

std::vector<Unit> partition_map(const TopologicalMap& map, const TemplateHierarchy& hierarchy, std::uint64_t seed) {
  if (hierarchy.empty()) throw Error(ErrorCode::InvalidArgument, "template hierarchy needs at least one level");
  std::vector<Unit> done;
  Graph graph = Graph::from_map(map);
  Partition p = graph_partition(graph, hierarchy[0], derive_seed(seed, 0));
  for (auto& g : regroup_uncovered(graph, p.uncovered))
    done.push_back({std::string(to_string(g.size() == 1 ? TemplateKind::Single : TemplateKind::Pair)), g, {}});

  std::vector<Unit> current;
  for (const auto& g : p.groups) {
    Unit u{hierarchy_key(hierarchy, 1), g, {}};
    if (hierarchy[0] == TemplateKind::ThreeChain) u.chain_offsets.push_back(0);
    current.push_back(std::move(u));
  }
  for (std::size_t level = 1; level < hierarchy.size(); ++level) {
    graph = p.supergraph(graph);
    p = graph_partition(graph, hierarchy[level], derive_seed(seed, level));
    for (auto i : p.uncovered) done.push_back(std::move(current[i]));
    std::vector<Unit> next;
    for (const auto& g : p.groups) {
      Unit u{hierarchy_key(hierarchy, level + 1), {}, {}};
      for (auto i : g) {
        for (auto off : current[i].chain_offsets) u.chain_offsets.push_back(u.nodes.size() + off);
        u.nodes.insert(u.nodes.end(), current[i].nodes.begin(), current[i].nodes.end());
      }
      next.push_back(std::move(u));
    }
    current = std::move(next);
  }
  for (auto& u : current) done.push_back(std::move(u));
  return done;
}

TemplateSamples extract_training_samples(const std::vector<TopologicalMap>& maps, const TemplateHierarchy& hierarchy,
                                         std::size_t attempts, std::uint64_t seed) {
  TemplateSamples samples;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    maps[m].validate(false);
    for (std::size_t a = 0; a < attempts; ++a) {
      for (const auto& unit : partition_map(maps[m], hierarchy, derive_seed(derive_seed(seed, m), a))) {
        std::vector<Category> row;
        for (auto n : unit.nodes) row.push_back(maps[m].places()[n].category);
        auto& bucket = samples[unit.key];
        bucket.push_back(row);
        if (unit.chain_offsets.empty()) continue;
        for (auto off : unit.chain_offsets) std::swap(row[off], row[off + 2]);
        bucket.push_back(std::move(row));
      }
    }
  }
  return samples;
}

std::string samples_to_csv(const TemplateSamples& samples) {
  std::size_t width = 0;
  for (const auto& [key, rows] : samples)
    for (const auto& r : rows) width = std::max(width, r.size());
  std::string out = "template";
  for (std::size_t i = 0; i < width; ++i) out += ",c" + std::to_string(i + 1);
  out += '\n';
  for (const auto& [key, rows] : samples)
    for (const auto& r : rows) {
      out += key;
      for (auto c : r) {
        out += ',';
        out += to_string(c);
      }
      out += '\n';
    }
  return out;
}

TemplateLibrary train_templates(const TemplateSamples& samples, const TemplateTrainingConfig& config,
                                std::uint64_t seed, std::map<std::string, LikelihoodCurve>* curves) {
  TemplateLibrary library;
  std::uint64_t label = 0;
  for (const auto& [key, rows] : samples) {
    ++label;
    if (rows.empty()) continue;
    const auto vars = uniform_variables(rows.front().size(), kNumCategoryValues);
    std::vector<Evidence> data;
    for (const auto& r : rows) {
      if (r.size() != vars.size()) throw Error(ErrorCode::DimensionMismatch, "template '" + key + "' sample width");
      Evidence e(vars);
      for (std::size_t i = 0; i < r.size(); ++i) e.observe(static_cast<VarId>(i), category_value(r[i]));
      data.push_back(std::move(e));
    }
    DecompConfig structure = config.structure;
    structure.seed = derive_seed(seed, 2 * label);
    auto net = generate_dense(vars, structure);
    initialize_weights(net, derive_seed(seed, 2 * label + 1), config.init_jitter);
    TrainConfig tc = config.train;
    tc.seed = derive_seed(seed, label);
    auto curve = train(net, data, tc);
    if (curves) (*curves)[key] = std::move(curve);
    library.emplace(key, std::move(net));
  }
  return library;
}

namespace {

// Copies a template network into the builder, reading variable i of the
// template from map variable nodes[i].
NodeId copy_template(NetworkBuilder& builder, const SpnNetwork& tmpl, const std::vector<WeightSetId>& sets,
                     const std::vector<std::size_t>& nodes) {
  std::vector<NodeId> map(tmpl.num_nodes());
  for (NodeId id : tmpl.topological_order()) {
    std::vector<NodeId> children;
    for (NodeId c : tmpl.children(id)) children.push_back(map[c]);
    switch (tmpl.kind(id)) {
      case NodeKind::Sum: map[id] = builder.shared_sum(std::move(children), sets[tmpl.weight_set(id)]); break;
      case NodeKind::Product: map[id] = builder.product(std::move(children)); break;
      case NodeKind::Max: map[id] = builder.max(std::move(children)); break;
      case NodeKind::Constant: map[id] = builder.constant(); break;
      case NodeKind::Indicator:
        map[id] = builder.indicator(static_cast<VarId>(nodes[tmpl.var(id)]), tmpl.value(id));
        break;
    }
  }
  return map[tmpl.root()];
}

}  // namespace

InstanceSpn build_instance_spn(const TopologicalMap& map, const TemplateHierarchy& hierarchy,
                               const InstanceSpnConfig& config, const TemplateLibrary& library) {
  if (config.attempts == 0) throw Error(ErrorCode::InvalidArgument, "instance network needs at least one attempt");
  if (map.size() == 0) throw Error(ErrorCode::InvalidArgument, "instance network needs a non-empty map");
  InstanceSpn out;
  NetworkBuilder builder(uniform_variables(map.size(), kNumCategoryValues));
  std::map<std::string, std::vector<WeightSetId>> sets;
  std::vector<NodeId> products;
  for (std::size_t k = 0; k < config.attempts; ++k) {
    auto units = partition_map(map, hierarchy, derive_seed(config.seed, k));
    std::vector<NodeId> factors;
    std::vector<bool> covered(map.size(), false);
    for (const auto& unit : units) {
      const auto it = library.find(unit.key);
      if (it == library.end()) throw Error(ErrorCode::UntrainedTemplate, "no trained template for '" + unit.key + "'");
      const auto& tmpl = it->second;
      if (tmpl.num_variables() != unit.nodes.size())
        throw Error(ErrorCode::DimensionMismatch, "template '" + unit.key + "' has the wrong arity");
      auto [slot, fresh] = sets.try_emplace(unit.key);
      if (fresh)
        for (WeightSetId s = 0; s < tmpl.num_weight_sets(); ++s) {
          const auto w = tmpl.weights(s);
          slot->second.push_back(builder.add_weight_set({w.begin(), w.end()}));
        }
      factors.push_back(copy_template(builder, tmpl, slot->second, unit.nodes));
      for (auto n : unit.nodes) covered[n] = true;
    }
    const auto gap = std::find(covered.begin(), covered.end(), false);
    if (gap != covered.end())
      throw Error(ErrorCode::ScopeGap, "place " + std::to_string(map.places()[gap - covered.begin()].id) +
                                           " is covered by no template");
    products.push_back(factors.size() == 1 ? factors.front() : builder.product(std::move(factors)));
    out.attempts.push_back(std::move(units));
  }
  const NodeId root =
      products.size() == 1
          ? products.front()
          : builder.sum(products, std::vector<double>(products.size(), 1.0 / static_cast<double>(products.size())));
  out.net = std::move(builder).build(root);
  return out;
}

nlohmann::json instance_log_to_json(const TopologicalMap& map, const InstanceSpn& instance) {
  nlohmann::json attempts = nlohmann::json::array();
  for (const auto& units : instance.attempts) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& u : units) {
      nlohmann::json ids = nlohmann::json::array();
      for (auto n : u.nodes) ids.push_back(map.places()[n].id);
      groups.push_back({{"template", u.key}, {"places", std::move(ids)}});
    }
    attempts.push_back(std::move(groups));
  }
  return {{"attempts", std::move(attempts)}};
}

Evidence map_to_evidence(const TopologicalMap& map) {
  Evidence e(uniform_variables(map.size(), kNumCategoryValues));
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map.places()[i].category != Category::Missing)
      e.observe(static_cast<VarId>(i), category_value(map.places()[i].category));
  return e;
}

TopologicalMap complete_map(const TopologicalMap& map, const TemplateHierarchy& hierarchy,
                            const InstanceSpnConfig& config, const TemplateLibrary& library) {
  const auto& places = map.places();
  if (std::none_of(places.begin(), places.end(), [](const Place& p) { return p.category == Category::Missing; }))
    return map;
  const auto instance = build_instance_spn(map, hierarchy, config, library);
  const auto result = mpe(instance.net, map_to_evidence(map));
  TopologicalMap out = map;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& p = out.mutable_places()[i];
    if (p.category == Category::Missing) p.category = category_from_value(result.assignment[i]);
  }
  return out;
}

}  // namespace topospn
