#include "topospn/structure.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <vector>

#include "topospn/random.hpp"

namespace topospn {

void DecompConfig::validate() const {
  if (num_decompositions_per_level < 1 || num_subsets_per_decomposition < 2 || num_mixtures < 1 ||
      max_singleton_mixtures < 1)
    throw Error(ErrorCode::InvalidArgument,
                "decomposition config needs >=1 decompositions, >=2 subsets and >=1 mixtures");
}

namespace {

using Scope = std::vector<VarId>;
using Partition = std::vector<Scope>;

class DenseGenerator {
 public:
  DenseGenerator(std::span<const VariableSpec> vars, const DecompConfig& cfg)
      : builder_(std::vector<VariableSpec>(vars.begin(), vars.end())), cfg_(cfg), rng_(cfg.seed) {}

  SpnNetwork run() {
    Scope all(builder_.variables().size());
    for (std::size_t v = 0; v < all.size(); ++v) all[v] = static_cast<VarId>(v);
    const NodeId root = region(all, 0, true).front();
    return std::move(builder_).build(root);
  }

 private:
  static std::vector<double> uniform(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

  NodeId indicator_sum(VarId var) {
    std::vector<NodeId> leaves;
    const auto card = builder_.variables()[var].cardinality;
    for (std::uint32_t a = 0; a < card; ++a) leaves.push_back(builder_.indicator(var, a));
    return builder_.sum(std::move(leaves), uniform(card));
  }

  Partition random_partition(const Scope& scope) {
    Scope shuffled = scope;
    rng_.shuffle(std::span<VarId>(shuffled));
    const std::size_t parts = std::min<std::size_t>(cfg_.num_subsets_per_decomposition, scope.size());
    Partition p(parts);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < parts; ++i) {
      const std::size_t size = scope.size() / parts + (i < scope.size() % parts ? 1 : 0);
      p[i].assign(shuffled.begin() + static_cast<std::ptrdiff_t>(pos),
                  shuffled.begin() + static_cast<std::ptrdiff_t>(pos + size));
      std::sort(p[i].begin(), p[i].end());
      pos += size;
    }
    std::sort(p.begin(), p.end());
    return p;
  }

  std::vector<NodeId> region(const Scope& scope, std::uint32_t depth, bool is_root) {
    if (scope.size() == 1) {
      if (is_root) return {indicator_sum(scope.front())};
      auto it = memo_.find(scope);
      if (it != memo_.end()) return it->second;
      std::vector<NodeId> sums;
      for (std::uint32_t m = 0; m < cfg_.max_singleton_mixtures; ++m) sums.push_back(indicator_sum(scope.front()));
      return memo_.emplace(scope, std::move(sums)).first->second;
    }
    if (!is_root) {
      auto it = memo_.find(scope);
      if (it != memo_.end()) return it->second;
    }

    std::vector<Partition> partitions;
    for (std::uint32_t d = 0; d < cfg_.num_decompositions_per_level; ++d) {
      Partition p = random_partition(scope);
      if (std::find(partitions.begin(), partitions.end(), p) == partitions.end()) partitions.push_back(std::move(p));
    }

    std::vector<NodeId> products;
    for (const Partition& p : partitions) {
      std::vector<std::vector<NodeId>> choices;
      for (const Scope& subset : p) choices.push_back(region(subset, depth + 1, false));
      // Cartesian product over the sub-regions' sums.
      std::vector<std::size_t> idx(choices.size(), 0);
      while (true) {
        std::vector<NodeId> kids;
        for (std::size_t s = 0; s < choices.size(); ++s) kids.push_back(choices[s][idx[s]]);
        products.push_back(builder_.product(std::move(kids)));
        std::size_t s = 0;
        while (s < idx.size() && ++idx[s] == choices[s].size()) idx[s++] = 0;
        if (s == idx.size()) break;
      }
    }

    const std::uint32_t count = is_root ? 1 : cfg_.num_mixtures;
    std::vector<NodeId> sums;
    for (std::uint32_t m = 0; m < count; ++m) {
      if (cfg_.share_weights_per_level && !is_root) {
        const auto key = std::make_tuple(depth, m, products.size());
        auto it = level_sets_.find(key);
        if (it == level_sets_.end()) it = level_sets_.emplace(key, builder_.add_weight_set(uniform(products.size()))).first;
        sums.push_back(builder_.shared_sum(products, it->second));
      } else {
        sums.push_back(builder_.sum(products, uniform(products.size())));
      }
    }
    if (is_root) return sums;
    return memo_.emplace(scope, std::move(sums)).first->second;
  }

  NetworkBuilder builder_;
  DecompConfig cfg_;
  Rng rng_;
  std::map<Scope, std::vector<NodeId>> memo_;
  std::map<std::tuple<std::uint32_t, std::uint32_t, std::size_t>, WeightSetId> level_sets_;
};

}  // namespace

SpnNetwork generate_dense(std::span<const VariableSpec> variables, const DecompConfig& config) {
  config.validate();
  if (variables.empty()) throw Error(ErrorCode::InvalidArgument, "generate_dense needs at least one variable");
  return DenseGenerator(variables, config).run();
}

std::string scope_signature(const SpnNetwork& net) {
  constexpr auto kUnseen = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> depth(net.num_nodes(), kUnseen);
  // 0-1 BFS: stepping below a sum costs one level.
  std::deque<NodeId> queue{net.root()};
  depth[net.root()] = 0;
  while (!queue.empty()) {
    const NodeId n = queue.front();
    queue.pop_front();
    const std::uint32_t step = net.kind(n) == NodeKind::Sum ? 1 : 0;
    for (NodeId c : net.children(n)) {
      if (depth[n] + step < depth[c]) {
        depth[c] = depth[n] + step;
        if (step == 0) queue.push_front(c);
        else queue.push_back(c);
      }
    }
  }
  std::map<std::uint32_t, std::set<std::string>> levels;
  for (NodeId id = 0; id < net.num_nodes(); ++id) {
    if (net.kind(id) != NodeKind::Sum || depth[id] == kUnseen) continue;
    std::ostringstream s;
    s << '{';
    const auto vars = net.scope(id).to_vector();
    for (std::size_t i = 0; i < vars.size(); ++i) s << (i ? "," : "") << vars[i];
    s << '}';
    levels[depth[id]].insert(s.str());
  }
  std::ostringstream out;
  for (const auto& [d, scopes] : levels) {
    out << d << ':';
    for (const auto& s : scopes) out << ' ' << s;
    out << '\n';
  }
  return out.str();
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace topospn
