#pragma once

// Sum-product networks over categorical variables: representation, structural
// checks and log-space inference (evaluation, derivatives, marginals, MPE).

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topospn/error.hpp"

namespace topospn {

using NodeId = std::uint32_t;
using VarId = std::uint32_t;
using WeightSetId = std::uint32_t;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

struct VariableSpec {
  VarId id = 0;
  std::uint32_t cardinality = 2;

  friend bool operator==(const VariableSpec&, const VariableSpec&) = default;
};

// Variables 0..count-1, all with the same cardinality.
std::vector<VariableSpec> uniform_variables(std::size_t count, std::uint32_t cardinality);

// Max nodes only appear at the root of rotation-invariant networks. Constant
// leaves evaluate to 1 and have an empty scope.
enum class NodeKind : std::uint8_t { Sum, Product, Max, Indicator, Constant };

const char* to_string(NodeKind kind);

struct Node {
  NodeKind kind = NodeKind::Constant;
  std::vector<NodeId> children;
  WeightSetId weight_set = 0;  // Sum only
  VarId var = 0;               // Indicator only
  std::uint32_t value = 0;     // Indicator only

  static Node sum(std::vector<NodeId> children, WeightSetId weight_set);
  static Node product(std::vector<NodeId> children);
  static Node max(std::vector<NodeId> children);
  static Node indicator(VarId var, std::uint32_t value);
  static Node constant();
};

// Dynamic bitset over variable ids.
class VarSet {
 public:
  VarSet() = default;
  explicit VarSet(std::size_t universe) : words_((universe + 63) / 64, 0) {}

  void insert(VarId v) { words_[v / 64] |= std::uint64_t{1} << (v % 64); }
  bool contains(VarId v) const { return (words_[v / 64] >> (v % 64)) & 1U; }
  bool intersects(const VarSet& other) const;
  VarSet& operator|=(const VarSet& other);
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  std::vector<VarId> to_vector() const;

  friend bool operator==(const VarSet&, const VarSet&) = default;

 private:
  std::vector<std::uint64_t> words_;
};

// Strict networks refuse evaluation and MPE when they are not complete and
// decomposable; permissive ones (e.g. rotation-invariant assemblies) allow it.
enum class ValidationPolicy : std::uint8_t { Strict, Permissive };

class SpnNetwork {
 public:
  const std::vector<VariableSpec>& variables() const { return variables_; }
  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_nodes() const { return kinds_.size(); }
  NodeId root() const { return root_; }

  NodeKind kind(NodeId id) const { return kinds_[id]; }
  std::span<const NodeId> children(NodeId id) const {
    return {child_ids_.data() + child_begin_[id], child_begin_[id + 1] - child_begin_[id]};
  }
  WeightSetId weight_set(NodeId id) const { return weight_set_of_[id]; }
  VarId var(NodeId id) const { return var_of_[id]; }
  std::uint32_t value(NodeId id) const { return value_of_[id]; }
  const VarSet& scope(NodeId id) const { return scopes_[id]; }

  // Children before parents; the root is last.
  const std::vector<NodeId>& topological_order() const { return order_; }

  std::size_t num_weight_sets() const { return weight_begin_.size() - 1; }
  std::span<const double> weights(WeightSetId set) const {
    return {weights_.data() + weight_begin_[set], weight_begin_[set + 1] - weight_begin_[set]};
  }
  // Learning is the only mutator. Values must stay finite and non-negative.
  std::span<double> mutable_weights(WeightSetId set) {
    return {weights_.data() + weight_begin_[set], weight_begin_[set + 1] - weight_begin_[set]};
  }
  // Sum nodes referencing each weight set.
  const std::vector<std::vector<NodeId>>& share_groups() const { return share_groups_; }

  ValidationPolicy policy() const { return policy_; }
  bool is_complete() const { return incomplete_.empty(); }
  bool is_decomposable() const { return non_decomposable_.empty(); }
  bool is_valid() const { return is_complete() && is_decomposable(); }
  const std::vector<NodeId>& incomplete_sums() const { return incomplete_; }
  const std::vector<NodeId>& non_decomposable_products() const { return non_decomposable_; }

  // Reconstructs the node list, e.g. for serialization or structural edits.
  std::vector<Node> nodes() const;
  std::vector<std::vector<double>> weight_sets() const;

  // Throws InvalidStructure if the policy is strict and the network is invalid.
  void require_valid(const char* operation) const;

 private:
  friend SpnNetwork build_network(std::vector<VariableSpec>, std::vector<Node>, NodeId,
                                   std::vector<std::vector<double>>, ValidationPolicy);

  std::vector<VariableSpec> variables_;
  NodeId root_ = 0;
  std::vector<NodeKind> kinds_;
  std::vector<std::size_t> child_begin_;
  std::vector<NodeId> child_ids_;
  std::vector<WeightSetId> weight_set_of_;
  std::vector<VarId> var_of_;
  std::vector<std::uint32_t> value_of_;
  std::vector<VarSet> scopes_;
  std::vector<NodeId> order_;
  std::vector<std::size_t> weight_begin_;
  std::vector<double> weights_;
  std::vector<std::vector<NodeId>> share_groups_;
  std::vector<NodeId> incomplete_;
  std::vector<NodeId> non_decomposable_;
  ValidationPolicy policy_ = ValidationPolicy::Strict;
};

// Node ids are indices into `nodes`. Validates references, acyclicity, weight
// arity and sign, computes scopes and caches the completeness and
// decomposability verdicts. Nodes unreachable from the root are kept.
SpnNetwork build_network(std::vector<VariableSpec> variables, std::vector<Node> nodes, NodeId root,
                         std::vector<std::vector<double>> weight_sets,
                         ValidationPolicy policy = ValidationPolicy::Strict);

// Convenience front-end for build_network. Indicator leaves are memoized per
// (variable, value).
class NetworkBuilder {
 public:
  explicit NetworkBuilder(std::vector<VariableSpec> variables);

  NodeId indicator(VarId var, std::uint32_t value);
  NodeId constant();
  NodeId product(std::vector<NodeId> children);
  NodeId max(std::vector<NodeId> children);
  WeightSetId add_weight_set(std::vector<double> weights);
  NodeId sum(std::vector<NodeId> children, std::vector<double> weights);
  NodeId shared_sum(std::vector<NodeId> children, WeightSetId set);

  const std::vector<VariableSpec>& variables() const { return variables_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  SpnNetwork build(NodeId root, ValidationPolicy policy = ValidationPolicy::Strict) &&;

 private:
  NodeId push(Node node);

  std::vector<VariableSpec> variables_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> weight_sets_;
  std::vector<std::vector<NodeId>> indicator_ids_;
  std::optional<NodeId> constant_;
};

// Structural checks. Each returns the violating node ids in ascending order.
std::vector<NodeId> check_completeness(const SpnNetwork& net);
std::vector<NodeId> check_decomposability(const SpnNetwork& net);
std::vector<NodeId> check_consistency(const SpnNetwork& net);

// Indicator settings for every variable of a network.
class Evidence {
 public:
  enum class State : std::uint8_t { Unobserved, Observed, Soft };

  Evidence() = default;
  explicit Evidence(std::span<const VariableSpec> variables);

  std::size_t num_variables() const { return cardinality_.size(); }
  std::uint32_t cardinality(VarId var) const { return cardinality_[var]; }

  Evidence& observe(VarId var, std::uint32_t value);
  Evidence& unobserve(VarId var);
  Evidence& set_soft(VarId var, std::vector<double> indicator_values);

  State state(VarId var) const { return state_[var]; }
  bool is_observed(VarId var) const { return state_[var] == State::Observed; }
  std::optional<std::uint32_t> observed_value(VarId var) const;

  // Real value fed to indicator [var = value].
  double indicator(VarId var, std::uint32_t value) const;

  friend bool operator==(const Evidence&, const Evidence&) = default;

 private:
  std::vector<std::uint32_t> cardinality_;
  std::vector<State> state_;
  std::vector<std::uint32_t> value_;
  std::vector<std::vector<double>> soft_;
};

// Fully observed evidence from a complete assignment.
Evidence evidence_from_assignment(std::span<const VariableSpec> variables,
                                  std::span<const std::uint32_t> assignment);

struct EvaluationResult {
  std::vector<double> log_values;
  std::vector<double> log_derivatives;  // empty until backward()
  double root_log_value = kLogZero;
};

// Upward pass in log-space; the root value is log S(e).
EvaluationResult evaluate(const SpnNetwork& net, const Evidence& evidence);

// Downward pass filling log dS(e)/dS_i(e) for every node.
void backward(const SpnNetwork& net, EvaluationResult& result);

EvaluationResult evaluate_with_derivatives(const SpnNetwork& net, const Evidence& evidence);

double log_value(const SpnNetwork& net, const Evidence& evidence);

// log S(1...1).
double log_partition(const SpnNetwork& net);

// P(X_var = a | e) for every a. The variable must not be hard-observed.
std::vector<double> marginal(const SpnNetwork& net, const Evidence& evidence, VarId var);

// P(Y_i = j | e) over the children j of sum node i.
std::vector<double> hidden_marginal(const SpnNetwork& net, const Evidence& evidence, NodeId sum_node);

// Upward pass with sums replaced by weighted maxima, in log-space.
std::vector<double> max_pass(const SpnNetwork& net, const Evidence& evidence);

// Walks the max-circuit from the root: at a sum (or max) node the arg-max
// child, lowest index on ties; every child of a product. Calls
// on_sum(sum_node, chosen_child_index) and on_leaf(indicator_node).
template <typename OnSum, typename OnLeaf>
void walk_max_subcircuit(const SpnNetwork& net, std::span<const double> max_values, OnSum&& on_sum,
                         OnLeaf&& on_leaf);

struct MpeResult {
  std::vector<std::uint32_t> assignment;
  double log_value = kLogZero;  // root value of the max-circuit
};

MpeResult mpe(const SpnNetwork& net, const Evidence& evidence);

// Normalizes every weight set in place. Sets summing to zero become uniform.
void normalize_weights(SpnNetwork& net);

// ---------------------------------------------------------------------------

namespace detail {
std::size_t argmax_child(const SpnNetwork& net, NodeId node, std::span<const double> max_values);
}

template <typename OnSum, typename OnLeaf>
void walk_max_subcircuit(const SpnNetwork& net, std::span<const double> max_values, OnSum&& on_sum,
                         OnLeaf&& on_leaf) {
  std::vector<NodeId> stack{net.root()};
  while (!stack.empty()) {
    const NodeId node = stack.back();
    stack.pop_back();
    switch (net.kind(node)) {
      case NodeKind::Sum:
      case NodeKind::Max: {
        const std::size_t best = detail::argmax_child(net, node, max_values);
        if (net.kind(node) == NodeKind::Sum) on_sum(node, best);
        stack.push_back(net.children(node)[best]);
        break;
      }
      case NodeKind::Product: {
        const auto ch = net.children(node);
        for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
        break;
      }
      case NodeKind::Indicator:
        on_leaf(node);
        break;
      case NodeKind::Constant:
        break;
    }
  }
}

}  // namespace topospn
