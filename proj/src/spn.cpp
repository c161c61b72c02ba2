#include "topospn/spn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <utility>

namespace topospn {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::DanglingChild: return "DanglingChild";
    case ErrorCode::EmptyChildren: return "EmptyChildren";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::InvalidStructure: return "InvalidStructure";
    case ErrorCode::ImpossibleEvidence: return "ImpossibleEvidence";
    case ErrorCode::VariableObserved: return "VariableObserved";
    case ErrorCode::NotASumNode: return "NotASumNode";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::WouldOrphanRoot: return "WouldOrphanRoot";
    case ErrorCode::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::SameCategory: return "SameCategory";
    case ErrorCode::GridOverflow: return "GridOverflow";
    case ErrorCode::MissingBackMapping: return "MissingBackMapping";
    case ErrorCode::UntrainedTemplate: return "UntrainedTemplate";
    case ErrorCode::ScopeGap: return "ScopeGap";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Sum: return "sum";
    case NodeKind::Product: return "product";
    case NodeKind::Max: return "max";
    case NodeKind::Indicator: return "indicator";
    case NodeKind::Constant: return "constant";
  }
  return "?";
}

std::vector<VariableSpec> uniform_variables(std::size_t count, std::uint32_t cardinality) {
  std::vector<VariableSpec> vars(count);
  for (std::size_t i = 0; i < count; ++i) vars[i] = {static_cast<VarId>(i), cardinality};
  return vars;
}

Node Node::sum(std::vector<NodeId> children, WeightSetId weight_set) {
  Node n;
  n.kind = NodeKind::Sum;
  n.children = std::move(children);
  n.weight_set = weight_set;
  return n;
}

Node Node::product(std::vector<NodeId> children) {
  Node n;
  n.kind = NodeKind::Product;
  n.children = std::move(children);
  return n;
}

Node Node::max(std::vector<NodeId> children) {
  Node n;
  n.kind = NodeKind::Max;
  n.children = std::move(children);
  return n;
}

Node Node::indicator(VarId var, std::uint32_t value) {
  Node n;
  n.kind = NodeKind::Indicator;
  n.var = var;
  n.value = value;
  return n;
}

Node Node::constant() { return Node{}; }

// --- VarSet ----------------------------------------------------------------

bool VarSet::intersects(const VarSet& other) const {
  const std::size_t n = std::min(words_.size(), other.words_.size());
  for (std::size_t i = 0; i < n; ++i)
    if (words_[i] & other.words_[i]) return true;
  return false;
}

VarSet& VarSet::operator|=(const VarSet& other) {
  if (other.words_.size() > words_.size()) words_.resize(other.words_.size(), 0);
  for (std::size_t i = 0; i < other.words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

std::size_t VarSet::size() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<VarId> VarSet::to_vector() const {
  std::vector<VarId> out;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    std::uint64_t w = words_[i];
    while (w) {
      const int bit = std::countr_zero(w);
      out.push_back(static_cast<VarId>(i * 64 + static_cast<std::size_t>(bit)));
      w &= w - 1;
    }
  }
  return out;
}

// --- construction ----------------------------------------------------------

namespace {

bool is_internal(NodeKind k) {
  return k == NodeKind::Sum || k == NodeKind::Product || k == NodeKind::Max;
}

std::vector<NodeId> topological_sort(const std::vector<Node>& nodes) {
  enum : std::uint8_t { kWhite, kGrey, kBlack };
  std::vector<std::uint8_t> color(nodes.size(), kWhite);
  std::vector<NodeId> order;
  order.reserve(nodes.size());
  std::vector<std::pair<NodeId, std::size_t>> stack;
  for (NodeId start = 0; start < nodes.size(); ++start) {
    if (color[start] != kWhite) continue;
    stack.emplace_back(start, 0);
    color[start] = kGrey;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      const auto& ch = nodes[node].children;
      if (next < ch.size()) {
        const NodeId c = ch[next++];
        if (color[c] == kGrey)
          throw Error(ErrorCode::CycleDetected, "node " + std::to_string(c) + " reachable from itself");
        if (color[c] == kWhite) {
          color[c] = kGrey;
          stack.emplace_back(c, 0);
        }
      } else {
        color[node] = kBlack;
        order.push_back(node);
        stack.pop_back();
      }
    }
  }
  return order;
}

}  // namespace

SpnNetwork build_network(std::vector<VariableSpec> variables, std::vector<Node> nodes, NodeId root,
                         std::vector<std::vector<double>> weight_sets, ValidationPolicy policy) {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i].id != i)
      throw Error(ErrorCode::InvalidArgument, "variable ids must be dense from 0");
    if (variables[i].cardinality < 2)
      throw Error(ErrorCode::InvalidArgument, "variable " + std::to_string(i) + " has cardinality < 2");
  }
  if (root >= nodes.size()) throw Error(ErrorCode::DanglingChild, "root " + std::to_string(root) + " does not exist");
  for (const auto& set : weight_sets)
    for (double w : set)
      if (!std::isfinite(w) || w < 0.0) throw Error(ErrorCode::NegativeWeight, "weight " + std::to_string(w));

  for (NodeId id = 0; id < nodes.size(); ++id) {
    const Node& n = nodes[id];
    const std::string where = "node " + std::to_string(id);
    if (is_internal(n.kind)) {
      if (n.children.empty()) throw Error(ErrorCode::EmptyChildren, where);
      for (NodeId c : n.children)
        if (c >= nodes.size())
          throw Error(ErrorCode::DanglingChild, where + " references missing child " + std::to_string(c));
    } else if (!n.children.empty()) {
      throw Error(ErrorCode::InvalidArgument, where + ": leaves cannot have children");
    }
    if (n.kind == NodeKind::Sum) {
      if (n.weight_set >= weight_sets.size())
        throw Error(ErrorCode::DanglingChild, where + " references missing weight set");
      if (weight_sets[n.weight_set].size() != n.children.size())
        throw Error(ErrorCode::InvalidArgument, where + ": weight arity differs from child count");
    }
    if (n.kind == NodeKind::Indicator) {
      if (n.var >= variables.size() || n.value >= variables[n.var].cardinality)
        throw Error(ErrorCode::InvalidArgument, where + ": indicator out of range");
    }
  }

  SpnNetwork net;
  net.order_ = topological_sort(nodes);
  net.variables_ = std::move(variables);
  net.root_ = root;
  net.policy_ = policy;

  const std::size_t n = nodes.size();
  net.kinds_.resize(n);
  net.child_begin_.resize(n + 1, 0);
  net.weight_set_of_.resize(n, 0);
  net.var_of_.resize(n, 0);
  net.value_of_.resize(n, 0);
  for (NodeId id = 0; id < n; ++id) {
    const Node& node = nodes[id];
    net.kinds_[id] = node.kind;
    net.weight_set_of_[id] = node.weight_set;
    net.var_of_[id] = node.var;
    net.value_of_[id] = node.value;
    net.child_begin_[id + 1] = net.child_begin_[id] + node.children.size();
  }
  net.child_ids_.reserve(net.child_begin_[n]);
  for (const auto& node : nodes) net.child_ids_.insert(net.child_ids_.end(), node.children.begin(), node.children.end());

  net.weight_begin_.assign(1, 0);
  for (auto& set : weight_sets) {
    net.weight_begin_.push_back(net.weight_begin_.back() + set.size());
    net.weights_.insert(net.weights_.end(), set.begin(), set.end());
  }
  net.share_groups_.assign(weight_sets.size(), {});
  for (NodeId id = 0; id < n; ++id)
    if (nodes[id].kind == NodeKind::Sum) net.share_groups_[nodes[id].weight_set].push_back(id);

  const std::size_t universe = net.variables_.size();
  net.scopes_.assign(n, VarSet(universe));
  for (NodeId id : net.order_) {
    if (net.kinds_[id] == NodeKind::Indicator) {
      net.scopes_[id].insert(net.var_of_[id]);
    } else {
      for (NodeId c : net.children(id)) net.scopes_[id] |= net.scopes_[c];
    }
  }

  for (NodeId id = 0; id < n; ++id) {
    const auto ch = net.children(id);
    if (net.kinds_[id] == NodeKind::Sum) {
      for (NodeId c : ch)
        if (!(net.scopes_[c] == net.scopes_[ch.front()])) {
          net.incomplete_.push_back(id);
          break;
        }
    } else if (net.kinds_[id] == NodeKind::Product) {
      VarSet seen(universe);
      for (NodeId c : ch) {
        if (seen.intersects(net.scopes_[c])) {
          net.non_decomposable_.push_back(id);
          break;
        }
        seen |= net.scopes_[c];
      }
    }
  }
  return net;
}

std::vector<Node> SpnNetwork::nodes() const {
  std::vector<Node> out(num_nodes());
  for (NodeId id = 0; id < num_nodes(); ++id) {
    Node& n = out[id];
    n.kind = kinds_[id];
    const auto ch = children(id);
    n.children.assign(ch.begin(), ch.end());
    n.weight_set = weight_set_of_[id];
    n.var = var_of_[id];
    n.value = value_of_[id];
  }
  return out;
}

std::vector<std::vector<double>> SpnNetwork::weight_sets() const {
  std::vector<std::vector<double>> out;
  out.reserve(num_weight_sets());
  for (WeightSetId s = 0; s < num_weight_sets(); ++s) {
    const auto w = weights(s);
    out.emplace_back(w.begin(), w.end());
  }
  return out;
}

void SpnNetwork::require_valid(const char* operation) const {
  if (policy_ == ValidationPolicy::Strict && !is_valid())
    throw Error(ErrorCode::InvalidStructure,
                std::string(operation) + " requires a complete and decomposable network");
}

NetworkBuilder::NetworkBuilder(std::vector<VariableSpec> variables)
    : variables_(std::move(variables)), indicator_ids_(variables_.size()) {
  for (std::size_t v = 0; v < variables_.size(); ++v)
    indicator_ids_[v].assign(variables_[v].cardinality, std::numeric_limits<NodeId>::max());
}

NodeId NetworkBuilder::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId NetworkBuilder::indicator(VarId var, std::uint32_t value) {
  if (var >= variables_.size() || value >= variables_[var].cardinality)
    throw Error(ErrorCode::InvalidArgument, "indicator out of range");
  NodeId& slot = indicator_ids_[var][value];
  if (slot == std::numeric_limits<NodeId>::max()) slot = push(Node::indicator(var, value));
  return slot;
}

NodeId NetworkBuilder::constant() {
  if (!constant_) constant_ = push(Node::constant());
  return *constant_;
}

NodeId NetworkBuilder::product(std::vector<NodeId> children) { return push(Node::product(std::move(children))); }

NodeId NetworkBuilder::max(std::vector<NodeId> children) { return push(Node::max(std::move(children))); }

WeightSetId NetworkBuilder::add_weight_set(std::vector<double> weights) {
  weight_sets_.push_back(std::move(weights));
  return static_cast<WeightSetId>(weight_sets_.size() - 1);
}

NodeId NetworkBuilder::sum(std::vector<NodeId> children, std::vector<double> weights) {
  const WeightSetId set = add_weight_set(std::move(weights));
  return shared_sum(std::move(children), set);
}

NodeId NetworkBuilder::shared_sum(std::vector<NodeId> children, WeightSetId set) {
  return push(Node::sum(std::move(children), set));
}

SpnNetwork NetworkBuilder::build(NodeId root, ValidationPolicy policy) && {
  return build_network(std::move(variables_), std::move(nodes_), root, std::move(weight_sets_), policy);
}

// --- structural checks -----------------------------------------------------

std::vector<NodeId> check_completeness(const SpnNetwork& net) { return net.incomplete_sums(); }

std::vector<NodeId> check_decomposability(const SpnNetwork& net) { return net.non_decomposable_products(); }

std::vector<NodeId> check_consistency(const SpnNetwork& net) {
  // Bit (offset[var] + value) is set when [var = value] is a leaf below the node.
  std::vector<std::size_t> offset(net.num_variables() + 1, 0);
  for (std::size_t v = 0; v < net.num_variables(); ++v) offset[v + 1] = offset[v] + net.variables()[v].cardinality;
  const std::size_t words = (offset.back() + 63) / 64;
  std::vector<std::vector<std::uint64_t>> leaves(net.num_nodes(), std::vector<std::uint64_t>(words, 0));
  for (NodeId id : net.topological_order()) {
    if (net.kind(id) == NodeKind::Indicator) {
      const std::size_t bit = offset[net.var(id)] + net.value(id);
      leaves[id][bit / 64] |= std::uint64_t{1} << (bit % 64);
    } else {
      for (NodeId c : net.children(id))
        for (std::size_t w = 0; w < words; ++w) leaves[id][w] |= leaves[c][w];
    }
  }

  std::vector<NodeId> violations;
  for (NodeId id = 0; id < net.num_nodes(); ++id) {
    if (net.kind(id) != NodeKind::Product) continue;
    // var -> (children mentioning it, union of values)
    std::map<VarId, std::pair<std::size_t, std::vector<bool>>> seen;
    for (NodeId c : net.children(id)) {
      std::map<VarId, std::vector<bool>> here;
      for (std::size_t w = 0; w < words; ++w) {
        std::uint64_t bits = leaves[c][w];
        while (bits) {
          const std::size_t bit = w * 64 + static_cast<std::size_t>(std::countr_zero(bits));
          bits &= bits - 1;
          const auto it = std::upper_bound(offset.begin(), offset.end(), bit);
          const auto var = static_cast<VarId>(std::distance(offset.begin(), it) - 1);
          auto& vals = here[var];
          vals.resize(net.variables()[var].cardinality, false);
          vals[bit - offset[var]] = true;
        }
      }
      for (auto& [var, vals] : here) {
        auto& entry = seen[var];
        entry.first += 1;
        entry.second.resize(vals.size(), false);
        for (std::size_t a = 0; a < vals.size(); ++a) entry.second[a] = entry.second[a] || vals[a];
      }
    }
    for (const auto& [var, entry] : seen) {
      if (entry.first >= 2 && std::count(entry.second.begin(), entry.second.end(), true) >= 2) {
        violations.push_back(id);
        break;
      }
    }
  }
  return violations;
}

// --- evidence --------------------------------------------------------------

Evidence::Evidence(std::span<const VariableSpec> variables)
    : cardinality_(variables.size()),
      state_(variables.size(), State::Unobserved),
      value_(variables.size(), 0),
      soft_(variables.size()) {
  for (std::size_t v = 0; v < variables.size(); ++v) cardinality_[v] = variables[v].cardinality;
}

Evidence& Evidence::observe(VarId var, std::uint32_t value) {
  if (var >= num_variables() || value >= cardinality_[var])
    throw Error(ErrorCode::InvalidArgument, "observation out of range");
  state_[var] = State::Observed;
  value_[var] = value;
  soft_[var].clear();
  return *this;
}

Evidence& Evidence::unobserve(VarId var) {
  if (var >= num_variables()) throw Error(ErrorCode::InvalidArgument, "variable out of range");
  state_[var] = State::Unobserved;
  value_[var] = 0;
  soft_[var].clear();
  return *this;
}

Evidence& Evidence::set_soft(VarId var, std::vector<double> indicator_values) {
  if (var >= num_variables() || indicator_values.size() != cardinality_[var])
    throw Error(ErrorCode::InvalidArgument, "soft evidence has wrong length");
  for (double x : indicator_values)
    if (!std::isfinite(x) || x < 0.0) throw Error(ErrorCode::InvalidArgument, "soft evidence must be >= 0");
  state_[var] = State::Soft;
  value_[var] = 0;
  soft_[var] = std::move(indicator_values);
  return *this;
}

std::optional<std::uint32_t> Evidence::observed_value(VarId var) const {
  if (state_[var] == State::Observed) return value_[var];
  return std::nullopt;
}

double Evidence::indicator(VarId var, std::uint32_t value) const {
  switch (state_[var]) {
    case State::Unobserved: return 1.0;
    case State::Observed: return value == value_[var] ? 1.0 : 0.0;
    case State::Soft: return soft_[var][value];
  }
  return 1.0;
}

Evidence evidence_from_assignment(std::span<const VariableSpec> variables,
                                  std::span<const std::uint32_t> assignment) {
  if (assignment.size() != variables.size())
    throw Error(ErrorCode::DimensionMismatch, "assignment length differs from variable count");
  Evidence e(variables);
  for (std::size_t v = 0; v < assignment.size(); ++v) e.observe(static_cast<VarId>(v), assignment[v]);
  return e;
}

// --- inference -------------------------------------------------------------

namespace {

double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : kLogZero; }

std::vector<double> log_weights(const SpnNetwork& net) {
  std::vector<double> out;
  for (WeightSetId s = 0; s < net.num_weight_sets(); ++s)
    for (double w : net.weights(s)) out.push_back(safe_log(w));
  return out;
}

// Offsets of each weight set inside the flattened log-weight vector.
std::vector<std::size_t> weight_offsets(const SpnNetwork& net) {
  std::vector<std::size_t> out(net.num_weight_sets() + 1, 0);
  for (WeightSetId s = 0; s < net.num_weight_sets(); ++s) out[s + 1] = out[s] + net.weights(s).size();
  return out;
}

void check_dimensions(const SpnNetwork& net, const Evidence& evidence) {
  if (evidence.num_variables() != net.num_variables())
    throw Error(ErrorCode::DimensionMismatch, "evidence has " + std::to_string(evidence.num_variables()) +
                                                  " variables, network has " + std::to_string(net.num_variables()));
  for (std::size_t v = 0; v < net.num_variables(); ++v)
    if (evidence.cardinality(static_cast<VarId>(v)) != net.variables()[v].cardinality)
      throw Error(ErrorCode::DimensionMismatch, "cardinality mismatch on variable " + std::to_string(v));
}

// Shared upward pass; `maximize` switches sums to weighted maxima.
std::vector<double> upward(const SpnNetwork& net, const Evidence& evidence, bool maximize) {
  check_dimensions(net, evidence);
  const auto lw = log_weights(net);
  const auto off = weight_offsets(net);
  std::vector<double> val(net.num_nodes(), kLogZero);
  for (NodeId id : net.topological_order()) {
    const auto ch = net.children(id);
    switch (net.kind(id)) {
      case NodeKind::Indicator:
        val[id] = safe_log(evidence.indicator(net.var(id), net.value(id)));
        break;
      case NodeKind::Constant:
        val[id] = 0.0;
        break;
      case NodeKind::Product: {
        double acc = 0.0;
        for (NodeId c : ch) acc += val[c];
        val[id] = acc;
        break;
      }
      case NodeKind::Max: {
        double best = kLogZero;
        for (NodeId c : ch) best = std::max(best, val[c]);
        val[id] = best;
        break;
      }
      case NodeKind::Sum: {
        const double* w = lw.data() + off[net.weight_set(id)];
        double best = kLogZero;
        for (std::size_t j = 0; j < ch.size(); ++j) best = std::max(best, w[j] + val[ch[j]]);
        if (maximize || best == kLogZero) {
          val[id] = best;
          break;
        }
        double acc = 0.0;
        for (std::size_t j = 0; j < ch.size(); ++j) acc += std::exp(w[j] + val[ch[j]] - best);
        val[id] = best + std::log(acc);
        break;
      }
    }
  }
  return val;
}

}  // namespace

EvaluationResult evaluate(const SpnNetwork& net, const Evidence& evidence) {
  net.require_valid("evaluate");
  EvaluationResult r;
  r.log_values = upward(net, evidence, false);
  r.root_log_value = r.log_values[net.root()];
  return r;
}

void backward(const SpnNetwork& net, EvaluationResult& result) {
  const auto& val = result.log_values;
  if (val.size() != net.num_nodes())
    throw Error(ErrorCode::DimensionMismatch, "backward needs an upward pass of the same network");
  const auto lw = log_weights(net);
  const auto off = weight_offsets(net);
  auto& d = result.log_derivatives;
  d.assign(net.num_nodes(), kLogZero);
  d[net.root()] = 0.0;
  std::vector<double> prefix, suffix;
  const auto& order = net.topological_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeId k = *it;
    if (d[k] == kLogZero) continue;
    const auto ch = net.children(k);
    switch (net.kind(k)) {
      case NodeKind::Sum: {
        const double* w = lw.data() + off[net.weight_set(k)];
        for (std::size_t j = 0; j < ch.size(); ++j) d[ch[j]] = log_add(d[ch[j]], d[k] + w[j]);
        break;
      }
      case NodeKind::Product: {
        // Product of siblings via prefix/suffix sums, exact with zero siblings.
        const std::size_t m = ch.size();
        prefix.assign(m + 1, 0.0);
        suffix.assign(m + 1, 0.0);
        for (std::size_t j = 0; j < m; ++j) prefix[j + 1] = prefix[j] + val[ch[j]];
        for (std::size_t j = m; j-- > 0;) suffix[j] = suffix[j + 1] + val[ch[j]];
        for (std::size_t j = 0; j < m; ++j) d[ch[j]] = log_add(d[ch[j]], d[k] + prefix[j] + suffix[j + 1]);
        break;
      }
      case NodeKind::Max: {
        std::size_t best = 0;
        for (std::size_t j = 1; j < ch.size(); ++j)
          if (val[ch[j]] > val[ch[best]]) best = j;
        d[ch[best]] = log_add(d[ch[best]], d[k]);
        break;
      }
      case NodeKind::Indicator:
      case NodeKind::Constant:
        break;
    }
  }
}

EvaluationResult evaluate_with_derivatives(const SpnNetwork& net, const Evidence& evidence) {
  auto r = evaluate(net, evidence);
  backward(net, r);
  return r;
}

double log_value(const SpnNetwork& net, const Evidence& evidence) { return evaluate(net, evidence).root_log_value; }

double log_partition(const SpnNetwork& net) { return log_value(net, Evidence(net.variables())); }

namespace {

std::vector<double> normalize_log(const std::vector<double>& logs) {
  double total = kLogZero;
  for (double x : logs) total = log_add(total, x);
  if (total == kLogZero) throw Error(ErrorCode::ImpossibleEvidence, "evidence has zero probability");
  std::vector<double> out(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) out[i] = std::exp(logs[i] - total);
  return out;
}

}  // namespace

std::vector<double> marginal(const SpnNetwork& net, const Evidence& evidence, VarId var) {
  if (var >= net.num_variables()) throw Error(ErrorCode::InvalidArgument, "variable out of range");
  check_dimensions(net, evidence);
  if (evidence.is_observed(var))
    throw Error(ErrorCode::VariableObserved, "variable " + std::to_string(var) + " is observed");
  auto r = evaluate_with_derivatives(net, evidence);
  if (r.root_log_value == kLogZero) throw Error(ErrorCode::ImpossibleEvidence, "evidence has zero probability");
  // lambda * dS/dlambda summed over every indicator leaf of the variable.
  std::vector<double> mass(net.variables()[var].cardinality, kLogZero);
  for (NodeId id = 0; id < net.num_nodes(); ++id)
    if (net.kind(id) == NodeKind::Indicator && net.var(id) == var)
      mass[net.value(id)] = log_add(mass[net.value(id)], r.log_derivatives[id] + r.log_values[id]);
  return normalize_log(mass);
}

std::vector<double> hidden_marginal(const SpnNetwork& net, const Evidence& evidence, NodeId sum_node) {
  if (sum_node >= net.num_nodes() || net.kind(sum_node) != NodeKind::Sum)
    throw Error(ErrorCode::NotASumNode, "node " + std::to_string(sum_node));
  auto r = evaluate_with_derivatives(net, evidence);
  if (r.root_log_value == kLogZero) throw Error(ErrorCode::ImpossibleEvidence, "evidence has zero probability");
  const auto ch = net.children(sum_node);
  const auto w = net.weights(net.weight_set(sum_node));
  std::vector<double> terms(ch.size());
  for (std::size_t j = 0; j < ch.size(); ++j)
    terms[j] = safe_log(w[j]) + r.log_values[ch[j]] + r.log_derivatives[sum_node];
  return normalize_log(terms);
}

std::vector<double> max_pass(const SpnNetwork& net, const Evidence& evidence) {
  return upward(net, evidence, true);
}

namespace detail {

std::size_t argmax_child(const SpnNetwork& net, NodeId node, std::span<const double> max_values) {
  const auto ch = net.children(node);
  std::size_t best = 0;
  double best_val = kLogZero;
  const bool weighted = net.kind(node) == NodeKind::Sum;
  const auto w = weighted ? net.weights(net.weight_set(node)) : std::span<const double>{};
  for (std::size_t j = 0; j < ch.size(); ++j) {
    const double v = (weighted ? safe_log(w[j]) : 0.0) + max_values[ch[j]];
    if (v > best_val) {
      best_val = v;
      best = j;
    }
  }
  return best;
}

}  // namespace detail

MpeResult mpe(const SpnNetwork& net, const Evidence& evidence) {
  net.require_valid("mpe");
  const auto mv = max_pass(net, evidence);
  MpeResult result;
  result.log_value = mv[net.root()];
  if (result.log_value == kLogZero) throw Error(ErrorCode::ImpossibleEvidence, "evidence has zero probability");

  constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
  result.assignment.assign(net.num_variables(), kUnset);
  for (VarId v = 0; v < net.num_variables(); ++v)
    if (auto obs = evidence.observed_value(v)) result.assignment[v] = *obs;
  walk_max_subcircuit(
      net, mv, [](NodeId, std::size_t) {},
      [&](NodeId leaf) {
        auto& slot = result.assignment[net.var(leaf)];
        if (slot == kUnset) slot = net.value(leaf);
      });
  // Variables outside the selected circuit take their most supported value.
  for (VarId v = 0; v < net.num_variables(); ++v) {
    if (result.assignment[v] != kUnset) continue;
    std::uint32_t best = 0;
    for (std::uint32_t a = 1; a < net.variables()[v].cardinality; ++a)
      if (evidence.indicator(v, a) > evidence.indicator(v, best)) best = a;
    result.assignment[v] = best;
  }
  return result;
}

void normalize_weights(SpnNetwork& net) {
  for (WeightSetId s = 0; s < net.num_weight_sets(); ++s) {
    auto w = net.mutable_weights(s);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x = total > 0.0 ? x / total : 1.0 / static_cast<double>(w.size());
  }
}

}  // namespace topospn
