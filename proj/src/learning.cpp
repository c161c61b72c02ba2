#include "topospn/learning.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <sstream>

#include "topospn/random.hpp"

namespace topospn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (!(smoothing >= 0.0)) throw Error(ErrorCode::InvalidArgument, "smoothing must be >= 0");
}

namespace {

void require_data(std::span<const Evidence> dataset) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no samples");
}

std::vector<std::vector<double>> zeros_like_weights(const SpnNetwork& net) {
  std::vector<std::vector<double>> out(net.num_weight_sets());
  for (WeightSetId s = 0; s < net.num_weight_sets(); ++s) out[s].assign(net.weights(s).size(), 0.0);
  return out;
}

// Adds scale * exp(d_i + S_j - offset) to the gradient slot of every sum edge.
void accumulate_edge_terms(const SpnNetwork& net, const EvaluationResult& r, double offset, double scale,
                           std::vector<std::vector<double>>& grad) {
  for (NodeId id = 0; id < net.num_nodes(); ++id) {
    if (net.kind(id) != NodeKind::Sum) continue;
    const double d = r.log_derivatives[id];
    if (d == kLogZero) continue;
    auto& g = grad[net.weight_set(id)];
    const auto ch = net.children(id);
    for (std::size_t j = 0; j < ch.size(); ++j) g[j] += scale * std::exp(d + r.log_values[ch[j]] - offset);
  }
}

void normalize_set(std::span<double> w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x = total > 0.0 ? x / total : 1.0 / static_cast<double>(w.size());
}

}  // namespace

double log_likelihood(const SpnNetwork& net, std::span<const Evidence> dataset) {
  require_data(dataset);
  const double log_z = log_partition(net);
  double total = 0.0;
  for (const auto& sample : dataset) total += log_value(net, sample) - log_z;
  return total;
}

double mean_log_likelihood(const SpnNetwork& net, std::span<const Evidence> dataset) {
  return log_likelihood(net, dataset) / static_cast<double>(dataset.size());
}

std::vector<std::vector<double>> log_likelihood_gradient(const SpnNetwork& net, std::span<const Evidence> dataset) {
  require_data(dataset);
  auto grad = zeros_like_weights(net);
  for (const auto& sample : dataset) {
    const auto r = evaluate_with_derivatives(net, sample);
    if (r.root_log_value == kLogZero) throw Error(ErrorCode::NonFiniteGradient, "sample has zero probability");
    accumulate_edge_terms(net, r, r.root_log_value, 1.0, grad);
  }
  const auto z = evaluate_with_derivatives(net, Evidence(net.variables()));
  accumulate_edge_terms(net, z, z.root_log_value, -static_cast<double>(dataset.size()), grad);
  for (const auto& g : grad)
    for (double x : g)
      if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteGradient, "gradient is not finite");
  return grad;
}

double gradient_epoch(SpnNetwork& net, std::span<const Evidence> dataset, const TrainConfig& config) {
  config.validate();
  const auto grad = log_likelihood_gradient(net, dataset);
  const double step = config.learning_rate / static_cast<double>(dataset.size());
  for (WeightSetId s = 0; s < net.num_weight_sets(); ++s) {
    auto w = net.mutable_weights(s);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = std::max(0.0, w[j] + step * grad[s][j]);
    if (config.renormalize_each_update) normalize_set(w);
  }
  return mean_log_likelihood(net, dataset);
}

std::vector<std::vector<double>> hard_em_counts(const SpnNetwork& net, const Evidence& sample) {
  net.require_valid("hard EM");
  auto counts = zeros_like_weights(net);
  const auto mv = max_pass(net, sample);
  if (mv[net.root()] == kLogZero) throw Error(ErrorCode::ImpossibleEvidence, "sample has zero probability");
  walk_max_subcircuit(
      net, mv, [&](NodeId sum, std::size_t child) { counts[net.weight_set(sum)][child] += 1.0; }, [](NodeId) {});
  return counts;
}

double hard_em_epoch(SpnNetwork& net, std::span<const Evidence> dataset, const TrainConfig& config) {
  config.validate();
  require_data(dataset);
  net.require_valid("hard EM");
  auto counts = zeros_like_weights(net);
  for (const auto& sample : dataset) {
    const auto mv = max_pass(net, sample);
    if (mv[net.root()] == kLogZero) throw Error(ErrorCode::ImpossibleEvidence, "sample has zero probability");
    walk_max_subcircuit(
        net, mv, [&](NodeId sum, std::size_t child) { counts[net.weight_set(sum)][child] += 1.0; }, [](NodeId) {});
  }
  for (WeightSetId s = 0; s < net.num_weight_sets(); ++s) {
    const auto& c = counts[s];
    const double total = std::accumulate(c.begin(), c.end(), 0.0) + config.smoothing * static_cast<double>(c.size());
    if (total <= 0.0) continue;
    auto w = net.mutable_weights(s);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = (c[j] + config.smoothing) / total;
  }
  return mean_log_likelihood(net, dataset);
}

OnlineHardEm::OnlineHardEm(const SpnNetwork& net, std::size_t num_samples)
    : counts_(zeros_like_weights(net)), paths_(num_samples) {}

double OnlineHardEm::epoch(SpnNetwork& net, std::span<const Evidence> dataset, const TrainConfig& config,
                           std::uint64_t epoch_seed) {
  config.validate();
  require_data(dataset);
  net.require_valid("hard EM");
  if (dataset.size() != paths_.size()) throw Error(ErrorCode::DimensionMismatch, "dataset size changed");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(epoch_seed);
  rng.shuffle(std::span<std::size_t>(order));

  const std::size_t batch = config.batch_size == 0 ? dataset.size() : config.batch_size;
  std::vector<bool> touched(net.num_weight_sets(), false);
  for (std::size_t begin = 0; begin < order.size(); begin += batch) {
    const std::size_t end = std::min(order.size(), begin + batch);
    // E-step for the whole batch under the current weights.
    std::vector<Path> fresh;
    for (std::size_t k = begin; k < end; ++k) {
      const auto mv = max_pass(net, dataset[order[k]]);
      if (mv[net.root()] == kLogZero) throw Error(ErrorCode::ImpossibleEvidence, "sample has zero probability");
      Path path;
      walk_max_subcircuit(
          net, mv, [&](NodeId sum, std::size_t child) { path.emplace_back(net.weight_set(sum), child); },
          [](NodeId) {});
      fresh.push_back(std::move(path));
    }
    for (std::size_t k = begin; k < end; ++k) {
      auto& old = paths_[order[k]];
      for (auto [set, child] : old) {
        counts_[set][child] -= 1.0;
        touched[set] = true;
      }
      old = std::move(fresh[k - begin]);
      for (auto [set, child] : old) {
        counts_[set][child] += 1.0;
        touched[set] = true;
      }
    }
    for (WeightSetId set = 0; set < net.num_weight_sets(); ++set) {
      if (!touched[set]) continue;
      touched[set] = false;
      const auto& c = counts_[set];
      const double total =
          std::accumulate(c.begin(), c.end(), 0.0) + config.smoothing * static_cast<double>(c.size());
      if (total <= 0.0) continue;
      auto w = net.mutable_weights(set);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = (c[j] + config.smoothing) / total;
    }
  }
  return mean_log_likelihood(net, dataset);
}

LikelihoodCurve train(SpnNetwork& net, std::span<const Evidence> dataset, const TrainConfig& config,
                      std::span<const Evidence> validation) {
  config.validate();
  require_data(dataset);
  LikelihoodCurve curve;
  std::optional<OnlineHardEm> online;
  if (config.method == TrainMethod::HardEM && config.batch_size > 0) online.emplace(net, dataset.size());
  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    double ll;
    if (online) {
      ll = online->epoch(net, dataset, config, derive_seed(config.seed, epoch));
    } else if (config.method == TrainMethod::HardEM) {
      ll = hard_em_epoch(net, dataset, config);
    } else if (config.batch_size == 0 || config.batch_size >= dataset.size()) {
      ll = gradient_epoch(net, dataset, config);
    } else {
      for (std::size_t begin = 0; begin < dataset.size(); begin += config.batch_size)
        gradient_epoch(net, dataset.subspan(begin, std::min(config.batch_size, dataset.size() - begin)), config);
      ll = mean_log_likelihood(net, dataset);
    }
    curve.train.push_back(ll);
    if (!validation.empty()) curve.validation.push_back(mean_log_likelihood(net, validation));
  }
  return curve;
}

void initialize_weights(SpnNetwork& net, std::uint64_t seed, double jitter) {
  Rng rng(seed);
  for (WeightSetId s = 0; s < net.num_weight_sets(); ++s) {
    auto w = net.mutable_weights(s);
    for (double& x : w) x = 1.0 + rng.uniform(-jitter, jitter);
    normalize_set(w);
  }
}

SpnNetwork prune_zero_weights(const SpnNetwork& net, double threshold) {
  // Surviving edge indices per weight set.
  std::vector<std::vector<std::size_t>> keep(net.num_weight_sets());
  for (WeightSetId s = 0; s < net.num_weight_sets(); ++s) {
    const auto w = net.weights(s);
    for (std::size_t j = 0; j < w.size(); ++j)
      if (w[j] > threshold) keep[s].push_back(j);
    if (keep[s].empty() && !net.share_groups()[s].empty())
      throw Error(ErrorCode::WouldOrphanRoot,
                  "every child of sum node " + std::to_string(net.share_groups()[s].front()) + " is below the threshold");
  }

  auto nodes = net.nodes();
  for (auto& n : nodes) {
    if (n.kind != NodeKind::Sum) continue;
    std::vector<NodeId> kept;
    for (std::size_t j : keep[n.weight_set]) kept.push_back(n.children[j]);
    n.children = std::move(kept);
  }

  // Keep what is reachable from the root, in original id order.
  std::vector<bool> reachable(nodes.size(), false);
  std::vector<NodeId> stack{net.root()};
  reachable[net.root()] = true;
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    for (NodeId c : nodes[n].children)
      if (!reachable[c]) {
        reachable[c] = true;
        stack.push_back(c);
      }
  }
  std::vector<NodeId> new_id(nodes.size(), 0);
  std::vector<Node> out_nodes;
  for (NodeId id = 0; id < nodes.size(); ++id)
    if (reachable[id]) {
      new_id[id] = static_cast<NodeId>(out_nodes.size());
      out_nodes.push_back(nodes[id]);
    }

  std::vector<std::int64_t> new_set(net.num_weight_sets(), -1);
  std::vector<std::vector<double>> out_sets;
  for (auto& n : out_nodes) {
    for (auto& c : n.children) c = new_id[c];
    if (n.kind != NodeKind::Sum) continue;
    if (new_set[n.weight_set] < 0) {
      new_set[n.weight_set] = static_cast<std::int64_t>(out_sets.size());
      const auto w = net.weights(n.weight_set);
      auto& set = out_sets.emplace_back();
      for (std::size_t j : keep[n.weight_set]) set.push_back(w[j]);
    }
    n.weight_set = static_cast<WeightSetId>(new_set[n.weight_set]);
  }
  return build_network(net.variables(), std::move(out_nodes), new_id[net.root()], std::move(out_sets), net.policy());
}

std::string curve_to_csv(const LikelihoodCurve& curve) {
  std::ostringstream out;
  const bool with_val = !curve.validation.empty();
  out << "epoch,mean_log_likelihood" << (with_val ? ",val_log_likelihood" : "") << '\n';
  char buf[64];
  for (std::size_t e = 0; e < curve.train.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", curve.train[e]);
    out << e + 1 << ',' << buf;
    if (with_val) {
      std::snprintf(buf, sizeof buf, "%.17g", curve.validation[e]);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace topospn
