#pragma once

// Weight learning: gradient ascent on the log-likelihood via backpropagation,
// and hard EM with MPE-selected counts. Weights tied through a shared weight
// set are updated once from the pooled statistics of every node using it.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "topospn/spn.hpp"

namespace topospn {

enum class TrainMethod : std::uint8_t { Gradient, HardEM };

struct TrainConfig {
  TrainMethod method = TrainMethod::HardEM;
  double learning_rate = 0.05;
  std::uint32_t epochs = 50;
  double smoothing = 1.0;  // Laplace pseudo-count for hard EM
  // 0 = whole dataset. For hard EM a positive size selects OnlineHardEm.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  bool renormalize_each_update = true;

  void validate() const;
};

struct LikelihoodCurve {
  std::vector<double> train;       // mean log-likelihood after each epoch
  std::vector<double> validation;  // empty when no validation set was given
};

// Sum over samples of log(S(x_p) / Z) with Z = S(1...1).
double log_likelihood(const SpnNetwork& net, std::span<const Evidence> dataset);
double mean_log_likelihood(const SpnNetwork& net, std::span<const Evidence> dataset);

// Gradient of log_likelihood with respect to every weight, indexed like
// SpnNetwork::weights(); contributions of all nodes sharing a set are summed.
std::vector<std::vector<double>> log_likelihood_gradient(const SpnNetwork& net, std::span<const Evidence> dataset);

// One full-batch step w += lr * gradient / n, clipped at zero and (optionally)
// renormalized. Returns the mean log-likelihood after the update.
double gradient_epoch(SpnNetwork& net, std::span<const Evidence> dataset, const TrainConfig& config);

// Winning-child counts for one sample: along the max-circuit selected by MPE
// each visited sum node contributes one count to its arg-max child.
std::vector<std::vector<double>> hard_em_counts(const SpnNetwork& net, const Evidence& sample);

// E-step over the dataset, then w = (count + smoothing) / sum. Weight sets
// that were never visited keep their weights when smoothing is zero.
// Returns the mean log-likelihood after the update.
double hard_em_epoch(SpnNetwork& net, std::span<const Evidence> dataset, const TrainConfig& config);

// Incremental hard EM. The count table always holds the current max-circuit
// of every sample; each mini-batch (visited in a seeded random order) swaps
// its samples' previous circuits for new ones and re-estimates the touched
// weight sets. Early samples can claim distinct circuits before later ones
// arrive, which full-batch hard EM from near-uniform weights cannot do.
class OnlineHardEm {
 public:
  OnlineHardEm(const SpnNetwork& net, std::size_t num_samples);
  double epoch(SpnNetwork& net, std::span<const Evidence> dataset, const TrainConfig& config,
               std::uint64_t epoch_seed);

 private:
  using Path = std::vector<std::pair<WeightSetId, std::size_t>>;
  std::vector<std::vector<double>> counts_;
  std::vector<Path> paths_;
};

LikelihoodCurve train(SpnNetwork& net, std::span<const Evidence> dataset, const TrainConfig& config,
                      std::span<const Evidence> validation = {});

// Uniform weights scaled by independent factors in [1 - jitter, 1 + jitter],
// then normalized.
void initialize_weights(SpnNetwork& net, std::uint64_t seed, double jitter = 0.01);

// Removes sum edges whose weight is <= threshold together with nodes that
// become unreachable. Remaining weights are not renormalized.
SpnNetwork prune_zero_weights(const SpnNetwork& net, double threshold);

// "epoch,mean_log_likelihood[,val_log_likelihood]" with 1-based epochs.
std::string curve_to_csv(const LikelihoodCurve& curve);

}  // namespace topospn
