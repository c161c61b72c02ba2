#pragma once

// Random-decomposition generator for dense, complete and decomposable SPNs.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "topospn/spn.hpp"

namespace topospn {

struct DecompConfig {
  std::uint32_t num_decompositions_per_level = 2;
  std::uint32_t num_subsets_per_decomposition = 2;
  // Sums per non-root region. With 1 the generated network is fully factorized.
  std::uint32_t num_mixtures = 1;
  // Sums over the indicators of each variable.
  std::uint32_t max_singleton_mixtures = 1;
  std::uint64_t seed = 0;
  bool share_weights_per_level = true;

  void validate() const;
};

// Recursively mixes random balanced partitions of the scope down to
// singletons. Regions with equal scopes are built once and reused. All
// weights start uniform; see initialize_weights() in learning.hpp.
SpnNetwork generate_dense(std::span<const VariableSpec> variables, const DecompConfig& config);

// Canonical text listing the scopes of sum nodes grouped by their depth
// (number of sums above them on the shortest path from the root).
std::string scope_signature(const SpnNetwork& net);

std::uint64_t fnv1a64(std::string_view text);

}  // namespace topospn
