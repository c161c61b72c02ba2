#pragma once

// Experiment driver behind the topospn executable: dataset generation,
// cross-validated training, map completion, novelty scores and partition
// coverage, all written as CSV/JSON under one output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "topospn/learning.hpp"
#include "topospn/placegrid.hpp"
#include "topospn/structure.hpp"
#include "topospn/templates.hpp"
#include "topospn/topomap.hpp"

namespace topospn {

enum class ExperimentKind : std::uint8_t { Grid, Template };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Grid;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";

  // Maps come from a manifest written by `generate`, or are generated in
  // memory with seeds derive_seed(seed, i).
  std::optional<std::filesystem::path> manifest;
  std::size_t map_count = 40;
  GeneratorConfig generator;

  // Map i belongs to fold i % folds; each fold validates on its own maps and
  // trains on the rest.
  std::size_t folds = 4;

  DecompConfig structure;
  double init_jitter = 0.5;
  TrainConfig train;
  GridConfig grid;

  TemplateHierarchy hierarchy{TemplateKind::ThreeChain, TemplateKind::Pair};
  std::size_t sample_attempts = 10;  // partitions per training map
  std::size_t instance_attempts = 10;

  OcclusionMode occlusion = RandomOcclusion{0.2};
  std::vector<std::pair<Category, Category>> swaps;

  TemplateKind partition_template = TemplateKind::ThreeChain;
  std::size_t partition_attempts = 10;

  // Defaults depend on the experiment kind; relative paths resolve against
  // base_dir. Unknown or ill-typed fields are usage errors.
  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  void validate() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Each command writes its files atomically under config.output_dir.
void cmd_generate(const ExperimentConfig& config);
void cmd_train(const ExperimentConfig& config);
void cmd_complete(const ExperimentConfig& config);  // needs the models written by cmd_train
void cmd_novelty(const ExperimentConfig& config);   // needs the models written by cmd_train
void cmd_partition_stats(const ExperimentConfig& config);

// Exit codes: 0 success, 1 usage error, 2 data or invariant error, 3
// numerical failure.
int run_cli(int argc, char** argv);

}  // namespace topospn
