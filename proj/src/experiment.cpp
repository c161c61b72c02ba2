#include "topospn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "topospn/error.hpp"
#include "topospn/random.hpp"
#include "topospn/spn_io.hpp"

namespace topospn {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Thrown for malformed configs and command lines; maps to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Independent seed streams per purpose.
enum Stream : std::uint64_t { kMaps = 1, kStructure, kInit, kTrain, kOcclusion, kInstance, kSamples, kPartition };

std::uint64_t stream_seed(std::uint64_t seed, Stream s, std::uint64_t index) {
  return derive_seed(derive_seed(seed, s), index);
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

// ---- config parsing ----

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw UsageError("config: unknown field '" + where + "." + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config: field '" + where + "." + key + "' has the wrong type");
  }
}

template <typename F>
auto named(const std::string& where, F&& parse) {
  try {
    return parse();
  } catch (const Error& e) {
    throw UsageError("config: " + where + ": " + e.what());
  }
}

GeneratorConfig parse_generator(const json& g, GeneratorConfig out) {
  const std::string w = "data.generator";
  check_keys(g, w,
             {"node_spacing", "target_node_count", "node_count_spread", "min_corridors", "max_corridors",
              "corridor_fraction", "small_office_ratio", "large_office_ratio", "unknown_room_ratio",
              "diagonal_edge_probability", "position_jitter", "width_m", "height_m", "rotation"});
  read(g, "node_spacing", out.node_spacing, w);
  read(g, "target_node_count", out.target_node_count, w);
  read(g, "node_count_spread", out.node_count_spread, w);
  read(g, "min_corridors", out.min_corridors, w);
  read(g, "max_corridors", out.max_corridors, w);
  read(g, "corridor_fraction", out.corridor_fraction, w);
  read(g, "small_office_ratio", out.small_office_ratio, w);
  read(g, "large_office_ratio", out.large_office_ratio, w);
  read(g, "unknown_room_ratio", out.unknown_room_ratio, w);
  read(g, "diagonal_edge_probability", out.diagonal_edge_probability, w);
  read(g, "position_jitter", out.position_jitter, w);
  read(g, "width_m", out.width_m, w);
  read(g, "height_m", out.height_m, w);
  read(g, "rotation", out.rotation, w);
  return out;
}

json generator_to_json(const GeneratorConfig& g) {
  return {{"node_spacing", g.node_spacing},
          {"target_node_count", g.target_node_count},
          {"node_count_spread", g.node_count_spread},
          {"min_corridors", g.min_corridors},
          {"max_corridors", g.max_corridors},
          {"corridor_fraction", g.corridor_fraction},
          {"small_office_ratio", g.small_office_ratio},
          {"large_office_ratio", g.large_office_ratio},
          {"unknown_room_ratio", g.unknown_room_ratio},
          {"diagonal_edge_probability", g.diagonal_edge_probability},
          {"position_jitter", g.position_jitter},
          {"width_m", g.width_m},
          {"height_m", g.height_m},
          {"rotation", g.rotation}};
}

Category parse_category(const std::string& name) {
  try {
    return category_from_short_label(name);
  } catch (const Error&) {
    return category_from_string(name);
  }
}

OcclusionMode parse_occlusion(const json& o) {
  const std::string w = "occlusion";
  if (!o.is_object() || !o.contains("mode")) throw UsageError("config: 'occlusion.mode' is required");
  std::string mode;
  read(o, "mode", mode, w);
  if (mode == "random") {
    check_keys(o, w, {"mode", "fraction"});
    RandomOcclusion r{0.2};
    read(o, "fraction", r.fraction, w);
    if (!(r.fraction >= 0.0 && r.fraction <= 1.0)) throw UsageError("config: occlusion.fraction must be in [0, 1]");
    return r;
  }
  if (mode == "region") {
    check_keys(o, w, {"mode", "x_min", "y_min", "x_max", "y_max"});
    RegionOcclusion r{0.0, 0.0, 0.0, 0.0};
    read(o, "x_min", r.x_min, w);
    read(o, "y_min", r.y_min, w);
    read(o, "x_max", r.x_max, w);
    read(o, "y_max", r.y_max, w);
    return r;
  }
  if (mode == "full") {
    check_keys(o, w, {"mode"});
    return FullOcclusion{};
  }
  throw UsageError("config: occlusion.mode must be random, region or full");
}

// ---- datasets ----

struct Dataset {
  std::vector<TopologicalMap> maps;
  std::vector<std::string> names;  // file stems
};

std::string map_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "map_%03zu", i);
  return buf;
}

std::uint64_t map_seed(const ExperimentConfig& c, std::size_t i) { return stream_seed(c.seed, kMaps, i); }

Dataset load_dataset(const ExperimentConfig& c) {
  Dataset d;
  if (!c.manifest) {
    for (std::size_t i = 0; i < c.map_count; ++i) {
      GeneratorConfig g = c.generator;
      g.seed = map_seed(c, i);
      d.maps.push_back(synthesize(g));
      d.names.push_back(map_name(i));
    }
    return d;
  }
  std::ifstream in(*c.manifest);
  if (!in) throw Error(ErrorCode::IoError, "cannot read manifest " + c.manifest->string());
  json doc;
  try {
    doc = json::parse(in);
    for (const auto& entry : doc.at("maps")) {
      const fs::path file = c.manifest->parent_path() / entry.at("file").get<std::string>();
      d.maps.push_back(load_map(file));
      d.names.push_back(file.stem().string());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, c.manifest->string() + ": " + e.what());
  }
  if (d.maps.size() < c.folds)
    throw Error(ErrorCode::InvalidArgument, "manifest lists fewer maps than folds");
  return d;
}

struct Fold {
  std::vector<std::size_t> train, validation;
};

Fold make_fold(std::size_t n, std::size_t folds, std::size_t f) {
  Fold out;
  for (std::size_t i = 0; i < n; ++i) (i % folds == f ? out.validation : out.train).push_back(i);
  return out;
}

// Runs fn(f) for every fold concurrently and returns the results in fold order.
template <typename F>
auto for_each_fold(std::size_t folds, F&& fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<std::future<R>> jobs;
  for (std::size_t f = 0; f < folds; ++f) jobs.push_back(std::async(std::launch::async, fn, f));
  std::vector<R> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

fs::path model_path(const ExperimentConfig& c, std::size_t f) {
  return c.output_dir / "models" / ("fold_" + std::to_string(f) + ".json");
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string() + " (run `train` first)");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

// ---- models ----

std::vector<Evidence> grid_evidence(const ExperimentConfig& c, const Dataset& d, const std::vector<std::size_t>& idx,
                                    std::optional<std::pair<Category, Category>> swap = std::nullopt) {
  std::vector<Evidence> out;
  for (auto i : idx) {
    const auto& m = d.maps[i];
    out.push_back(grid_to_evidence(project(swap ? swap_categories(m, swap->first, swap->second) : m, c.grid),
                                   c.grid.num_cells()));
  }
  return out;
}

TemplateTrainingConfig template_training(const ExperimentConfig& c) {
  return {c.structure, c.train, c.init_jitter};
}

json hierarchy_json(const TemplateHierarchy& h) {
  json out = json::array();
  for (auto k : h) out.push_back(std::string(to_string(k)));
  return out;
}

json library_to_json(const ExperimentConfig& c, const TemplateLibrary& lib) {
  json templates = json::object();
  for (const auto& [key, net] : lib) templates[key] = network_to_json(net);
  return {{"hierarchy", hierarchy_json(c.hierarchy)}, {"templates", std::move(templates)}};
}

TemplateLibrary library_from_json(const ExperimentConfig& c, const json& doc, const fs::path& path) {
  try {
    if (doc.at("hierarchy") != hierarchy_json(c.hierarchy))
      throw Error(ErrorCode::InvalidArgument, path.string() + " was trained for another template hierarchy");
    TemplateLibrary lib;
    for (const auto& [key, net] : doc.at("templates").items()) lib.emplace(key, network_from_json(net));
    return lib;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

SpnNetwork load_grid_model(const ExperimentConfig& c, std::size_t f) {
  const auto path = model_path(c, f);
  const auto doc = read_json(path);
  try {
    auto net = network_from_json(doc);
    if (net.num_variables() != c.grid.num_cells())
      throw Error(ErrorCode::DimensionMismatch, path.string() + " does not match the grid size");
    return net;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

double instance_log_likelihood(const ExperimentConfig& c, const TemplateLibrary& lib, const TopologicalMap& map,
                               std::uint64_t seed) {
  const auto inst = build_instance_spn(map, c.hierarchy, {c.instance_attempts, seed}, lib);
  const std::vector<Evidence> e{map_to_evidence(map)};
  return mean_log_likelihood(inst.net, e);
}

double mean_instance_ll(const ExperimentConfig& c, const TemplateLibrary& lib, const Dataset& d,
                        const std::vector<std::size_t>& idx,
                        std::optional<std::pair<Category, Category>> swap = std::nullopt) {
  double sum = 0.0;
  for (auto i : idx) {
    const auto& m = d.maps[i];
    sum += instance_log_likelihood(c, lib, swap ? swap_categories(m, swap->first, swap->second) : m,
                                   stream_seed(c.seed, kInstance, i));
  }
  return idx.empty() ? 0.0 : sum / static_cast<double>(idx.size());
}

std::string swap_name(const std::pair<Category, Category>& s) {
  return std::string(short_label(s.first)) + "-" + std::string(short_label(s.second));
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

// ---- config ----

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base_dir) {
  check_keys(doc, "config",
             {"experiment", "seed", "output_dir", "data", "folds", "structure", "train", "grid", "template",
              "occlusion", "novelty", "partition"});
  ExperimentConfig c;
  std::string kind = "grid";
  read(doc, "experiment", kind, "config");
  if (kind == "grid") {
    c.kind = ExperimentKind::Grid;
    c.structure = DecompConfig{2, 2, 2, 2, 0, true};
    c.init_jitter = 0.5;
    c.train = TrainConfig{TrainMethod::HardEM, 0.05, 30, 0.1, 0, 0, true};
  } else if (kind == "template") {
    c.kind = ExperimentKind::Template;
    const TemplateTrainingConfig t;
    c.structure = t.structure;
    c.init_jitter = t.init_jitter;
    c.train = t.train;
  } else {
    throw UsageError("config: experiment must be grid or template");
  }
  c.swaps = {{Category::Doorway, Category::Corridor},
             {Category::SmallOffice, Category::Corridor},
             {Category::Doorway, Category::SmallOffice},
             {Category::SmallOffice, Category::LargeOffice}};
  read(doc, "seed", c.seed, "config");
  std::string out = c.output_dir.string();
  read(doc, "output_dir", out, "config");
  c.output_dir = base_dir / out;
  read(doc, "folds", c.folds, "config");

  if (doc.contains("data")) {
    const auto& d = doc.at("data");
    check_keys(d, "data", {"manifest", "count", "generator"});
    if (d.contains("manifest")) {
      std::string m;
      read(d, "manifest", m, "data");
      c.manifest = base_dir / m;
    }
    read(d, "count", c.map_count, "data");
    if (d.contains("generator")) c.generator = parse_generator(d.at("generator"), c.generator);
  }
  if (doc.contains("structure")) {
    const auto& s = doc.at("structure");
    const std::string w = "structure";
    check_keys(s, w, {"decompositions", "subsets", "mixtures", "singleton_mixtures", "share_weights", "init_jitter"});
    read(s, "decompositions", c.structure.num_decompositions_per_level, w);
    read(s, "subsets", c.structure.num_subsets_per_decomposition, w);
    read(s, "mixtures", c.structure.num_mixtures, w);
    read(s, "singleton_mixtures", c.structure.max_singleton_mixtures, w);
    read(s, "share_weights", c.structure.share_weights_per_level, w);
    read(s, "init_jitter", c.init_jitter, w);
  }
  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    const std::string w = "train";
    check_keys(t, w, {"method", "learning_rate", "epochs", "smoothing", "batch_size", "renormalize"});
    if (t.contains("method")) {
      std::string m;
      read(t, "method", m, w);
      if (m == "hard_em") c.train.method = TrainMethod::HardEM;
      else if (m == "gradient") c.train.method = TrainMethod::Gradient;
      else throw UsageError("config: train.method must be hard_em or gradient");
    }
    read(t, "learning_rate", c.train.learning_rate, w);
    read(t, "epochs", c.train.epochs, w);
    read(t, "smoothing", c.train.smoothing, w);
    read(t, "batch_size", c.train.batch_size, w);
    read(t, "renormalize", c.train.renormalize_each_update, w);
  }
  if (doc.contains("grid")) {
    const auto& g = doc.at("grid");
    const std::string w = "grid";
    check_keys(g, w, {"rows", "cols", "resolution", "collision_rule"});
    read(g, "rows", c.grid.rows, w);
    read(g, "cols", c.grid.cols, w);
    read(g, "resolution", c.grid.resolution, w);
    if (g.contains("collision_rule")) {
      std::string r;
      read(g, "collision_rule", r, w);
      if (r == "highest_score") c.grid.collision_rule = CollisionRule::HighestScore;
      else if (r == "deterministic") c.grid.collision_rule = CollisionRule::Deterministic;
      else throw UsageError("config: grid.collision_rule must be highest_score or deterministic");
    }
  }
  if (doc.contains("template")) {
    const auto& t = doc.at("template");
    const std::string w = "template";
    check_keys(t, w, {"hierarchy", "sample_attempts", "instance_attempts"});
    if (t.contains("hierarchy")) {
      std::vector<std::string> names;
      read(t, "hierarchy", names, w);
      c.hierarchy.clear();
      for (const auto& n : names) c.hierarchy.push_back(named(w, [&] { return template_kind_from_string(n); }));
    }
    read(t, "sample_attempts", c.sample_attempts, w);
    read(t, "instance_attempts", c.instance_attempts, w);
  }
  if (doc.contains("occlusion")) c.occlusion = parse_occlusion(doc.at("occlusion"));
  if (doc.contains("novelty")) {
    const auto& n = doc.at("novelty");
    check_keys(n, "novelty", {"swaps"});
    std::vector<std::vector<std::string>> pairs;
    read(n, "swaps", pairs, "novelty");
    c.swaps.clear();
    for (const auto& p : pairs) {
      if (p.size() != 2) throw UsageError("config: novelty.swaps entries must be pairs");
      c.swaps.emplace_back(named("novelty.swaps", [&] { return parse_category(p[0]); }),
                           named("novelty.swaps", [&] { return parse_category(p[1]); }));
    }
  }
  if (doc.contains("partition")) {
    const auto& p = doc.at("partition");
    check_keys(p, "partition", {"template", "attempts"});
    if (p.contains("template")) {
      std::string t;
      read(p, "template", t, "partition");
      c.partition_template = named("partition.template", [&] { return template_kind_from_string(t); });
    }
    read(p, "attempts", c.partition_attempts, "partition");
  }
  return c;
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw UsageError("config: " + msg);
  };
  check(folds >= 2, "folds must be at least 2");
  check(manifest || map_count >= folds, "data.count must be at least folds");
  check(!hierarchy.empty(), "template.hierarchy must not be empty");
  check(sample_attempts >= 1 && instance_attempts >= 1, "template attempts must be positive");
  check(partition_attempts >= 1, "partition.attempts must be positive");
  check(init_jitter >= 0.0 && init_jitter < 1.0, "structure.init_jitter must be in [0, 1)");
  for (const auto& [a, b] : swaps) check(a != b && a != Category::Missing && b != Category::Missing,
                                         "novelty.swaps must pair two different labels");
  named("generator", [&] { generator.validate(); return 0; });
  named("structure", [&] { structure.validate(); return 0; });
  named("train", [&] { train.validate(); return 0; });
  named("grid", [&] { grid.validate(); return 0; });
  if (manifest && !fs::exists(*manifest)) throw Error(ErrorCode::IoError, "manifest " + manifest->string() + " not found");
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(doc, path.parent_path());
}

// ---- commands ----

void cmd_generate(const ExperimentConfig& c) {
  json maps = json::array();
  double nodes = 0.0, edges = 0.0;
  for (std::size_t i = 0; i < c.map_count; ++i) {
    GeneratorConfig g = c.generator;
    g.seed = map_seed(c, i);
    const auto map = synthesize(g);
    const std::string file = "maps/" + map_name(i) + ".json";
    write_text(c.output_dir / file, map_to_json(map).dump(1) + "\n");
    maps.push_back({{"file", file}, {"seed", g.seed}, {"nodes", map.size()}, {"edges", map.edges().size()}});
    nodes += static_cast<double>(map.size());
    edges += static_cast<double>(map.edges().size());
  }
  const double n = static_cast<double>(std::max<std::size_t>(c.map_count, 1));
  const json manifest{{"seed", c.seed},
                      {"count", c.map_count},
                      {"generator", generator_to_json(c.generator)},
                      {"mean_nodes", nodes / n},
                      {"mean_edges", edges / n},
                      {"maps", std::move(maps)}};
  write_text(c.output_dir / "manifest.json", manifest.dump(1) + "\n");
}

void cmd_train(const ExperimentConfig& c) {
  const auto data = load_dataset(c);
  struct Result {
    double train_ll, val_ll;
  };
  const auto results = for_each_fold(c.folds, [&](std::size_t f) {
    const auto fold = make_fold(data.maps.size(), c.folds, f);
    const fs::path curve_path = c.output_dir / "curves" / ("fold_" + std::to_string(f) + ".csv");
    if (c.kind == ExperimentKind::Grid) {
      const auto tr = grid_evidence(c, data, fold.train);
      const auto va = grid_evidence(c, data, fold.validation);
      DecompConfig dc = c.structure;
      dc.seed = stream_seed(c.seed, kStructure, f);
      auto net = generate_dense(grid_variables(c.grid), dc);
      initialize_weights(net, stream_seed(c.seed, kInit, f), c.init_jitter);
      TrainConfig tc = c.train;
      tc.seed = stream_seed(c.seed, kTrain, f);
      const auto curve = train(net, tr, tc, va);
      std::string csv = "epoch,mean_log_likelihood,val_log_likelihood\n";
      for (std::size_t e = 0; e < curve.train.size(); ++e)
        csv += std::to_string(e + 1) + "," + num(curve.train[e]) + "," + num(curve.validation[e]) + "\n";
      write_text(curve_path, csv);
      write_text(model_path(c, f), network_to_json(net).dump() + "\n");
      return Result{curve.train.back(), curve.validation.back()};
    }
    std::vector<TopologicalMap> train_maps;
    for (auto i : fold.train) train_maps.push_back(data.maps[i]);
    const auto samples =
        extract_training_samples(train_maps, c.hierarchy, c.sample_attempts, stream_seed(c.seed, kSamples, f));
    std::map<std::string, LikelihoodCurve> curves;
    const auto lib = train_templates(samples, template_training(c), stream_seed(c.seed, kTrain, f), &curves);
    std::string csv = "template,epoch,mean_log_likelihood\n";
    for (const auto& [key, curve] : curves)
      for (std::size_t e = 0; e < curve.train.size(); ++e)
        csv += key + "," + std::to_string(e + 1) + "," + num(curve.train[e]) + "\n";
    write_text(curve_path, csv);
    write_text(model_path(c, f), library_to_json(c, lib).dump() + "\n");
    return Result{mean_instance_ll(c, lib, data, fold.train), mean_instance_ll(c, lib, data, fold.validation)};
  });
  std::string csv = "fold,final_train_ll,final_val_ll\n";
  std::vector<double> tr, va;
  for (std::size_t f = 0; f < results.size(); ++f) {
    csv += std::to_string(f) + "," + num(results[f].train_ll) + "," + num(results[f].val_ll) + "\n";
    tr.push_back(results[f].train_ll);
    va.push_back(results[f].val_ll);
  }
  csv += "mean," + num(mean(tr)) + "," + num(mean(va)) + "\n";
  csv += "std," + num(stddev(tr)) + "," + num(stddev(va)) + "\n";
  write_text(c.output_dir / "train_summary.csv", csv);
}

void cmd_complete(const ExperimentConfig& c) {
  const auto data = load_dataset(c);
  struct Tally {
    std::array<std::size_t, kNumCategoryValues> occluded{}, correct{};
    std::size_t baseline = 0;
  };
  const auto tallies = for_each_fold(c.folds, [&](std::size_t f) {
    const auto fold = make_fold(data.maps.size(), c.folds, f);
    std::array<std::size_t, 6> counts{};
    for (auto i : fold.train) {
      const auto cc = category_counts(data.maps[i]);
      for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += cc[k];
    }
    const auto majority = static_cast<Category>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    std::optional<SpnNetwork> grid_net;
    std::optional<TemplateLibrary> lib;
    if (c.kind == ExperimentKind::Grid) grid_net = load_grid_model(c, f);
    else lib = library_from_json(c, read_json(model_path(c, f)), model_path(c, f));
    Tally t;
    const fs::path dir = c.output_dir / "completed" / ("fold_" + std::to_string(f));
    for (auto i : fold.validation) {
      const auto occ = occlude(data.maps[i], c.occlusion, stream_seed(c.seed, kOcclusion, i));
      TopologicalMap done;
      if (grid_net) {
        const auto grid = complete_grid(*grid_net, project(occ.query, c.grid));
        write_text(dir / (data.names[i] + ".grid.txt"), grid.to_text());
        done = apply_completion_to_map(occ.query, grid);
      } else {
        done = complete_map(occ.query, c.hierarchy, {c.instance_attempts, stream_seed(c.seed, kInstance, i)}, *lib);
      }
      write_text(dir / (data.names[i] + ".json"), map_to_json(done).dump(1) + "\n");
      for (auto id : occ.occluded) {
        const auto truth = occ.truth.places()[occ.truth.index_of(id)].category;
        const auto v = category_value(truth);
        ++t.occluded[v];
        t.correct[v] += done.places()[done.index_of(id)].category == truth;
        t.baseline += truth == majority;
      }
    }
    return t;
  });
  auto rate = [](std::size_t ok, std::size_t n) { return n == 0 ? 1.0 : static_cast<double>(ok) / n; };
  std::string csv = "fold,category,occluded,correct,accuracy\n";
  auto emit = [&](const std::string& fold, const Tally& t) {
    std::size_t n = 0, ok = 0;
    for (std::size_t v = 0; v < kNumCategoryValues; ++v) {
      csv += fold + "," + std::string(to_string(kLabelCategories[v])) + "," + std::to_string(t.occluded[v]) + "," +
             std::to_string(t.correct[v]) + "," + num(rate(t.correct[v], t.occluded[v])) + "\n";
      n += t.occluded[v];
      ok += t.correct[v];
    }
    csv += fold + ",all," + std::to_string(n) + "," + std::to_string(ok) + "," + num(rate(ok, n)) + "\n";
    csv += fold + ",majority_baseline," + std::to_string(n) + "," + std::to_string(t.baseline) + "," +
           num(rate(t.baseline, n)) + "\n";
  };
  Tally total;
  for (std::size_t f = 0; f < tallies.size(); ++f) {
    emit(std::to_string(f), tallies[f]);
    for (std::size_t v = 0; v < kNumCategoryValues; ++v) {
      total.occluded[v] += tallies[f].occluded[v];
      total.correct[v] += tallies[f].correct[v];
    }
    total.baseline += tallies[f].baseline;
  }
  emit("all", total);
  write_text(c.output_dir / "accuracy.csv", csv);
}

void cmd_novelty(const ExperimentConfig& c) {
  const auto data = load_dataset(c);
  // Per fold: (swap name, train LL, validation LL), baseline first.
  using Row = std::tuple<std::string, double, double>;
  const auto rows = for_each_fold(c.folds, [&](std::size_t f) {
    const auto fold = make_fold(data.maps.size(), c.folds, f);
    std::vector<Row> out;
    std::vector<std::optional<std::pair<Category, Category>>> sets{std::nullopt};
    for (const auto& s : c.swaps) sets.emplace_back(s);
    if (c.kind == ExperimentKind::Grid) {
      const auto net = load_grid_model(c, f);
      for (const auto& s : sets)
        out.emplace_back(s ? swap_name(*s) : "none", mean_log_likelihood(net, grid_evidence(c, data, fold.train, s)),
                         mean_log_likelihood(net, grid_evidence(c, data, fold.validation, s)));
    } else {
      const auto lib = library_from_json(c, read_json(model_path(c, f)), model_path(c, f));
      for (const auto& s : sets)
        out.emplace_back(s ? swap_name(*s) : "none", mean_instance_ll(c, lib, data, fold.train, s),
                         mean_instance_ll(c, lib, data, fold.validation, s));
    }
    return out;
  });
  std::string csv = "fold,swap,set,mean_log_likelihood\n";
  const std::size_t nsets = c.swaps.size() + 1;
  std::vector<double> tr(nsets, 0.0), va(nsets, 0.0);
  for (std::size_t f = 0; f < rows.size(); ++f)
    for (std::size_t s = 0; s < nsets; ++s) {
      const auto& [name, t, v] = rows[f][s];
      csv += std::to_string(f) + "," + name + ",train," + num(t) + "\n";
      csv += std::to_string(f) + "," + name + ",validation," + num(v) + "\n";
      tr[s] += t / static_cast<double>(rows.size());
      va[s] += v / static_cast<double>(rows.size());
    }
  for (std::size_t s = 0; s < nsets; ++s) {
    const auto& name = std::get<0>(rows[0][s]);
    csv += "mean," + name + ",train," + num(tr[s]) + "\n";
    csv += "mean," + name + ",validation," + num(va[s]) + "\n";
  }
  write_text(c.output_dir / "novelty.csv", csv);
}

void cmd_partition_stats(const ExperimentConfig& c) {
  const auto data = load_dataset(c);
  std::string csv = "map";
  for (std::size_t a = 1; a <= c.partition_attempts; ++a) csv += ",attempt_" + std::to_string(a);
  csv += "\n";
  std::vector<double> sums(c.partition_attempts, 0.0);
  for (std::size_t i = 0; i < data.maps.size(); ++i) {
    const auto curve = coverage_curve(Graph::from_map(data.maps[i]), c.partition_template, c.partition_attempts,
                                      stream_seed(c.seed, kPartition, i));
    csv += data.names[i];
    for (std::size_t a = 0; a < curve.size(); ++a) {
      csv += "," + std::to_string(curve[a]);
      sums[a] += static_cast<double>(curve[a]);
    }
    csv += "\n";
  }
  csv += "mean";
  for (double s : sums) csv += "," + num(s / static_cast<double>(std::max<std::size_t>(data.maps.size(), 1)));
  csv += "\n";
  write_text(c.output_dir / "coverage.csv", csv);
}

// ---- command line ----

int run_cli(int argc, char** argv) {
  CLI::App app{"Sum-product networks over topological maps: experiment driver"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  struct Command {
    const char* name;
    const char* help;
    void (*run)(const ExperimentConfig&);
  };
  const Command commands[] = {
      {"generate", "Write synthetic maps and a manifest", cmd_generate},
      {"train", "Train one model per fold and write likelihood curves", cmd_train},
      {"complete", "Occlude validation maps, complete them and score accuracy", cmd_complete},
      {"novelty", "Compare likelihoods of label-swapped maps", cmd_novelty},
      {"partition-stats", "Write partition coverage curves", cmd_partition_stats},
  };
  const Command* chosen = nullptr;
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out, "Override the output directory");
    sub->callback([&chosen, &cmd] { chosen = &cmd; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    auto config = load_experiment_config(config_path);
    if (seed) config.seed = *seed;
    if (out) config.output_dir = *out;
    config.validate();
    chosen->run(config);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    const bool numeric = e.code() == ErrorCode::NonFiniteGradient || e.code() == ErrorCode::ImpossibleEvidence;
    return numeric ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace topospn
