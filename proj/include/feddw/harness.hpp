#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "feddw/engine.hpp"

namespace feddw {

// Config files are flat "key = value" text; nesting is expressed with dotted
// keys (strategy.mu, dataset.kind, model.feature_dims). '#' starts a comment.
// Lists are comma separated. Unknown keys are rejected.

struct ExperimentPreset {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
};

std::span<const ExperimentPreset> presets();
const ExperimentPreset& find_preset(const std::string& name);

/// Sets one dotted key; throws ConfigError naming the key and expected type.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
void apply_preset(RunConfig& config, const std::string& name);

/// Parses config text on top of `base`. A "preset" key is applied first,
/// then the remaining keys in file order.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig parse_config_file(const std::filesystem::path& path, RunConfig base = {});

/// Every key, one per line, in a fixed order; parse_config(emit_config(c))
/// reproduces c.
std::string emit_config(const RunConfig& config);

/// Hash of the emitted config with the execution-only `workers` key removed.
std::string config_hash(const RunConfig& config);

/// Train and test sets described by config.dataset.
std::pair<Dataset, Dataset> load_datasets(const RunConfig& config);

struct RunArtifacts {
  std::filesystem::path dir;
  RunResult result;
};

constexpr int kSummarySchemaVersion = 1;

/// Runs one experiment into <out_root>/<config-hash>-s<seed>/:
///   config.txt, metrics.csv (appended per round), timing.csv,
///   summary.json, sl_matrix.json, cr_matrix.json, model.{bin,json}.
/// Refuses a non-empty directory unless `force`. `progress` fires after each
/// round's CSV row has been flushed.
RunArtifacts run_experiment(const RunConfig& config, const std::filesystem::path& out_root, bool force,
                            const RoundCallback& progress = {});

/// One run per mu, each in its own subdirectory of out_root.
std::vector<RunArtifacts> sweep_mu(const RunConfig& config, std::span<const double> mus,
                                   const std::filesystem::path& out_root, bool force);

inline constexpr double kDefaultMuGrid[] = {0.01, 0.1, 1, 10, 100};

struct NormReport {
  Vector proportions;
  std::vector<long> class_counts;
  Vector relative_norms;  // ||w_c|| / sum_i ||w_i||
  double spearman = 0;    // rank correlation of proportion vs relative norm
};

/// Trains one bias-free model centrally on a resample of the training set with
/// the given class proportions (local_epochs epochs of Adam) and reports the
/// relative classifier row norms.
NormReport norm_study(std::span<const double> proportions, const RunConfig& config);
nlohmann::json to_json(const NormReport& report);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

struct HeatmapExport {
  SLMatrix sl;
  Matrix cr_softmax;
  double distance = 0;  // ||SL - softmax(CR)||_F
};

/// Reads sl_matrix.json and model.{bin,json} from a run directory, writes
/// heatmap.json, sl_grid.csv and cr_grid.csv to `out_dir`.
HeatmapExport heatmap_export(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);
HeatmapExport read_heatmap(const std::filesystem::path& heatmap_json);

nlohmann::json error_json(const std::string& kind, const std::string& message);

}  // namespace feddw
