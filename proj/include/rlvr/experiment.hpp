#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rlvr/diagnostics.hpp"
#include "rlvr/environment.hpp"
#include "rlvr/optimizers.hpp"

namespace rlvr {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr std::size_t kDefaultBatchSize = 16;
inline constexpr std::size_t kDefaultSteps = 300;

enum class Emit { TracesCsv, SummaryJson, FigureData };

/// Optional grid. Each list, when non-empty, replaces the base config value.
/// tau applies only to UCPO cells and tau_ent only to GlobalEntropy cells.
struct SweepGrid {
  std::vector<Method> methods;
  std::vector<double> taus;
  std::vector<double> tau_ents;
  std::vector<InitProfile> profiles;
};

struct ExperimentConfig {
  std::string name = "custom";
  EnvSpec env;
  OptimizerConfig optimizer;
  std::size_t steps = kDefaultSteps;
  std::size_t k = kDefaultBatchSize;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::optional<SweepGrid> sweep;
  double entropy_threshold = kDefaultCollapseThreshold;
  std::filesystem::path output_dir = "out";
  std::set<Emit> emit{Emit::TracesCsv, Emit::SummaryJson};
  /// Figure whose panel data emit_figure_data writes ("" for none).
  std::string figure;

  /// Throws InvalidConfig.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Strict: unknown keys and a missing or unsupported schema_version are
/// rejected with InvalidConfig.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Names of all presets, in catalog order.
const std::vector<std::string>& preset_names();
/// Throws UsageError listing the catalog for unknown names.
ExperimentConfig preset(std::string_view name);

/// One (env, optimizer) combination of a sweep.
struct Cell {
  std::string name;
  EnvSpec env;
  OptimizerConfig optimizer;
};

/// Cartesian expansion of the sweep in the order method, tau / tau_ent,
/// init_profile, with irrelevant coefficients not multiplied out.
std::vector<Cell> expand_cells(const ExperimentConfig& config);

struct SeedFinal {
  std::uint64_t seed = 0;
  double normalized_entropy = 0.0;
  double conditional_entropy = 0.0;
  double correct_mass = 0.0;
  double incorrect_mass = 0.0;
  std::size_t winner = 0;
  bool collapsed = false;
  bool aborted = false;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  ///< population standard deviation over seeds
};

struct CellSummary {
  Cell cell;
  std::vector<SeedFinal> seeds;
  Stat normalized_entropy;
  Stat conditional_entropy;
  Stat correct_mass;
  Stat incorrect_mass;
  /// winner_histogram[a] = number of seeds whose final dominant correct token is position a.
  std::vector<std::size_t> winner_histogram;
  double collapse_rate = 0.0;
  std::size_t aborted = 0;
};

struct SweepSummary {
  std::vector<CellSummary> cells;
  const CellSummary* find(std::string_view cell_name) const;
};

struct CellResult {
  Cell cell;
  std::vector<RunResult> runs;  ///< ordered as config.seeds
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<CellResult> cells;
  SweepSummary summary;
  bool any_aborted = false;
};

/// Runs every (cell, seed) pair, in parallel when hardware allows; results are
/// reduced in (cell, seed) order. Writes the requested outputs under
/// config.output_dir when write_outputs is true.
ExperimentResult run_experiment(const ExperimentConfig& config, bool write_outputs = true);

SweepSummary summarize(const std::vector<CellResult>& cells);

/// Header line of the trace CSV for m correct tokens, newline included.
std::string trace_csv_header(std::size_t num_correct);
/// All rows of one cell: for each seed, one row per step plus a final row
/// (step == steps) describing the trained policy with empty count/gradmass fields.
std::string trace_csv(const CellResult& cell);

nlohmann::json summary_json(const ExperimentResult& result);

/// Writes the per-panel CSVs of `figure_id` into `dir`. Returns the paths
/// written. Throws InvalidConfig naming any cell the figure needs but the
/// results lack.
std::vector<std::filesystem::path> emit_figure_data(const ExperimentResult& result, std::string_view figure_id,
                                                    const std::filesystem::path& dir);

}  // namespace rlvr
