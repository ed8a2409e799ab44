#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "csu/core.hpp"
#include "csu/corruption.hpp"
#include "csu/metrics.hpp"
#include "csu/trainer.hpp"

namespace csu {

/// Invalid or unknown configuration content. Maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct DataSection {
  bool synthetic = true;
  SynthSpec synth;
  std::filesystem::path train_csv, valid_csv, test_csv;
  bool reseed_per_run = false;
};

struct CorruptionSection {
  std::vector<CorruptionKind> kinds{CorruptionKind::SAN, CorruptionKind::MAN,
                                    CorruptionKind::SLN};
  std::vector<double> ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  double soft_value = 0.6;
  std::optional<std::vector<std::vector<int>>> confusion_map;
};

struct TrainSection {
  TrainConfig base;  // loss and seed are filled per cell
  std::vector<LossSelector> losses{BaselineConfig{}, CsuObjective{}};
};

struct ExperimentConfig {
  DataSection data;
  CorruptionSection corruption;
  TrainSection train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::filesystem::path output_dir = "out";

  void validate() const;

  /// Canonical text of every field that changes results, excluding the grid
  /// axes (kinds, ratios, losses, seeds) and the output location.
  std::string canonical() const;
  /// 16 hex digits (FNV-1a 64 of canonical()).
  std::string hash() const;
};

/// Parses the sectioned key = value format. Unknown sections or keys, bad
/// values and duplicate keys raise ConfigError.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct CellKey {
  CorruptionKind kind = CorruptionKind::SAN;
  double ratio = 0.0;
  LossSelector loss = CsuObjective{};
  std::uint64_t seed = 0;
};

/// Every (kind, ratio, loss, seed) combination, in grid order.
std::vector<CellKey> grid_cells(const ExperimentConfig& config);

/// Seed derivations shared by the library path and the CLI.
std::uint64_t data_seed(const ExperimentConfig& config, std::uint64_t run_seed);
CorruptionSpec corruption_spec(const ExperimentConfig& config, CorruptionKind kind, double ratio,
                               std::uint64_t run_seed);
TrainConfig train_config(const ExperimentConfig& config, const LossSelector& loss,
                         std::uint64_t run_seed);

/// Generated (or loaded) splits for one run seed.
SplitBundles experiment_data(const ExperimentConfig& config, std::uint64_t run_seed);

struct CellResult {
  CorruptionReport corruption;
  TrainResult trained;
  MetricReport test;
};

/// Corrupt the training split, train, and score the clean test split.
CellResult run_cell(const ExperimentConfig& config, const SplitBundles& clean,
                    const CellKey& cell);

/// Directory names used in the output tree.
std::string ratio_label(double ratio);
std::filesystem::path experiment_root(const ExperimentConfig& config);
std::filesystem::path data_dir(const ExperimentConfig& config, std::uint64_t run_seed);
std::filesystem::path corruption_dir(const ExperimentConfig& config, CorruptionKind kind,
                                     double ratio, std::uint64_t run_seed);
std::filesystem::path cell_dir(const ExperimentConfig& config, const CellKey& cell);
std::string cell_hash(const ExperimentConfig& config, const CellKey& cell);

struct CommandOptions {
  std::size_t jobs = 1;
  std::uint64_t seed_offset = 0;
  bool verbose = true;
};

/// Each returns the number of artifacts written (skipped ones excluded).
std::size_t cmd_gen(const ExperimentConfig& config, const CommandOptions& options = {});
std::size_t cmd_corrupt(const ExperimentConfig& config, const CommandOptions& options = {});
std::size_t cmd_train(const ExperimentConfig& config, const CommandOptions& options = {});
std::size_t cmd_eval(const ExperimentConfig& config, const CommandOptions& options = {});
std::size_t cmd_sweep(const ExperimentConfig& config, const CommandOptions& options = {});
std::size_t cmd_analyze(const ExperimentConfig& config, const CommandOptions& options = {});

/// Writes summary.csv (one row per kind x ratio x loss) from completed cells.
void write_summary(const ExperimentConfig& config, const CommandOptions& options = {});

/// Applies --seed-offset to the configured seeds.
ExperimentConfig with_seed_offset(ExperimentConfig config, std::uint64_t offset);

}  // namespace csu
