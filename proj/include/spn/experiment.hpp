#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spn/training.hpp"
#include "json.hpp"

namespace spn {

// Config files ---------------------------------------------------------------

/// {"architecture": "dspn" | {"name", "normalization", "head_pool"},
///  "optimizer": "adam" | {"kind", "learning_rate"},
///  "regularizer": "none" | {"kind", "penalty"},
///  "activation": "relu" | "leaky_relu[:a]" | "elu[:a]",
///  "augmentation": {"enabled", "shift_max", "rotation_max_deg", "hflip", "vflip", "brightness"},
///  "batch_size", "epochs", "folds", "seed"}
/// Every key is optional; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig read_config(const std::filesystem::path& path);

// Cross-validation -----------------------------------------------------------

struct FoldResult {
  std::size_t fold = 0;
  double train_accuracy = 0.0;  ///< infer mode, unaugmented training images
  double test_accuracy = 0.0;
  double final_loss = 0.0;
  std::size_t train_images = 0;
  std::size_t test_images = 0;
};

inline constexpr double kUnderfitThreshold = 0.60;

struct RunResult {
  std::string run_id;
  ExperimentConfig config;
  std::string dataset;
  std::vector<FoldResult> folds;
  double mean_test_accuracy = 0.0;
  double mean_train_accuracy = 0.0;
  double wall_seconds = 0.0;
  bool underfit = false;  ///< mean final train accuracy below kUnderfitThreshold
  bool skipped = false;   ///< grid cell marked "-": nothing was run
};

/// Called with (held-out fold, batch indices) for every optimizer step.
/// Folds may train concurrently, so the callback must be thread-safe.
using FoldBatchObserver = std::function<void(std::size_t, std::span<const std::size_t>)>;

/// k-fold cross-validation over nodule-level folds. Fold f trains from
/// substream f + 1 of config.seed and is tested in infer mode.
RunResult crossval(const ExperimentConfig& config, const Manifest& manifest, const ImageSet& images,
                   std::string run_id = "crossval", const FoldBatchObserver& observer = {});
RunResult crossval(const ExperimentConfig& config, const Manifest& manifest);

// Grids ----------------------------------------------------------------------

/// One tuning row: the varied setting plus the fixed ones, written the way
/// the result tables print them ("Regularizer L2 at 0.001", "Adam
/// Optimizer, ReLU"). Conditions listed in skip are not run.
struct GridRow {
  std::string tuning;
  std::string other;
  std::vector<std::string> skip;

  friend bool operator==(const GridRow&, const GridRow&) = default;
};

/// {"name", "base": <config>, "conditions": ["original", "augmented"],
///  "rows": [{"tuning", "other", "skip": true | [conditions]}]}
struct GridFile {
  std::string name;
  ExperimentConfig base;
  std::vector<std::string> conditions{"original", "augmented"};
  std::vector<GridRow> rows;
};

GridFile grid_from_json(const nlohmann::json& j);
nlohmann::json grid_to_json(const GridFile& grid);
GridFile read_grid(const std::filesystem::path& path);

/// Applies the comma-separated phrases of row.other, then row.tuning, to
/// base. Throws ValidationError naming an unrecognized phrase.
ExperimentConfig resolve_row(const ExperimentConfig& base, const GridRow& row);

/// The published tuning rows for an architecture, as a grid over the
/// default config.
GridFile paper_grid(Architecture arch);

/// True when config matches one of the published rows for its architecture
/// (optimizer at its default rate; epochs, batch size, folds and seed are
/// free).
bool in_paper_lattice(const ExperimentConfig& config);

struct GridIssue {
  std::size_t row = 0;  ///< 1-based
  std::string message;
};

struct GridOutcome {
  std::vector<RunResult> runs;  ///< executed and skipped cells, sorted by run_id
  std::vector<GridIssue> issues;
};

/// "03-augmented"
std::string grid_run_id(std::size_t row, const std::string& condition);

/// One crossval per row and condition. Malformed rows, and with paper_mode
/// rows outside the published lattice, are reported in issues and skipped.
GridOutcome grid_run(const GridFile& grid, const Manifest& manifest, bool paper_mode = false,
                     const std::function<void(const RunResult&)>& progress = {});

/// Rows x conditions text table: mean test accuracy, "x" for underfit,
/// "-" for skipped cells, "?" for rows that did not resolve.
std::string grid_table(const GridFile& grid, const GridOutcome& outcome);

// Cross-dataset evaluation ---------------------------------------------------

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::size_t images = 0;
};

/// Pure inference of a trained model over a whole manifest.
EvalResult evaluate_model(const ModelState& model, const Manifest& manifest);
EvalResult cross_dataset_eval(const std::filesystem::path& model_file, const Manifest& manifest);

}  // namespace spn
