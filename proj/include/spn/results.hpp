#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spn/experiment.hpp"

namespace spn {

inline constexpr const char* kResultsHeader =
    "run_id,arch,dataset,augmented,regularizer,optimizer,activation,fold,train_acc,test_acc,epochs,seed,status";

/// One CSV line. fold is the fold number, "mean" for the run summary, or
/// empty for a skipped cell; accuracies are rounded to 4 decimals and absent
/// for skipped cells.
struct ResultRow {
  std::string run_id;
  std::string arch;
  std::string dataset;
  bool augmented = false;
  std::string regularizer;
  std::string optimizer;
  std::string activation;
  std::string fold;
  std::optional<double> train_acc;
  std::optional<double> test_acc;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::string status;  ///< ok, underfit or skipped

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

/// "dspn", or "dspn+batchnorm", "tdspn+global_avg" for non-default builds.
std::string arch_label(const ArchitectureId& id);
/// "none", "l2:0.001"
std::string regularizer_label(const RegularizerSpec& spec);
/// "adam", or "adam:0.002" away from the default rate.
std::string optimizer_label(const OptimizerSpec& spec);

/// k fold rows plus a mean row per run, one row per skipped cell, ordered
/// by (run_id, fold). The mean row averages the rounded fold values, so it
/// can be recomputed from the file.
std::vector<ResultRow> result_rows(const std::vector<RunResult>& runs);

std::string format_results(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results(const std::string& text);

void emit_results(const std::vector<RunResult>& runs, const std::filesystem::path& path);
std::vector<ResultRow> read_results(const std::filesystem::path& path);

}  // namespace spn
