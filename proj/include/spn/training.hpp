#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spn/augment.hpp"
#include "spn/dataset.hpp"
#include "spn/graph.hpp"
#include "spn/models.hpp"
#include "spn/optim.hpp"

namespace spn {

/// One hyperparameter cell. The activation lives in architecture.activation.
struct ExperimentConfig {
  ArchitectureId architecture = ArchitectureId::defaults(Architecture::DSPN);
  OptimizerSpec optimizer = OptimizerSpec::adam();
  RegularizerSpec regularizer = RegularizerSpec::l2(0.001);
  AugmentPolicy augmentation;
  bool augment = false;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::size_t folds = 10;
  std::uint64_t seed = 1;

  /// Free-form validation; with paper_grid the cell must also be one of the
  /// published tuning rows for its architecture and augmentation must stay
  /// within the published bounds.
  void validate(bool paper_grid = false) const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// A trained network: its architecture and every parameter.
struct ModelState {
  ArchitectureId architecture;
  ParamSet params;

  Network network() const { return Network(build(architecture)); }
};

struct EpochStats {
  double loss = 0.0;            ///< mean cross-entropy over the epoch
  double penalty = 0.0;         ///< regularizer value after the epoch
  double train_accuracy = 0.0;  ///< train-mode accuracy over the epoch's batches
};

struct TrainResult {
  ModelState model;
  std::vector<EpochStats> history;
};

/// Called with the dataset indices of every mini-batch handed to the
/// optimizer.
using BatchObserver = std::function<void(std::span<const std::size_t>)>;

/// Called after every epoch with its 0-based number, its stats and the
/// current model; returning false ends training early.
using EpochObserver = std::function<bool(std::size_t, const EpochStats&, const ModelState&)>;

/// Mini-batch training on data[indices]. Every random stream (init,
/// shuffling, augmentation, dropout) derives from (config.seed, stream), so
/// runs with equal inputs are bitwise identical. Throws DivergenceError
/// when the loss turns non-finite.
TrainResult train(const ExperimentConfig& config, const ImageSet& data,
                  std::span<const std::size_t> indices, std::uint64_t stream = 0,
                  const BatchObserver& observer = {}, const EpochObserver& on_epoch = {});

/// Trains on every record of the manifest.
TrainResult train(const ExperimentConfig& config, const Manifest& manifest);

/// Stacks data.images[indices] into an [n,32,32,1] batch.
Tensor stack_images(const ImageSet& data, std::span<const std::size_t> indices);

/// Infer-mode class predictions for data[indices].
std::vector<std::size_t> predict_classes(const Network& network, const ParamSet& params,
                                         const ImageSet& data, std::span<const std::size_t> indices,
                                         std::size_t batch_size = 64);

double evaluate_accuracy(const Network& network, const ParamSet& params, const ImageSet& data,
                         std::span<const std::size_t> indices);

std::vector<std::size_t> all_indices(const ImageSet& data);

}  // namespace spn
