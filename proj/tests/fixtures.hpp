#pragma once

#include <filesystem>
#include <string>

#include "spn/dataset.hpp"
#include "spn/training.hpp"
#include "support.hpp"

namespace spn::test {

/// A small synthetic corpus shared by the tests of one process.
inline const Manifest& small_corpus() {
  static TempDir dir("corpus");
  static const Manifest m = [] {
    generate_synthetic_dataset(12, 21, dir / "small");
    return read_manifest(dir / "small" / "manifest.csv");
  }();
  return m;
}

/// Quick settings: two folds, a couple of epochs.
inline ExperimentConfig quick_config(Architecture arch = Architecture::DSPN, std::size_t epochs = 2) {
  ExperimentConfig c;
  c.architecture = ArchitectureId::defaults(arch);
  c.epochs = epochs;
  c.folds = 2;
  c.batch_size = 8;
  c.seed = 5;
  return c;
}

}  // namespace spn::test
