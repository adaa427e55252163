#pragma once

#include <cstddef>
#include <string>

#include "spn/graph.hpp"
#include "spn/layers.hpp"

namespace spn {

enum class Architecture { DSPN, DDSPN, TDSPN };

/// Dropout: one 50% dropout in the dense head. BatchNorm: batch
/// normalization after every convolution and hidden dense layer.
/// GlobalPoolOnly: neither; the flatten step becomes a global pooling.
enum class Normalization { Dropout, BatchNorm, GlobalPoolOnly };
enum class HeadPool { GlobalMax, GlobalAvg };

struct ArchitectureId {
  Architecture arch = Architecture::DSPN;
  ActivationFn activation = ActivationFn::relu();
  Normalization normalization = Normalization::Dropout;
  HeadPool head_pool = HeadPool::GlobalMax;

  /// The canonical build: DSPN with dropout, DDSPN with batch norm, TDSPN
  /// with global max pooling only.
  static ArchitectureId defaults(Architecture arch);

  /// Throws ValidationError for combinations no builder supports.
  void validate() const;

  /// "activation=relu;normalization=dropout;head_pool=global_max"
  std::string options_string() const;
  static ArchitectureId parse(const std::string& arch_name, const std::string& options);

  friend bool operator==(const ArchitectureId&, const ArchitectureId&) = default;
};

std::string to_string(Architecture a);
std::string to_string(Normalization n);
std::string to_string(HeadPool h);
std::string to_string(const ActivationFn& fn);
Architecture parse_architecture(const std::string& name);
Normalization parse_normalization(const std::string& name);
HeadPool parse_head_pool(const std::string& name);
ActivationFn parse_activation(const std::string& name);

inline constexpr std::size_t kClasses = 2;
inline constexpr double kHeadDropout = 0.5;

/// One-path network: three conv/pool stages (32, 64, 128 filters) taking
/// 32x32 down to 16x16, 8x8 and 4x4, a 1x1 conv with 128 filters, then a
/// 256-128 dense head.
GraphSpec build_dspn(const ArchitectureId& options);

/// Two parallel paths over the input, a local one (32 filters, 3x3 then 1x1)
/// and a rapid one (64 then 128 filters), concatenated at 8x8 into a
/// 512-256 dense head.
GraphSpec build_ddspn(const ArchitectureId& options);

/// Three valid-padded paths ending at 4x4 (128, 256 and 512 channels),
/// concatenated and globally pooled into the 2-way output.
GraphSpec build_tdspn(const ArchitectureId& options);

GraphSpec build(const ArchitectureId& id);

struct ParameterCount {
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
};

/// Trainable: kernels, biases, batch-norm scale and shift. Non-trainable:
/// batch-norm moving statistics.
ParameterCount count_parameters(const Network& network);

}  // namespace spn
