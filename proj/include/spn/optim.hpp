#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spn/graph.hpp"
#include "spn/tensor.hpp"

namespace spn {

struct LossResult {
  double loss = 0.0;
  Tensor grad;  ///< d loss / d logits
};

/// Mean cross-entropy of softmax(logits) against one-hot targets, via
/// log-sum-exp. The gradient is (softmax - one_hot) / n.
LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot);

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes);

enum class RegularizerKind { None, L1, L2 };

struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::None;
  double penalty = 0.0;

  static RegularizerSpec none() { return {}; }
  static RegularizerSpec l1(double penalty = 0.001) { return {RegularizerKind::L1, penalty}; }
  static RegularizerSpec l2(double penalty = 0.001) { return {RegularizerKind::L2, penalty}; }

  friend bool operator==(const RegularizerSpec&, const RegularizerSpec&) = default;
};

struct PenaltyResult {
  double penalty = 0.0;
  Gradients addend;  ///< aligned with the ParamSet; empty for unregularized entries
};

/// Kernel penalty over convolution and dense kernels. L2: lambda * sum w^2
/// with addend 2 lambda w. L1: lambda * sum |w| with addend lambda sign(w).
PenaltyResult regularizer_penalty(const ParamSet& params, const RegularizerSpec& spec);

enum class OptimizerKind { SGD, Adam, Adadelta };

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.001;

  static OptimizerSpec sgd(double lr = 0.01) { return {OptimizerKind::SGD, lr}; }
  static OptimizerSpec adam(double lr = 0.001) { return {OptimizerKind::Adam, lr}; }
  static OptimizerSpec adadelta(double lr = 1.0) { return {OptimizerKind::Adadelta, lr}; }

  friend bool operator==(const OptimizerSpec&, const OptimizerSpec&) = default;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-7;
inline constexpr double kAdadeltaRho = 0.95;
inline constexpr double kAdadeltaEpsilon = 1e-7;

/// Accumulators for one ParamSet. Adam keeps first/second moments,
/// Adadelta keeps running squared gradients/updates. Slots are shaped like
/// their parameters on the first step.
struct OptimizerState {
  OptimizerSpec spec;
  std::uint64_t steps = 0;
  std::vector<Tensor> first;
  std::vector<Tensor> second;

  explicit OptimizerState(OptimizerSpec s = {}) : spec(s) {}
};

void sgd_step(OptimizerState& state, ParamSet& params, const Gradients& grads);
void adam_step(OptimizerState& state, ParamSet& params, const Gradients& grads);
void adadelta_step(OptimizerState& state, ParamSet& params, const Gradients& grads);
/// Dispatches on state.spec.kind. Only trainable parameters move.
void optimizer_step(OptimizerState& state, ParamSet& params, const Gradients& grads);

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

/// counts[true][predicted] for the two classes.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, 2>, 2> counts{};
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predicted,
                                 std::span<const std::size_t> truth);

std::string to_string(RegularizerKind kind);
std::string to_string(OptimizerKind kind);

}  // namespace spn
