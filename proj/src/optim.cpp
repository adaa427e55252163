#include "spn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spn {

LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot) {
  if (logits.rank() != 2 || logits.shape() != one_hot.shape())
    throw ShapeError("cross-entropy: logits " + to_string(logits.shape()) + " vs targets " +
                     to_string(one_hot.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (n == 0) throw std::invalid_argument("cross-entropy: empty batch");
  LossResult r;
  r.grad = Tensor(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * k;
    const double* y = one_hot.data() + i * k;
    const double top = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - top);
    const double log_sum = top + std::log(sum);
    for (std::size_t j = 0; j < k; ++j) {
      total -= y[j] * (z[j] - log_sum);
      r.grad[i * k + j] = (std::exp(z[j] - log_sum) - y[j]) / static_cast<double>(n);
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Tensor t({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw std::out_of_range("label exceeds class count");
    t[i * classes + labels[i]] = 1.0;
  }
  return t;
}

PenaltyResult regularizer_penalty(const ParamSet& params, const RegularizerSpec& spec) {
  PenaltyResult r;
  r.addend.resize(params.size());
  if (spec.penalty < 0.0) throw std::invalid_argument("regularizer penalty must be >= 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param& p = params[i];
    if (!p.regularized()) continue;
    Tensor add(p.value.shape());
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double w = p.value[j];
      switch (spec.kind) {
        case RegularizerKind::None:
          break;
        case RegularizerKind::L2:
          r.penalty += spec.penalty * w * w;
          add[j] = 2.0 * spec.penalty * w;
          break;
        case RegularizerKind::L1:
          r.penalty += spec.penalty * std::abs(w);
          add[j] = spec.penalty * static_cast<double>((w > 0.0) - (w < 0.0));
          break;
      }
    }
    r.addend[i] = std::move(add);
  }
  return r;
}

namespace {

void check_grads(const ParamSet& params, const Gradients& grads) {
  if (grads.size() != params.size())
    throw ShapeError("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].trainable() && grads[i].shape() != params[i].value.shape())
      throw ShapeError("optimizer: gradient of '" + params[i].name + "' has shape " +
                       to_string(grads[i].shape()));
}

void ensure_slots(OptimizerState& s, const ParamSet& params) {
  if (s.first.size() == params.size()) return;
  s.first.assign(params.size(), Tensor());
  s.second.assign(params.size(), Tensor());
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].trainable()) {
      s.first[i] = Tensor(params[i].value.shape());
      s.second[i] = Tensor(params[i].value.shape());
    }
}

}  // namespace

void sgd_step(OptimizerState& state, ParamSet& params, const Gradients& grads) {
  check_grads(params, grads);
  const double lr = state.spec.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable()) continue;
    Tensor& w = params[i].value;
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * grads[i][j];
  }
  ++state.steps;
}

void adam_step(OptimizerState& state, ParamSet& params, const Gradients& grads) {
  check_grads(params, grads);
  ensure_slots(state, params);
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double correct1 = 1.0 - std::pow(kAdamBeta1, t);
  const double correct2 = 1.0 - std::pow(kAdamBeta2, t);
  const double lr = state.spec.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable()) continue;
    Tensor& w = params[i].value;
    Tensor& m = state.first[i];
    Tensor& v = state.second[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i][j];
      m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * g;
      v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * g * g;
      const double m_hat = m[j] / correct1;
      const double v_hat = v[j] / correct2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
    }
  }
}

void adadelta_step(OptimizerState& state, ParamSet& params, const Gradients& grads) {
  check_grads(params, grads);
  ensure_slots(state, params);
  ++state.steps;
  const double lr = state.spec.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable()) continue;
    Tensor& w = params[i].value;
    Tensor& grad_sq = state.first[i];
    Tensor& update_sq = state.second[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i][j];
      grad_sq[j] = kAdadeltaRho * grad_sq[j] + (1.0 - kAdadeltaRho) * g * g;
      const double update = -std::sqrt(update_sq[j] + kAdadeltaEpsilon) /
                            std::sqrt(grad_sq[j] + kAdadeltaEpsilon) * g;
      update_sq[j] = kAdadeltaRho * update_sq[j] + (1.0 - kAdadeltaRho) * update * update;
      w[j] += lr * update;
    }
  }
}

void optimizer_step(OptimizerState& state, ParamSet& params, const Gradients& grads) {
  switch (state.spec.kind) {
    case OptimizerKind::SGD:
      return sgd_step(state, params, grads);
    case OptimizerKind::Adam:
      return adam_step(state, params, grads);
    case OptimizerKind::Adadelta:
      return adadelta_step(state, params, grads);
  }
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("accuracy: prediction and label counts differ");
  if (predicted.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predicted,
                                 std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("confusion_matrix: prediction and label counts differ");
  if (predicted.empty()) throw std::invalid_argument("confusion_matrix: empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] > 1 || truth[i] > 1)
      throw std::out_of_range("confusion_matrix: binary labels only");
    ++cm.counts[truth[i]][predicted[i]];
  }
  return cm;
}

std::string to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::None:
      return "none";
    case RegularizerKind::L1:
      return "l1";
    case RegularizerKind::L2:
      return "l2";
  }
  return "?";
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::SGD:
      return "sgd";
    case OptimizerKind::Adam:
      return "adam";
    case OptimizerKind::Adadelta:
      return "adadelta";
  }
  return "?";
}

}  // namespace spn
