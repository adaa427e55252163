#include "spn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spn/errors.hpp"
#include "spn/rng.hpp"

namespace spn {

namespace {

// Tags keeping the per-purpose random streams apart.
enum StreamTag : std::uint64_t { kInit = 1, kShuffle = 2, kAugment = 3, kDropout = 4 };

}  // namespace

Tensor stack_images(const ImageSet& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("cannot stack an empty batch");
  const Shape& s = data.images.at(indices[0]).shape();
  Shape shape{indices.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  Tensor batch(shape);
  const std::size_t per = shape_size(s);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor& img = data.images.at(indices[i]);
    if (img.shape() != s) throw ShapeError("images in one batch differ in shape");
    std::copy_n(img.data(), per, batch.data() + i * per);
  }
  return batch;
}

std::vector<std::size_t> all_indices(const ImageSet& data) {
  std::vector<std::size_t> idx(data.images.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

TrainResult train(const ExperimentConfig& config, const ImageSet& data,
                  std::span<const std::size_t> indices, std::uint64_t stream,
                  const BatchObserver& observer, const EpochObserver& on_epoch) {
  config.validate();
  if (indices.empty()) throw ValidationError("training set is empty");
  bool seen[2] = {false, false};
  for (std::size_t i : indices) seen[std::min<std::size_t>(data.labels.at(i), 1)] = true;
  if (!seen[0] || !seen[1]) throw ValidationError("training set must contain both classes");

  const Network net(build(config.architecture));
  TrainResult result;
  result.model.architecture = config.architecture;
  Rng init = make_rng(config.seed, {stream, kInit});
  result.model.params = net.init_params(init);
  ParamSet& params = result.model.params;
  OptimizerState opt(config.optimizer);

  std::vector<std::size_t> order(indices.begin(), indices.end());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle = make_rng(config.seed, {stream, kShuffle, epoch});
    std::shuffle(order.begin(), order.end(), shuffle);

    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0, batch_no = 0; start < order.size();
         start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> members(order.data() + start, end - start);
      if (observer) observer(members);

      Tensor batch = stack_images(data, members);
      if (config.augment) {
        const std::size_t per = batch.size() / members.size();
        for (std::size_t i = 0; i < members.size(); ++i) {
          Rng aug = make_rng(config.seed, {stream, kAugment, epoch, members[i]});
          const Transform t = sample_transform(config.augmentation, aug);
          const Tensor img = apply_transform(data.images[members[i]], t);
          std::copy_n(img.data(), per, batch.data() + i * per);
        }
      }
      std::vector<std::size_t> labels(members.size());
      for (std::size_t i = 0; i < members.size(); ++i) labels[i] = data.labels[members[i]];

      Rng drop = make_rng(config.seed, {stream, kDropout, epoch, batch_no});
      const Trace trace = net.forward(params, batch, Mode::Train, drop);
      const LossResult loss = softmax_cross_entropy(trace.logits(), one_hot(labels, net.class_count()));
      if (!std::isfinite(loss.loss))
        throw DivergenceError(epoch, "training diverged in epoch " + std::to_string(epoch) +
                                         " (loss is not finite)");
      Network::Backward back = net.backward(params, trace, loss.grad);
      if (config.regularizer.kind != RegularizerKind::None) {
        const PenaltyResult pen = regularizer_penalty(params, config.regularizer);
        if (!std::isfinite(pen.penalty))
          throw DivergenceError(epoch, "training diverged in epoch " + std::to_string(epoch) +
                                           " (regularizer penalty is not finite)");
        for (std::size_t i = 0; i < params.size(); ++i)
          if (!pen.addend[i].empty())
            for (std::size_t j = 0; j < pen.addend[i].size(); ++j) back.params[i][j] += pen.addend[i][j];
      }
      optimizer_step(opt, params, back.params);

      loss_sum += loss.loss * static_cast<double>(members.size());
      const auto predicted = argmax_last(trace.probabilities());
      for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
    }
    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(hits) / static_cast<double>(order.size());
    stats.penalty = regularizer_penalty(params, config.regularizer).penalty;
    if (!std::isfinite(stats.loss) || !std::isfinite(stats.penalty))
      throw DivergenceError(epoch, "training diverged in epoch " + std::to_string(epoch));
    result.history.push_back(stats);
    if (on_epoch && !on_epoch(epoch, stats, result.model)) break;
  }
  return result;
}

TrainResult train(const ExperimentConfig& config, const Manifest& manifest) {
  validate_manifest(manifest, true);
  const ImageSet data = load_images(manifest);
  const auto idx = all_indices(data);
  return train(config, data, idx);
}

std::vector<std::size_t> predict_classes(const Network& network, const ParamSet& params,
                                         const ImageSet& data, std::span<const std::size_t> indices,
                                         std::size_t batch_size) {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t end = std::min(indices.size(), start + batch_size);
    const Tensor probs = network.predict(params, stack_images(data, indices.subspan(start, end - start)));
    const auto cls = argmax_last(probs);
    out.insert(out.end(), cls.begin(), cls.end());
  }
  return out;
}

double evaluate_accuracy(const Network& network, const ParamSet& params, const ImageSet& data,
                         std::span<const std::size_t> indices) {
  const auto predicted = predict_classes(network, params, data, indices);
  std::vector<std::size_t> truth(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) truth[i] = data.labels[indices[i]];
  return accuracy(predicted, truth);
}

}  // namespace spn
