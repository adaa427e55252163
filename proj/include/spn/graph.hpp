#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "spn/layers.hpp"
#include "spn/rng.hpp"
#include "spn/tensor.hpp"

namespace spn {

// Layer descriptions. Shapes below are per sample; the batch axis is implicit.

struct InputLayer {
  Shape shape{32, 32, 1};
};
struct Conv2D {
  std::size_t filters = 1;
  std::size_t kernel = 3;
  Padding padding = Padding::Same;
  std::size_t stride = 1;
};
struct MaxPool2D {
  std::size_t window = 2;
  std::size_t stride = 2;
};
struct GlobalMaxPool {};
struct GlobalAvgPool {};
struct Dense {
  std::size_t units = 1;
};
struct Flatten {};
struct Dropout {
  double rate = 0.5;
};
struct BatchNorm {
  double momentum = 0.99;
  double epsilon = 1e-3;
};
struct Activation {
  ActivationFn fn;
};
struct Concat {};
struct SoftmaxOutput {};

using LayerSpec = std::variant<InputLayer, Conv2D, MaxPool2D, GlobalMaxPool, GlobalAvgPool, Dense,
                               Flatten, Dropout, BatchNorm, Activation, Concat, SoftmaxOutput>;

std::string_view kind_name(const LayerSpec& spec);

/// Thrown when a graph is malformed or fails shape inference; the message
/// names the offending node.
class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Declarative network description: nodes plus directed edges. Concat
/// inputs are taken in edge insertion order.
class GraphSpec {
 public:
  struct Node {
    std::string id;
    LayerSpec spec;
  };

  GraphSpec() = default;
  explicit GraphSpec(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  /// Adds a node fed by the given predecessors; returns its id.
  std::string add(std::string id, LayerSpec spec, std::vector<std::string> inputs = {});
  void connect(const std::string& from, const std::string& to);

  /// Copy of this graph with the given nodes (and their edges) removed.
  GraphSpec without(const std::vector<std::string>& ids) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::pair<std::string, std::string>>& edges() const { return edges_; }
  const Node* find(std::string_view id) const;

 private:
  std::string name_;
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::string>> edges_;
};

enum class ParamRole { Kernel, Bias, Gamma, Beta, MovingMean, MovingVariance };

struct Param {
  std::string name;
  ParamRole role = ParamRole::Kernel;
  Tensor value;

  bool trainable() const {
    return role != ParamRole::MovingMean && role != ParamRole::MovingVariance;
  }
  /// Kernel regularizers touch convolution and dense kernels only.
  bool regularized() const { return role == ParamRole::Kernel; }
};

/// Every learned tensor and batch-norm statistic of one network, in node
/// order. Names are "<node>/<role>".
class ParamSet {
 public:
  std::vector<Param>& items() { return items_; }
  const std::vector<Param>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  Param& operator[](std::size_t i) { return items_[i]; }
  const Param& operator[](std::size_t i) const { return items_[i]; }

  std::optional<std::size_t> index_of(std::string_view name) const;
  const Tensor& value(std::string_view name) const;
  Tensor& value(std::string_view name);

  std::size_t trainable_count() const;
  std::size_t non_trainable_count() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  friend class Network;
  std::vector<Param> items_;
};

bool operator==(const ParamSet& a, const ParamSet& b);

/// Per-parameter gradients aligned with ParamSet::items(); non-trainable
/// entries stay empty.
using Gradients = std::vector<Tensor>;

struct NodeCache {
  Tensor col;
  std::vector<std::size_t> argmax;
  Tensor mask;
  BatchNormCache bn;
};

/// Activations and caches of one forward pass.
struct Trace {
  Mode mode = Mode::Infer;
  std::vector<Tensor> activations;
  std::vector<NodeCache> caches;
  std::size_t output_node = 0;
  std::size_t logits_node = 0;

  const Tensor& probabilities() const { return activations[output_node]; }
  const Tensor& logits() const { return activations[logits_node]; }
};

/// A validated, shape-inferred graph ready for evaluation.
class Network {
 public:
  explicit Network(GraphSpec spec);

  const GraphSpec& spec() const { return spec_; }
  std::size_t node_count() const { return order_.size(); }
  const Shape& input_shape() const;
  std::size_t class_count() const;

  /// Node ids with their per-sample output shapes, in topological order.
  std::vector<std::pair<std::string, Shape>> shape_trace() const;
  const Shape& shape_of(std::string_view id) const;

  /// Parameter names, roles and shapes (zero-valued), in ParamSet order.
  const std::vector<Param>& param_layout() const { return param_layout_; }

  /// Glorot-uniform kernels, zero biases, gamma 1, beta 0, moving mean 0,
  /// moving variance 1.
  ParamSet init_params(Rng& rng) const;
  /// Throws GraphError naming the first parameter whose name or dims do not
  /// match this network.
  void check_params(const ParamSet& params) const;

  /// Evaluates the batch [n, ...input]. Train mode updates batch-norm
  /// moving statistics in params.
  Trace forward(ParamSet& params, const Tensor& batch, Mode mode, Rng& rng) const;
  /// Infer-mode class probabilities [n, classes].
  Tensor predict(const ParamSet& params, const Tensor& batch) const;

  struct Backward {
    Gradients params;
    Tensor input;
  };
  /// Propagates the loss gradient w.r.t. the softmax logits back through
  /// every path, summing at fan-out points.
  Backward backward(const ParamSet& params, const Trace& trace, const Tensor& dlogits,
                    bool want_input_grad = false) const;

 private:
  struct Compiled {
    std::string id;
    LayerSpec spec;
    std::vector<std::size_t> inputs;
    Shape shape;
    std::size_t first_param = 0;
    std::size_t param_count = 0;
  };

  Trace run(ParamSet* mutable_params, const ParamSet& params, const Tensor& batch, Mode mode,
            Rng& rng) const;

  GraphSpec spec_;
  std::vector<Compiled> order_;
  std::vector<Param> param_layout_;
  std::size_t input_ = 0;
  std::size_t output_ = 0;
};

}  // namespace spn
