#include "spn/graph.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace spn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void add_into(Tensor& acc, Tensor&& g) {
  if (acc.empty()) {
    acc = std::move(g);
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

}  // namespace

std::string_view kind_name(const LayerSpec& spec) {
  return std::visit(Overloaded{
                        [](const InputLayer&) { return "Input"; },
                        [](const Conv2D&) { return "Conv2D"; },
                        [](const MaxPool2D&) { return "MaxPool2D"; },
                        [](const GlobalMaxPool&) { return "GlobalMaxPool"; },
                        [](const GlobalAvgPool&) { return "GlobalAvgPool"; },
                        [](const Dense&) { return "Dense"; },
                        [](const Flatten&) { return "Flatten"; },
                        [](const Dropout&) { return "Dropout"; },
                        [](const BatchNorm&) { return "BatchNorm"; },
                        [](const Activation&) { return "Activation"; },
                        [](const Concat&) { return "Concat"; },
                        [](const SoftmaxOutput&) { return "SoftmaxOutput"; },
                    },
                    spec);
}

std::string GraphSpec::add(std::string id, LayerSpec spec, std::vector<std::string> inputs) {
  nodes_.push_back({id, std::move(spec)});
  for (auto& from : inputs) edges_.emplace_back(std::move(from), id);
  return id;
}

void GraphSpec::connect(const std::string& from, const std::string& to) {
  edges_.emplace_back(from, to);
}

GraphSpec GraphSpec::without(const std::vector<std::string>& ids) const {
  const std::set<std::string> drop(ids.begin(), ids.end());
  GraphSpec out(name_);
  for (const auto& n : nodes_)
    if (!drop.contains(n.id)) out.nodes_.push_back(n);
  for (const auto& e : edges_)
    if (!drop.contains(e.first) && !drop.contains(e.second)) out.edges_.push_back(e);
  return out;
}

const GraphSpec::Node* GraphSpec::find(std::string_view id) const {
  for (const auto& n : nodes_)
    if (n.id == id) return &n;
  return nullptr;
}

std::optional<std::size_t> ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].name == name) return i;
  return std::nullopt;
}

const Tensor& ParamSet::value(std::string_view name) const {
  const auto i = index_of(name);
  if (!i) throw std::out_of_range("no parameter named " + std::string(name));
  return items_[*i].value;
}

Tensor& ParamSet::value(std::string_view name) {
  const auto i = index_of(name);
  if (!i) throw std::out_of_range("no parameter named " + std::string(name));
  return items_[*i].value;
}

std::size_t ParamSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : items_)
    if (p.trainable()) n += p.value.size();
  return n;
}

std::size_t ParamSet::non_trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : items_)
    if (!p.trainable()) n += p.value.size();
  return n;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.items_.size() != b.items_.size()) return false;
  for (std::size_t i = 0; i < a.items_.size(); ++i)
    if (a.items_[i].name != b.items_[i].name || a.items_[i].role != b.items_[i].role ||
        !(a.items_[i].value == b.items_[i].value))
      return false;
  return true;
}

Network::Network(GraphSpec spec) : spec_(std::move(spec)) {
  const auto& nodes = spec_.nodes();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!index.emplace(nodes[i].id, i).second)
      throw GraphError("duplicate node id '" + nodes[i].id + "'");

  std::vector<std::vector<std::size_t>> preds(nodes.size()), succs(nodes.size());
  for (const auto& [from, to] : spec_.edges()) {
    const auto f = index.find(from), t = index.find(to);
    if (f == index.end()) throw GraphError("edge from unknown node '" + from + "'");
    if (t == index.end()) throw GraphError("edge to unknown node '" + to + "'");
    preds[t->second].push_back(f->second);
    succs[f->second].push_back(t->second);
  }

  std::optional<std::size_t> input, output;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const bool is_input = std::holds_alternative<InputLayer>(n.spec);
    const bool is_output = std::holds_alternative<SoftmaxOutput>(n.spec);
    if (is_input) {
      if (input) throw GraphError("second input node '" + n.id + "'");
      if (!preds[i].empty()) throw GraphError("input node '" + n.id + "' has predecessors");
      input = i;
    } else if (preds[i].empty()) {
      throw GraphError("node '" + n.id + "' is not reachable from the input");
    }
    if (preds[i].size() > 1 && !std::holds_alternative<Concat>(n.spec))
      throw GraphError("node '" + n.id + "' (" + std::string(kind_name(n.spec)) +
                       ") has several inputs; only Concat may merge paths");
    if (is_output) {
      if (output) throw GraphError("second softmax output '" + n.id + "'");
      if (!succs[i].empty()) throw GraphError("softmax output '" + n.id + "' is not a sink");
      output = i;
    } else if (succs[i].empty()) {
      throw GraphError("node '" + n.id + "' does not feed the softmax output");
    }
  }
  if (!input) throw GraphError("graph has no input node");
  if (!output) throw GraphError("graph has no softmax output node");

  // Kahn's algorithm, preferring declaration order among ready nodes.
  std::vector<std::size_t> indegree(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) indegree[i] = preds[i].size();
  std::set<std::size_t> ready{*input};
  std::vector<std::size_t> topo;
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    topo.push_back(i);
    for (std::size_t s : succs[i])
      if (--indegree[s] == 0) ready.insert(s);
  }
  if (topo.size() != nodes.size()) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (indegree[i] > 0) throw GraphError("cycle through node '" + nodes[i].id + "'");
  }

  std::vector<std::size_t> position(nodes.size());
  for (std::size_t p = 0; p < topo.size(); ++p) position[topo[p]] = p;

  for (std::size_t i : topo) {
    Compiled c{nodes[i].id, nodes[i].spec, {}, {}, 0, 0};
    for (std::size_t p : preds[i]) c.inputs.push_back(position[p]);
    auto fail = [&](const std::string& why) {
      throw GraphError("shape inference failed at node '" + c.id + "' (" +
                       std::string(kind_name(c.spec)) + "): " + why);
    };
    auto in_shape = [&](std::size_t k = 0) -> const Shape& { return order_[c.inputs[k]].shape; };
    auto param = [&](std::string role_name, ParamRole role, Shape shape) {
      if (c.param_count == 0) c.first_param = param_layout_.size();
      param_layout_.push_back({c.id + "/" + role_name, role, Tensor(std::move(shape))});
      ++c.param_count;
    };

    std::visit(
        Overloaded{
            [&](const InputLayer& l) {
              if (l.shape.empty() || shape_size(l.shape) == 0) fail("empty input shape");
              c.shape = l.shape;
            },
            [&](const Conv2D& l) {
              const Shape& in = in_shape();
              if (in.size() != 3) fail("expected [h,w,c] input, got " + to_string(in));
              if (l.kernel != 1 && l.kernel != 3 && l.kernel != 5)
                fail("kernel size must be 1, 3 or 5, got " + std::to_string(l.kernel));
              if (l.filters == 0) fail("zero filters");
              try {
                c.shape = {conv_output_extent(in[0], l.kernel, l.padding, l.stride),
                           conv_output_extent(in[1], l.kernel, l.padding, l.stride), l.filters};
              } catch (const ShapeError& e) {
                fail(e.what());
              }
              param("kernel", ParamRole::Kernel, {l.kernel, l.kernel, in[2], l.filters});
              param("bias", ParamRole::Bias, {l.filters});
            },
            [&](const MaxPool2D& l) {
              const Shape& in = in_shape();
              if (in.size() != 3) fail("expected [h,w,c] input, got " + to_string(in));
              if (l.window == 0 || l.stride == 0) fail("window and stride must be positive");
              if (l.window > in[0] || l.window > in[1])
                fail("window " + std::to_string(l.window) + " exceeds input " + to_string(in));
              c.shape = {(in[0] - l.window) / l.stride + 1, (in[1] - l.window) / l.stride + 1,
                         in[2]};
            },
            [&](const GlobalMaxPool&) {
              if (in_shape().size() != 3) fail("expected [h,w,c] input");
              c.shape = {in_shape()[2]};
            },
            [&](const GlobalAvgPool&) {
              if (in_shape().size() != 3) fail("expected [h,w,c] input");
              c.shape = {in_shape()[2]};
            },
            [&](const Dense& l) {
              if (in_shape().size() != 1) fail("expected a vector input, got " + to_string(in_shape()));
              if (l.units == 0) fail("zero units");
              c.shape = {l.units};
              param("kernel", ParamRole::Kernel, {in_shape()[0], l.units});
              param("bias", ParamRole::Bias, {l.units});
            },
            [&](const Flatten&) { c.shape = {shape_size(in_shape())}; },
            [&](const Dropout& l) {
              if (l.rate < 0.0 || l.rate >= 1.0) fail("dropout rate outside [0,1)");
              c.shape = in_shape();
            },
            [&](const BatchNorm& l) {
              if (!(l.momentum > 0.0 && l.momentum < 1.0)) fail("momentum outside (0,1)");
              if (!(l.epsilon > 0.0)) fail("epsilon must be positive");
              c.shape = in_shape();
              const Shape channels{c.shape.back()};
              param("gamma", ParamRole::Gamma, channels);
              param("beta", ParamRole::Beta, channels);
              param("moving_mean", ParamRole::MovingMean, channels);
              param("moving_variance", ParamRole::MovingVariance, channels);
            },
            [&](const Activation&) { c.shape = in_shape(); },
            [&](const Concat&) {
              const Shape& first = in_shape(0);
              Shape s = first;
              s.back() = 0;
              for (std::size_t k = 0; k < c.inputs.size(); ++k) {
                const Shape& in = in_shape(k);
                if (in.size() != first.size() ||
                    !std::equal(first.begin(), first.end() - 1, in.begin()))
                  fail("spatial mismatch between " + to_string(first) + " and " + to_string(in));
                s.back() += in.back();
              }
              c.shape = s;
            },
            [&](const SoftmaxOutput&) {
              if (in_shape().size() != 1 || in_shape()[0] < 2)
                fail("softmax needs a vector of at least 2 logits, got " + to_string(in_shape()));
              c.shape = in_shape();
            },
        },
        c.spec);
    order_.push_back(std::move(c));
  }
  input_ = position[*input];
  output_ = position[*output];
}

const Shape& Network::input_shape() const { return order_[input_].shape; }

std::size_t Network::class_count() const { return order_[output_].shape[0]; }

std::vector<std::pair<std::string, Shape>> Network::shape_trace() const {
  std::vector<std::pair<std::string, Shape>> out;
  for (const auto& c : order_) out.emplace_back(c.id, c.shape);
  return out;
}

const Shape& Network::shape_of(std::string_view id) const {
  for (const auto& c : order_)
    if (c.id == id) return c.shape;
  throw GraphError("no node named '" + std::string(id) + "'");
}

ParamSet Network::init_params(Rng& rng) const {
  ParamSet ps;
  ps.items_ = param_layout_;
  for (const auto& c : order_) {
    if (c.param_count == 0) continue;
    auto* params = &ps.items_[c.first_param];
    if (const auto* conv = std::get_if<Conv2D>(&c.spec)) {
      const Shape& k = params[0].value.shape();
      glorot_uniform_init(params[0].value, k[0] * k[1] * k[2], conv->kernel * conv->kernel * conv->filters, rng);
    } else if (std::holds_alternative<Dense>(c.spec)) {
      const Shape& k = params[0].value.shape();
      glorot_uniform_init(params[0].value, k[0], k[1], rng);
    } else if (std::holds_alternative<BatchNorm>(c.spec)) {
      params[0].value.fill(1.0);
      params[3].value.fill(1.0);
    }
  }
  return ps;
}

void Network::check_params(const ParamSet& params) const {
  if (params.size() != param_layout_.size())
    throw GraphError("parameter count " + std::to_string(params.size()) + " does not match " +
                     std::to_string(param_layout_.size()) + " expected by " + spec_.name());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param& want = param_layout_[i];
    const Param& got = params[i];
    if (got.name != want.name)
      throw GraphError("parameter " + std::to_string(i) + " is '" + got.name + "', expected '" +
                       want.name + "'");
    if (got.value.shape() != want.value.shape())
      throw GraphError("parameter '" + got.name + "' has dims " + to_string(got.value.shape()) +
                       ", expected " + to_string(want.value.shape()));
  }
}

Trace Network::forward(ParamSet& params, const Tensor& batch, Mode mode, Rng& rng) const {
  return run(&params, params, batch, mode, rng);
}

Tensor Network::predict(const ParamSet& params, const Tensor& batch) const {
  Rng unused(0);
  return run(nullptr, params, batch, Mode::Infer, unused).probabilities();
}

Trace Network::run(ParamSet* mutable_params, const ParamSet& params, const Tensor& batch,
                   Mode mode, Rng& rng) const {
  if (batch.rank() != input_shape().size() + 1 ||
      !std::equal(input_shape().begin(), input_shape().end(), batch.shape().begin() + 1))
    throw ShapeError("batch " + to_string(batch.shape()) + " does not match input " +
                     to_string(input_shape()));
  const std::size_t n = batch.dim(0);
  if (n == 0) throw ShapeError("empty batch");
  if (mode == Mode::Train && mutable_params == nullptr)
    throw std::logic_error("train-mode forward needs mutable parameters");

  Trace t;
  t.mode = mode;
  t.activations.resize(order_.size());
  t.caches.resize(order_.size());
  t.output_node = output_;
  t.logits_node = order_[output_].inputs.at(0);

  for (std::size_t i = 0; i < order_.size(); ++i) {
    const Compiled& c = order_[i];
    NodeCache& cache = t.caches[i];
    const Param* p = c.param_count ? &params[c.first_param] : nullptr;
    auto in = [&](std::size_t k = 0) -> const Tensor& { return t.activations[c.inputs[k]]; };
    Tensor out = std::visit(
        Overloaded{
            [&](const InputLayer&) { return batch; },
            [&](const Conv2D& l) {
              const auto g = conv_geometry(in().shape(), l.kernel, l.padding, l.stride);
              return conv2d_forward(in(), p[0].value, p[1].value, g, cache.col);
            },
            [&](const MaxPool2D& l) {
              const Shape& s = in().shape();
              kernels::PoolGeometry g{n, s[1], s[2], s[3], l.window, l.stride,
                                      (s[1] - l.window) / l.stride + 1,
                                      (s[2] - l.window) / l.stride + 1};
              Tensor y({n, g.out_height, g.out_width, g.channels});
              cache.argmax.resize(y.size());
              kernels::maxpool_forward(g, in().values(), y.values(), cache.argmax);
              return y;
            },
            [&](const GlobalMaxPool&) {
              PoolResult r = global_max_pool(in());
              cache.argmax = std::move(r.argmax);
              return std::move(r.output);
            },
            [&](const GlobalAvgPool&) { return global_avg_pool(in()); },
            [&](const Dense&) { return dense(in(), p[0].value, p[1].value); },
            [&](const Flatten&) { return in().reshaped({n, shape_size(c.shape)}); },
            [&](const Dropout& l) { return dropout(in(), l.rate, mode, rng, &cache.mask); },
            [&](const BatchNorm& l) {
              BatchNormParams bn{p[0].value, p[1].value, p[2].value, p[3].value, l.momentum,
                                 l.epsilon};
              Tensor y = batchnorm(in(), bn, mode, &cache.bn);
              if (mode == Mode::Train) {
                Param* mp = &(*mutable_params)[c.first_param];
                mp[2].value = std::move(bn.running_mean);
                mp[3].value = std::move(bn.running_var);
              }
              return y;
            },
            [&](const Activation& l) { return activation(in(), l.fn); },
            [&](const Concat&) {
              std::vector<Tensor> parts;
              for (std::size_t k = 0; k < c.inputs.size(); ++k) parts.push_back(in(k));
              return concat_channels(parts);
            },
            [&](const SoftmaxOutput&) { return softmax(in()); },
        },
        c.spec);
    t.activations[i] = std::move(out);
  }
  return t;
}

Network::Backward Network::backward(const ParamSet& params, const Trace& trace,
                                    const Tensor& dlogits, bool want_input_grad) const {
  if (dlogits.shape() != trace.logits().shape())
    throw ShapeError("loss gradient " + to_string(dlogits.shape()) + " does not match logits " +
                     to_string(trace.logits().shape()));

  // A node needs a gradient only if something upstream of it is learnable.
  std::vector<bool> needs(order_.size(), false);
  for (std::size_t i = 0; i < order_.size(); ++i) {
    needs[i] = order_[i].param_count > 0 || (i == input_ && want_input_grad);
    for (std::size_t p : order_[i].inputs) needs[i] = needs[i] || needs[p];
  }

  Backward result;
  result.params.resize(params.size());
  std::vector<Tensor> grad(order_.size());
  grad[trace.logits_node] = dlogits;

  for (std::size_t ii = order_.size(); ii-- > 0;) {
    if (ii == output_ || ii == input_ || grad[ii].empty()) continue;
    const Compiled& c = order_[ii];
    const Tensor& dy = grad[ii];
    const Tensor& x = trace.activations[c.inputs[0]];
    const NodeCache& cache = trace.caches[ii];
    const std::size_t n = x.dim(0);
    const bool need_input = needs[c.inputs[0]];
    const Param* p = c.param_count ? &params[c.first_param] : nullptr;
    Gradients& pg = result.params;

    auto send = [&](std::size_t k, Tensor&& g) {
      if (needs[c.inputs[k]]) add_into(grad[c.inputs[k]], std::move(g));
    };

    std::visit(
        Overloaded{
            [&](const InputLayer&) {},
            [&](const Conv2D& l) {
              const auto g = conv_geometry(x.shape(), l.kernel, l.padding, l.stride);
              ConvGrads cg = conv2d_backward(cache.col, p[0].value, dy, g, need_input);
              pg[c.first_param] = std::move(cg.kernel);
              pg[c.first_param + 1] = std::move(cg.bias);
              if (need_input) send(0, std::move(cg.input));
            },
            [&](const MaxPool2D& l) {
              if (!need_input) return;
              const Shape& s = x.shape();
              kernels::PoolGeometry g{n, s[1], s[2], s[3], l.window, l.stride,
                                      (s[1] - l.window) / l.stride + 1,
                                      (s[2] - l.window) / l.stride + 1};
              Tensor dx(s);
              kernels::maxpool_backward(g, dy.values(), cache.argmax, dx.values());
              send(0, std::move(dx));
            },
            [&](const GlobalMaxPool&) {
              if (!need_input) return;
              Tensor dx(x.shape());
              for (std::size_t o = 0; o < cache.argmax.size(); ++o) dx[cache.argmax[o]] += dy[o];
              send(0, std::move(dx));
            },
            [&](const GlobalAvgPool&) {
              if (need_input) send(0, global_avg_pool_backward(x.shape(), dy));
            },
            [&](const Dense&) {
              DenseGrads dg = dense_backward(x, p[0].value, dy, need_input);
              pg[c.first_param] = std::move(dg.weights);
              pg[c.first_param + 1] = std::move(dg.bias);
              if (need_input) send(0, std::move(dg.input));
            },
            [&](const Flatten&) {
              if (need_input) send(0, dy.reshaped(x.shape()));
            },
            [&](const Dropout&) {
              if (need_input) send(0, trace.mode == Mode::Train ? dropout_backward(dy, cache.mask) : Tensor(dy));
            },
            [&](const BatchNorm&) {
              if (trace.mode != Mode::Train)
                throw std::logic_error("batch-norm backward needs a train-mode trace");
              BatchNormGrads bg = batchnorm_backward(dy, p[0].value, cache.bn);
              pg[c.first_param] = std::move(bg.gamma);
              pg[c.first_param + 1] = std::move(bg.beta);
              if (need_input) send(0, std::move(bg.input));
            },
            [&](const Activation& l) {
              if (need_input) send(0, activation_backward(x, trace.activations[ii], dy, l.fn));
            },
            [&](const Concat&) {
              const std::size_t total = dy.shape().back();
              const std::size_t outer = dy.size() / total;
              std::size_t offset = 0;
              for (std::size_t k = 0; k < c.inputs.size(); ++k) {
                const Tensor& part = trace.activations[c.inputs[k]];
                const std::size_t ck = part.shape().back();
                if (needs[c.inputs[k]]) {
                  Tensor dpart(part.shape());
                  for (std::size_t o = 0; o < outer; ++o)
                    std::copy_n(dy.data() + o * total + offset, ck, dpart.data() + o * ck);
                  send(k, std::move(dpart));
                }
                offset += ck;
              }
            },
            [&](const SoftmaxOutput&) {},
        },
        c.spec);
  }
  if (want_input_grad) {
    result.input = grad[input_].empty() ? Tensor(trace.activations[input_].shape())
                                        : std::move(grad[input_]);
  }
  // Parameters that received no gradient (unused paths) get zeros.
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].trainable() && result.params[i].empty())
      result.params[i] = Tensor(params[i].value.shape());
  return result;
}

}  // namespace spn
