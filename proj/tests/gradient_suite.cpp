#include "gradient_suite.hpp"

#include "spn/graph.hpp"
#include "spn/layers.hpp"
#include "spn/optim.hpp"
#include "support.hpp"

namespace spn::test {

namespace {

void conv_cases(std::vector<GradCase>& out, Rng& rng) {
  struct Geo {
    std::size_t k;
    Padding pad;
    std::size_t stride;
  };
  const Geo geos[] = {{1, Padding::Same, 1},  {3, Padding::Same, 1},  {3, Padding::Valid, 1},
                      {5, Padding::Same, 1},  {5, Padding::Valid, 1}, {3, Padding::Same, 2},
                      {3, Padding::Valid, 2}, {5, Padding::Same, 2}};
  for (const Geo& g : geos) {
    Tensor x = random_tensor({2, 6, 6, 2}, rng);
    Tensor k = random_tensor({g.k, g.k, 2, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    const Tensor w = random_tensor(conv2d(x, k, b, g.pad, g.stride).shape(), rng);
    auto loss = [&] { return weighted_sum(conv2d(x, k, b, g.pad, g.stride), w); };
    const ConvGrads grads = conv2d_grad(x, k, w, g.pad, g.stride);
    const std::string tag = "conv2d k" + std::to_string(g.k) + (g.pad == Padding::Same ? " same" : " valid") +
                            " s" + std::to_string(g.stride);
    out.push_back({tag + " d/input", grad_check(x, grads.input, loss)});
    out.push_back({tag + " d/kernel", grad_check(k, grads.kernel, loss)});
    out.push_back({tag + " d/bias", grad_check(b, grads.bias, loss)});
  }
}

void pool_cases(std::vector<GradCase>& out, Rng& rng) {
  const std::pair<std::size_t, std::size_t> windows[] = {{2, 2}, {3, 3}, {3, 2}, {5, 5}};
  for (auto [win, stride] : windows) {
    Tensor x = random_tensor({2, 6, 6, 2}, rng);
    const PoolResult fwd = maxpool2d(x, win, stride);
    const Tensor w = random_tensor(fwd.output.shape(), rng);
    auto loss = [&] { return weighted_sum(maxpool2d(x, win, stride).output, w); };
    out.push_back({"maxpool " + std::to_string(win) + "/" + std::to_string(stride),
                   grad_check(x, maxpool2d_backward(x.shape(), fwd, w, win, stride), loss)});
  }
  {
    Tensor x = random_tensor({2, 5, 5, 3}, rng);
    const PoolResult fwd = global_max_pool(x);
    const Tensor w = random_tensor(fwd.output.shape(), rng);
    auto loss = [&] { return weighted_sum(global_max_pool(x).output, w); };
    out.push_back({"global max pool", grad_check(x, global_max_pool_backward(x.shape(), fwd, w), loss)});
  }
  {
    Tensor x = random_tensor({2, 5, 5, 3}, rng);
    const Tensor w = random_tensor({2, 3}, rng);
    auto loss = [&] { return weighted_sum(global_avg_pool(x), w); };
    out.push_back({"global avg pool", grad_check(x, global_avg_pool_backward(x.shape(), w), loss)});
  }
}

void dense_cases(std::vector<GradCase>& out, Rng& rng) {
  Tensor x = random_tensor({3, 5}, rng);
  Tensor wt = random_tensor({5, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  const Tensor w = random_tensor({3, 4}, rng);
  auto loss = [&] { return weighted_sum(dense(x, wt, b), w); };
  const DenseGrads g = dense_backward(x, wt, w, true);
  out.push_back({"dense d/input", grad_check(x, g.input, loss)});
  out.push_back({"dense d/weights", grad_check(wt, g.weights, loss)});
  out.push_back({"dense d/bias", grad_check(b, g.bias, loss)});
}

void dropout_case(std::vector<GradCase>& out, Rng& rng) {
  Tensor x = random_tensor({4, 6}, rng);
  const Tensor w = random_tensor({4, 6}, rng);
  auto run = [&](Tensor* mask) {
    Rng fixed(99);
    return dropout(x, 0.5, Mode::Train, fixed, mask);
  };
  Tensor mask;
  run(&mask);
  auto loss = [&] { return weighted_sum(run(nullptr), w); };
  out.push_back({"dropout", grad_check(x, dropout_backward(w, mask), loss)});
}

void batchnorm_cases(std::vector<GradCase>& out, Rng& rng) {
  const Shape shapes[] = {{4, 3, 3, 2}, {5, 3}};
  for (const Shape& s : shapes) {
    Tensor x = random_tensor(s, rng);
    const std::size_t c = s.back();
    BatchNormParams bn{random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng), Tensor({c}, 0.0),
                       Tensor({c}, 1.0)};
    const Tensor w = random_tensor(s, rng);
    BatchNormCache cache;
    batchnorm(x, bn, Mode::Train, &cache);
    auto loss = [&] { return weighted_sum(batchnorm(x, bn, Mode::Train), w); };
    const BatchNormGrads g = batchnorm_backward(w, bn.gamma, cache);
    const std::string tag = "batchnorm rank " + std::to_string(s.size());
    out.push_back({tag + " d/input", grad_check(x, g.input, loss)});
    out.push_back({tag + " d/gamma", grad_check(bn.gamma, g.gamma, loss)});
    out.push_back({tag + " d/beta", grad_check(bn.beta, g.beta, loss)});
  }
}

void activation_cases(std::vector<GradCase>& out, Rng& rng) {
  const std::pair<const char*, ActivationFn> fns[] = {
      {"relu", ActivationFn::relu()}, {"leaky relu", ActivationFn::leaky_relu()}, {"elu", ActivationFn::elu()}};
  for (const auto& [name, fn] : fns) {
    Tensor x = random_away_from_zero({3, 4, 4, 2}, rng);
    const Tensor w = random_tensor(x.shape(), rng);
    auto loss = [&] { return weighted_sum(activation(x, fn), w); };
    out.push_back(
        {std::string("activation ") + name, grad_check(x, activation_backward(x, activation(x, fn), w, fn), loss)});
  }
}

void loss_case(std::vector<GradCase>& out, Rng& rng) {
  Tensor logits = random_tensor({4, 3}, rng, -3.0, 3.0);
  const std::vector<std::size_t> labels{0, 2, 1, 2};
  const Tensor target = one_hot(labels, 3);
  auto loss = [&] { return softmax_cross_entropy(logits, target).loss; };
  out.push_back({"softmax cross-entropy", grad_check(logits, softmax_cross_entropy(logits, target).grad, loss)});
}

void regularizer_cases(std::vector<GradCase>& out, Rng& rng) {
  GraphSpec g("reg");
  g.add("input", InputLayer{{4, 4, 1}});
  g.add("conv", Conv2D{2, 3}, {"input"});
  g.add("flatten", Flatten{}, {"conv"});
  g.add("logits", Dense{2}, {"flatten"});
  g.add("softmax", SoftmaxOutput{}, {"logits"});
  const Network net(g);
  ParamSet params = net.init_params(rng);
  for (const auto spec : {RegularizerSpec::l1(0.01), RegularizerSpec::l2(0.01)}) {
    const PenaltyResult pen = regularizer_penalty(params, spec);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].regularized()) continue;
      auto loss = [&] { return regularizer_penalty(params, spec).penalty; };
      out.push_back({to_string(spec.kind) + " penalty d/" + params[i].name,
                     grad_check(params[i].value, pen.addend[i], loss)});
    }
  }
}

void network_case(std::vector<GradCase>& out, Rng& rng, const std::string& tag, const GraphSpec& spec,
                  const Shape& batch_shape) {
  const Network net(spec);
  ParamSet params = net.init_params(rng);
  // Non-trivial scale and shift so batch norm is exercised away from identity.
  for (Param& p : params.items())
    if (p.role == ParamRole::Gamma || p.role == ParamRole::Beta || p.role == ParamRole::Bias)
      p.value = random_tensor(p.value.shape(), rng, 0.5, 1.5);
  Tensor x = random_tensor(batch_shape, rng);
  std::vector<std::size_t> labels(batch_shape[0]);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
  const Tensor target = one_hot(labels, 2);

  auto forward = [&] {
    Rng fixed(1234);
    return net.forward(params, x, Mode::Train, fixed);
  };
  const Trace trace = forward();
  const LossResult l = softmax_cross_entropy(trace.logits(), target);
  const Network::Backward back = net.backward(params, trace, l.grad, true);
  auto loss = [&] { return softmax_cross_entropy(forward().logits(), target).loss; };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable()) continue;
    out.push_back({tag + " d/" + params[i].name, grad_check(params[i].value, back.params[i], loss)});
  }
  out.push_back({tag + " d/input", grad_check(x, back.input, loss)});
}

void network_cases(std::vector<GradCase>& out, Rng& rng) {
  {
    GraphSpec g("two-path");
    g.add("input", InputLayer{{6, 6, 2}});
    g.add("a_conv", Conv2D{3, 3, Padding::Same}, {"input"});
    g.add("a_bn", BatchNorm{}, {"a_conv"});
    g.add("a_act", Activation{ActivationFn::elu()}, {"a_bn"});
    g.add("a_pool", MaxPool2D{2, 2}, {"a_act"});
    g.add("b_conv", Conv2D{2, 1, Padding::Same}, {"input"});
    g.add("b_act", Activation{ActivationFn::leaky_relu()}, {"b_conv"});
    g.add("b_pool", MaxPool2D{2, 2}, {"b_act"});
    g.add("concat", Concat{}, {"a_pool", "b_pool"});
    g.add("flatten", Flatten{}, {"concat"});
    g.add("fc", Dense{4}, {"flatten"});
    g.add("fc_bn", BatchNorm{}, {"fc"});
    g.add("fc_act", Activation{ActivationFn::elu()}, {"fc_bn"});
    g.add("dropout", Dropout{0.5}, {"fc_act"});
    g.add("logits", Dense{2}, {"dropout"});
    g.add("softmax", SoftmaxOutput{}, {"logits"});
    network_case(out, rng, "graph two-path", g, {4, 6, 6, 2});
  }
  for (bool use_max : {true, false}) {
    GraphSpec g("pooled");
    g.add("input", InputLayer{{6, 6, 1}});
    g.add("conv", Conv2D{4, 3, Padding::Valid}, {"input"});
    g.add("act", Activation{ActivationFn::elu()}, {"conv"});
    g.add("p_pool", MaxPool2D{3, 3}, {"input"});
    g.add("p_conv", Conv2D{2, 1, Padding::Valid}, {"p_pool"});
    g.add("p_act", Activation{ActivationFn::elu()}, {"p_conv"});
    g.add("p_up", Conv2D{2, 1, Padding::Same, 1}, {"p_act"});
    // 4x4 and 2x2 maps cannot be concatenated, so each path is pooled first.
    if (use_max) {
      g.add("gp_a", GlobalMaxPool{}, {"act"});
      g.add("gp_b", GlobalMaxPool{}, {"p_up"});
    } else {
      g.add("gp_a", GlobalAvgPool{}, {"act"});
      g.add("gp_b", GlobalAvgPool{}, {"p_up"});
    }
    g.add("concat", Concat{}, {"gp_a", "gp_b"});
    g.add("logits", Dense{2}, {"concat"});
    g.add("softmax", SoftmaxOutput{}, {"logits"});
    network_case(out, rng, use_max ? "graph global-max" : "graph global-avg", g, {3, 6, 6, 1});
  }
}

}  // namespace

std::vector<GradCase> run_gradient_suite(std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x6AD});
  std::vector<GradCase> out;
  conv_cases(out, rng);
  pool_cases(out, rng);
  dense_cases(out, rng);
  dropout_case(out, rng);
  batchnorm_cases(out, rng);
  activation_cases(out, rng);
  loss_case(out, rng);
  regularizer_cases(out, rng);
  network_cases(out, rng);
  return out;
}

}  // namespace spn::test
