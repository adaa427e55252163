#include <algorithm>

#include "doctest.h"
#include "spn/graph.hpp"
#include "spn/optim.hpp"
#include "support.hpp"

using namespace spn;

namespace {

GraphSpec small_graph() {
  GraphSpec g("small");
  g.add("input", InputLayer{{6, 6, 1}});
  g.add("conv", Conv2D{4, 3}, {"input"});
  g.add("bn", BatchNorm{}, {"conv"});
  g.add("act", Activation{}, {"bn"});
  g.add("pool", MaxPool2D{2, 2}, {"act"});
  g.add("flatten", Flatten{}, {"pool"});
  g.add("logits", Dense{2}, {"flatten"});
  g.add("softmax", SoftmaxOutput{}, {"logits"});
  return g;
}

std::string graph_error(const GraphSpec& g) {
  try {
    Network net(g);
  } catch (const GraphError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("shape inference") {
    const Network net(small_graph());
    CHECK(net.shape_of("conv") == Shape{6, 6, 4});
    CHECK(net.shape_of("pool") == Shape{3, 3, 4});
    CHECK(net.shape_of("flatten") == Shape{36});
    CHECK(net.shape_of("softmax") == Shape{2});
    CHECK(net.class_count() == 2);
    CHECK(net.input_shape() == Shape{6, 6, 1});
    const auto trace = net.shape_trace();
    CHECK(trace.front().first == "input");
    CHECK(trace.back().first == "softmax");
  }

  TEST_CASE("structural errors name the node") {
    GraphSpec dup = small_graph();
    dup.add("conv", Dense{3}, {"input"});
    CHECK(graph_error(dup).find("duplicate node id 'conv'") != std::string::npos);

    GraphSpec dangling = small_graph();
    dangling.add("extra", Dense{3}, {"flatten"});
    CHECK(graph_error(dangling).find("'extra'") != std::string::npos);

    GraphSpec no_softmax("x");
    no_softmax.add("input", InputLayer{});
    no_softmax.add("fc", Dense{2}, {"input"});
    CHECK_FALSE(graph_error(no_softmax).empty());

    GraphSpec two_inputs = small_graph();
    two_inputs.add("input2", InputLayer{});
    CHECK_FALSE(graph_error(two_inputs).empty());

    GraphSpec fan_in = small_graph();
    fan_in.connect("input", "act");
    CHECK(graph_error(fan_in).find("'act'") != std::string::npos);

    GraphSpec unknown = small_graph();
    unknown.connect("nowhere", "act");
    CHECK(graph_error(unknown).find("nowhere") != std::string::npos);
  }

  TEST_CASE("cycles are rejected") {
    GraphSpec g("cycle");
    g.add("input", InputLayer{{4, 4, 1}});
    g.add("a", Conv2D{2, 3}, {"input"});
    g.add("cat", Concat{}, {"a"});
    g.add("b", Activation{}, {"cat"});
    g.connect("b", "cat");
    g.add("flatten", Flatten{}, {"b"});
    g.add("logits", Dense{2}, {"flatten"});
    g.add("softmax", SoftmaxOutput{}, {"logits"});
    CHECK_FALSE(graph_error(g).empty());
  }

  TEST_CASE("shape inference failures name node and kind") {
    GraphSpec big = small_graph().without({"pool", "flatten", "logits", "softmax"});
    big.add("huge", Conv2D{2, 5, Padding::Valid}, {"act"});
    big.add("huge2", Conv2D{2, 5, Padding::Valid}, {"huge"});
    big.add("flatten", Flatten{}, {"huge2"});
    big.add("logits", Dense{2}, {"flatten"});
    big.add("softmax", SoftmaxOutput{}, {"logits"});
    const std::string e = graph_error(big);
    CHECK(e.find("shape inference failed at node 'huge2'") != std::string::npos);
    CHECK(e.find("Conv2D") != std::string::npos);

    GraphSpec odd("odd");
    odd.add("input", InputLayer{{6, 6, 1}});
    odd.add("conv", Conv2D{2, 7}, {"input"});
    odd.add("flatten", Flatten{}, {"conv"});
    odd.add("logits", Dense{2}, {"flatten"});
    odd.add("softmax", SoftmaxOutput{}, {"logits"});
    CHECK(graph_error(odd).find("'conv'") != std::string::npos);

    GraphSpec mismatch("mismatch");
    mismatch.add("input", InputLayer{{6, 6, 1}});
    mismatch.add("a", MaxPool2D{2, 2}, {"input"});
    mismatch.add("cat", Concat{}, {"a", "input"});
    mismatch.add("flatten", Flatten{}, {"cat"});
    mismatch.add("logits", Dense{2}, {"flatten"});
    mismatch.add("softmax", SoftmaxOutput{}, {"logits"});
    CHECK(graph_error(mismatch).find("'cat'") != std::string::npos);
  }

  TEST_CASE("without removes nodes and their edges") {
    const GraphSpec g = small_graph().without({"bn"});
    CHECK(g.find("bn") == nullptr);
    CHECK(std::none_of(g.edges().begin(), g.edges().end(),
                       [](const auto& e) { return e.first == "bn" || e.second == "bn"; }));
  }

  TEST_CASE("parameter initialization") {
    const Network net(small_graph());
    Rng rng(31);
    const ParamSet p = net.init_params(rng);
    CHECK(p.size() == 8);
    CHECK(p.value("conv/kernel").shape() == Shape{3, 3, 1, 4});
    const double lim = glorot_limit(9, 36);
    for (double v : p.value("conv/kernel").values()) CHECK(std::abs(v) <= lim);
    for (double v : p.value("conv/bias").values()) CHECK(v == 0.0);
    for (double v : p.value("bn/gamma").values()) CHECK(v == 1.0);
    for (double v : p.value("bn/moving_variance").values()) CHECK(v == 1.0);
    CHECK(p.trainable_count() == 9 * 4 + 4 + 4 + 4 + 36 * 2 + 2);
    CHECK(p.non_trainable_count() == 8);
    Rng again(31);
    CHECK(net.init_params(again) == p);
  }

  TEST_CASE("check_params names the mismatching parameter") {
    const Network net(small_graph());
    Rng rng(32);
    ParamSet p = net.init_params(rng);
    p.value("logits/kernel") = Tensor({35, 2});
    try {
      net.check_params(p);
      FAIL("expected GraphError");
    } catch (const GraphError& e) {
      CHECK(std::string(e.what()).find("logits/kernel") != std::string::npos);
    }
  }

  TEST_CASE("forward modes and batch-norm statistics") {
    const Network net(small_graph());
    Rng rng(33);
    ParamSet p = net.init_params(rng);
    const Tensor x = test::random_tensor({5, 6, 6, 1}, rng);
    const ParamSet before = p;
    const Tensor probs = net.predict(p, x);
    CHECK(p == before);
    CHECK(probs.shape() == Shape{5, 2});
    for (std::size_t i = 0; i < 5; ++i) CHECK(probs.at(i, 0) + probs.at(i, 1) == doctest::Approx(1.0));
    const Trace infer = net.forward(p, x, Mode::Infer, rng);
    CHECK(infer.probabilities() == probs);
    CHECK(p == before);
    net.forward(p, x, Mode::Train, rng);
    CHECK_FALSE(p.value("bn/moving_mean") == before.value("bn/moving_mean"));
    CHECK(p.value("conv/kernel") == before.value("conv/kernel"));
  }

  TEST_CASE("backward rejects an inference trace through batch norm") {
    const Network net(small_graph());
    Rng rng(34);
    ParamSet p = net.init_params(rng);
    const Tensor x = test::random_tensor({2, 6, 6, 1}, rng);
    const Trace t = net.forward(p, x, Mode::Infer, rng);
    CHECK_THROWS(net.backward(p, t, Tensor({2, 2})));
  }
}
