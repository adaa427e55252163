#include "spn/models.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "spn/errors.hpp"

namespace spn {

namespace {

// Appends Conv -> [BatchNorm] -> Activation and returns the last node id.
std::string conv_block(GraphSpec& g, const std::string& name, const std::string& from, Conv2D conv,
                       bool batch_norm, const ActivationFn& act) {
  std::string last = g.add(name, conv, {from});
  if (batch_norm) last = g.add(name + "_bn", BatchNorm{}, {last});
  return g.add(name + "_act", Activation{act}, {last});
}

std::string dense_block(GraphSpec& g, const std::string& name, const std::string& from,
                        std::size_t units, bool batch_norm, const ActivationFn& act) {
  std::string last = g.add(name, Dense{units}, {from});
  if (batch_norm) last = g.add(name + "_bn", BatchNorm{}, {last});
  return g.add(name + "_act", Activation{act}, {last});
}

std::string head_pool(GraphSpec& g, const std::string& from, HeadPool pool) {
  if (pool == HeadPool::GlobalMax) return g.add("global_max_pool", GlobalMaxPool{}, {from});
  return g.add("global_avg_pool", GlobalAvgPool{}, {from});
}

void output_layer(GraphSpec& g, const std::string& from) {
  const std::string logits = g.add("logits", Dense{kClasses}, {from});
  g.add("softmax", SoftmaxOutput{}, {logits});
}

std::string reduce(GraphSpec& g, const std::string& from, const ArchitectureId& id) {
  if (id.normalization == Normalization::GlobalPoolOnly) return head_pool(g, from, id.head_pool);
  return g.add("flatten", Flatten{}, {from});
}

}  // namespace

ArchitectureId ArchitectureId::defaults(Architecture arch) {
  ArchitectureId id;
  id.arch = arch;
  switch (arch) {
    case Architecture::DSPN:
      id.normalization = Normalization::Dropout;
      break;
    case Architecture::DDSPN:
      id.normalization = Normalization::BatchNorm;
      break;
    case Architecture::TDSPN:
      id.normalization = Normalization::GlobalPoolOnly;
      break;
  }
  return id;
}

void ArchitectureId::validate() const {
  if (arch == Architecture::TDSPN && normalization == Normalization::Dropout)
    throw ValidationError("tdspn has no dense head to hold a dropout layer");
  if (activation.kind != ActivationKind::ReLU && !(activation.alpha > 0.0))
    throw ValidationError("activation alpha must be positive");
}

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::DSPN:
      return "dspn";
    case Architecture::DDSPN:
      return "ddspn";
    case Architecture::TDSPN:
      return "tdspn";
  }
  return "?";
}

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::Dropout:
      return "dropout";
    case Normalization::BatchNorm:
      return "batchnorm";
    case Normalization::GlobalPoolOnly:
      return "global_pool";
  }
  return "?";
}

std::string to_string(HeadPool h) { return h == HeadPool::GlobalMax ? "global_max" : "global_avg"; }

std::string to_string(const ActivationFn& fn) {
  std::ostringstream out;
  switch (fn.kind) {
    case ActivationKind::ReLU:
      return "relu";
    case ActivationKind::LeakyReLU:
      out << "leaky_relu";
      break;
    case ActivationKind::ELU:
      out << "elu";
      break;
  }
  if (fn != (fn.kind == ActivationKind::ELU ? ActivationFn::elu() : ActivationFn::leaky_relu()))
    out << ':' << fn.alpha;
  return out.str();
}

Architecture parse_architecture(const std::string& name) {
  if (name == "dspn") return Architecture::DSPN;
  if (name == "ddspn") return Architecture::DDSPN;
  if (name == "tdspn") return Architecture::TDSPN;
  throw ValidationError("unknown architecture '" + name + "' (expected dspn, ddspn or tdspn)");
}

Normalization parse_normalization(const std::string& name) {
  if (name == "dropout") return Normalization::Dropout;
  if (name == "batchnorm" || name == "batch_norm") return Normalization::BatchNorm;
  if (name == "global_pool" || name == "none") return Normalization::GlobalPoolOnly;
  throw ValidationError("unknown normalization '" + name + "'");
}

HeadPool parse_head_pool(const std::string& name) {
  if (name == "global_max") return HeadPool::GlobalMax;
  if (name == "global_avg") return HeadPool::GlobalAvg;
  throw ValidationError("unknown head pooling '" + name + "'");
}

ActivationFn parse_activation(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  ActivationFn fn;
  if (name == "relu")
    fn = ActivationFn::relu();
  else if (name == "leaky_relu" || name == "leakyrelu")
    fn = ActivationFn::leaky_relu();
  else if (name == "elu")
    fn = ActivationFn::elu();
  else
    throw ValidationError("unknown activation '" + text + "'");
  if (colon != std::string::npos) {
    const std::string a = text.substr(colon + 1);
    auto [end, ec] = std::from_chars(a.data(), a.data() + a.size(), fn.alpha);
    if (ec != std::errc() || end != a.data() + a.size() || fn.kind == ActivationKind::ReLU)
      throw ValidationError("bad activation parameter in '" + text + "'");
  }
  return fn;
}

std::string ArchitectureId::options_string() const {
  return "activation=" + to_string(activation) + ";normalization=" + to_string(normalization) +
         ";head_pool=" + to_string(head_pool);
}

ArchitectureId ArchitectureId::parse(const std::string& arch_name, const std::string& options) {
  ArchitectureId id = defaults(parse_architecture(arch_name));
  std::istringstream in(options);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("bad architecture option '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "activation")
      id.activation = parse_activation(value);
    else if (key == "normalization")
      id.normalization = parse_normalization(value);
    else if (key == "head_pool")
      id.head_pool = parse_head_pool(value);
    else
      throw ValidationError("unknown architecture option '" + key + "'");
  }
  id.validate();
  return id;
}

GraphSpec build_dspn(const ArchitectureId& id) {
  id.validate();
  const bool bn = id.normalization == Normalization::BatchNorm;
  const auto& act = id.activation;
  GraphSpec g("dspn");
  std::string x = g.add("input", InputLayer{{32, 32, 1}});
  x = conv_block(g, "conv1", x, {32, 3, Padding::Same}, bn, act);
  x = g.add("pool1", MaxPool2D{2, 2}, {x});
  x = conv_block(g, "conv2", x, {64, 3, Padding::Same}, bn, act);
  x = g.add("pool2", MaxPool2D{2, 2}, {x});
  x = conv_block(g, "conv3", x, {128, 3, Padding::Same}, bn, act);
  x = g.add("pool3", MaxPool2D{2, 2}, {x});
  x = conv_block(g, "conv4", x, {128, 1, Padding::Same}, bn, act);
  x = reduce(g, x, id);
  x = dense_block(g, "fc1", x, 256, bn, act);
  if (id.normalization == Normalization::Dropout) x = g.add("dropout", Dropout{kHeadDropout}, {x});
  x = dense_block(g, "fc2", x, 128, bn, act);
  output_layer(g, x);
  return g;
}

GraphSpec build_ddspn(const ArchitectureId& id) {
  id.validate();
  const bool bn = id.normalization == Normalization::BatchNorm;
  const auto& act = id.activation;
  GraphSpec g("ddspn");
  const std::string in = g.add("input", InputLayer{{32, 32, 1}});

  std::string a = conv_block(g, "a_conv1", in, {32, 3, Padding::Same}, bn, act);
  a = g.add("a_pool1", MaxPool2D{2, 2}, {a});
  a = conv_block(g, "a_conv2", a, {32, 1, Padding::Same}, bn, act);
  a = g.add("a_pool2", MaxPool2D{2, 2}, {a});

  std::string b = conv_block(g, "b_conv1", in, {64, 3, Padding::Same}, bn, act);
  b = g.add("b_pool1", MaxPool2D{2, 2}, {b});
  b = conv_block(g, "b_conv2", b, {128, 3, Padding::Same}, bn, act);
  b = g.add("b_pool2", MaxPool2D{2, 2}, {b});

  std::string x = g.add("concat", Concat{}, {a, b});
  x = reduce(g, x, id);
  x = dense_block(g, "fc1", x, 512, bn, act);
  if (id.normalization == Normalization::Dropout) x = g.add("dropout", Dropout{kHeadDropout}, {x});
  x = dense_block(g, "fc2", x, 256, bn, act);
  output_layer(g, x);
  return g;
}

GraphSpec build_tdspn(const ArchitectureId& id) {
  id.validate();
  const bool bn = id.normalization == Normalization::BatchNorm;
  const auto& act = id.activation;
  GraphSpec g("tdspn");
  const std::string in = g.add("input", InputLayer{{32, 32, 1}});

  std::string p1 = conv_block(g, "p1_conv1", in, {32, 3, Padding::Valid}, bn, act);  // 30
  p1 = g.add("p1_pool1", MaxPool2D{2, 2}, {p1});                                      // 15
  p1 = conv_block(g, "p1_conv2", p1, {64, 3, Padding::Valid}, bn, act);               // 13
  p1 = g.add("p1_pool2", MaxPool2D{2, 2}, {p1});                                      // 6
  p1 = conv_block(g, "p1_conv3", p1, {128, 3, Padding::Valid}, bn, act);              // 4

  std::string p2 = conv_block(g, "p2_conv1", in, {64, 5, Padding::Valid}, bn, act);  // 28
  p2 = g.add("p2_pool1", MaxPool2D{2, 2}, {p2});                                      // 14
  p2 = conv_block(g, "p2_conv2", p2, {256, 3, Padding::Valid}, bn, act);              // 12
  p2 = g.add("p2_pool2", MaxPool2D{3, 3}, {p2});                                      // 4

  std::string p3 = g.add("p3_pool", MaxPool2D{5, 5}, {in});                           // 6
  p3 = conv_block(g, "p3_conv", p3, {512, 3, Padding::Valid}, bn, act);               // 4

  std::string x = g.add("concat", Concat{}, {p1, p2, p3});
  x = head_pool(g, x, id.head_pool);
  output_layer(g, x);
  return g;
}

GraphSpec build(const ArchitectureId& id) {
  switch (id.arch) {
    case Architecture::DSPN:
      return build_dspn(id);
    case Architecture::DDSPN:
      return build_ddspn(id);
    case Architecture::TDSPN:
      return build_tdspn(id);
  }
  throw ValidationError("unknown architecture");
}

ParameterCount count_parameters(const Network& network) {
  ParameterCount c;
  for (const auto& p : network.param_layout())
    (p.trainable() ? c.trainable : c.non_trainable) += p.value.size();
  return c;
}

}  // namespace spn
