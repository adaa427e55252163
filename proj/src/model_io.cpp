#include "spn/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "spn/errors.hpp"

namespace spn {

namespace {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

class Writer {
 public:
  template <class T>
  void put(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
  }
  void str(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  std::vector<unsigned char> out;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> b) : bytes(b) {}

  template <class T>
  T get(const char* field) {
    need(sizeof(T), field);
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string str(const char* field) {
    const auto n = get<std::uint32_t>(field);
    need(n, field);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  void need(std::size_t n, const char* field) const {
    if (bytes.size() - pos < n)
      throw FormatError(std::string("model file truncated while reading ") + field);
  }
  bool done() const { return pos == bytes.size(); }

 private:
  std::span<const unsigned char> bytes;
  std::size_t pos = 0;
};

}  // namespace

std::vector<unsigned char> encode_model(const ModelState& state) {
  Writer w;
  w.out.insert(w.out.end(), kModelMagic, kModelMagic + 4);
  w.put(kModelVersion);
  w.str(to_string(state.architecture.arch));
  w.str(state.architecture.options_string());
  w.put(static_cast<std::uint32_t>(state.params.size()));
  for (const Param& p : state.params.items()) {
    w.str(p.name);
    w.put(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.put(static_cast<std::uint64_t>(d));
    for (double v : p.value.values()) w.put(v);
  }
  return std::move(w.out);
}

ModelState decode_model(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw FormatError("bad magic: not an SPNW model file");
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kModelVersion)
    throw FormatError("unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kModelVersion) + ")");
  const std::string arch = r.str("architecture");
  const std::string options = r.str("options");
  ModelState state;
  try {
    state.architecture = ArchitectureId::parse(arch, options);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("bad architecture field: ") + e.what());
  }
  const Network net = state.network();

  const auto count = r.get<std::uint32_t>("tensor count");
  const auto& layout = net.param_layout();
  if (count != layout.size())
    throw FormatError("tensor count " + std::to_string(count) + " does not match " + arch + " (" +
                      std::to_string(layout.size()) + " tensors)");
  for (std::uint32_t i = 0; i < count; ++i) {
    Param p;
    p.name = r.str("tensor name");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank > 8) throw FormatError("tensor '" + p.name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>("tensor dims"));
    if (shape != layout[i].value.shape() || p.name != layout[i].name)
      throw FormatError("tensor '" + p.name + "' " + to_string(shape) + " does not match " + arch +
                        " parameter '" + layout[i].name + "' " + to_string(layout[i].value.shape()));
    r.need(shape_size(shape) * sizeof(double), "tensor values");
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = r.get<double>("tensor values");
    p.role = layout[i].role;
    p.value = Tensor(shape, std::move(values));
    state.params.items().push_back(std::move(p));
  }
  if (!r.done()) throw FormatError("trailing bytes after the last tensor");
  net.check_params(state.params);
  return state;
}

void save_model(const ModelState& state, const std::filesystem::path& path) {
  const auto bytes = encode_model(state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing model file " + path.string());
}

ModelState load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open model file " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

ModelState load_model(const std::filesystem::path& path, const ArchitectureId& expected) {
  ModelState state = load_model(path);
  if (!(state.architecture == expected))
    throw FormatError("model file holds " + to_string(state.architecture.arch) + " (" +
                      state.architecture.options_string() + "), expected " + to_string(expected.arch) + " (" +
                      expected.options_string() + ")");
  return state;
}

}  // namespace spn
