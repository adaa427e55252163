#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "spn/model_io.hpp"

using namespace spn;

namespace {

ModelState random_model(ArchitectureId id, std::uint64_t seed) {
  Rng rng = make_rng(seed, {});
  ModelState s{id, Network(build(id)).init_params(rng)};
  // make the batch-norm statistics non-trivial too
  for (auto& p : s.params.items())
    for (double& v : p.value.values()) v += 1e-3 * std::uniform_real_distribution<double>(0, 1)(rng);
  return s;
}

}  // namespace

TEST_SUITE("model_io") {
  TEST_CASE("encode/decode round-trips bitwise") {
    for (Architecture a : {Architecture::DSPN, Architecture::DDSPN, Architecture::TDSPN}) {
      ArchitectureId id = ArchitectureId::defaults(a);
      id.activation = ActivationFn::elu();
      const ModelState s = random_model(id, 3);
      const auto bytes = encode_model(s);
      const ModelState back = decode_model(bytes);
      CHECK(back.architecture == s.architecture);
      CHECK(back.params == s.params);
      CHECK(encode_model(back) == bytes);
    }
  }

  TEST_CASE("saved files reload with identical predictions") {
    const Manifest& m = test::small_corpus();
    const ImageSet data = load_images(m);
    const ModelState s = random_model(ArchitectureId::defaults(Architecture::DSPN), 4);
    test::TempDir dir("io");
    save_model(s, dir / "a.spnw");
    const ModelState back = load_model(dir / "a.spnw");
    const auto idx = all_indices(data);
    CHECK(predict_classes(back.network(), back.params, data, idx) ==
          predict_classes(s.network(), s.params, data, idx));
  }

  TEST_CASE("every truncation is rejected") {
    const auto bytes = encode_model(random_model(ArchitectureId::defaults(Architecture::TDSPN), 5));
    // every header prefix, then a stride through the payload
    for (std::size_t n = 0; n < bytes.size(); n += (n < 256 ? 1 : 997)) {
      CAPTURE(n);
      CHECK_THROWS_AS(decode_model(std::span(bytes.data(), n)), FormatError);
    }
    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(decode_model(longer), FormatError);
  }

  TEST_CASE("bad magic, version and architecture") {
    const ModelState s = random_model(ArchitectureId::defaults(Architecture::DSPN), 6);
    auto bytes = encode_model(s);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_model(bad), doctest::Contains("magic"), FormatError);
    bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_WITH_AS(decode_model(bad), doctest::Contains("version"), FormatError);

    test::TempDir dir("io");
    save_model(s, dir / "d.spnw");
    CHECK_NOTHROW(load_model(dir / "d.spnw", s.architecture));
    CHECK_THROWS_AS(load_model(dir / "d.spnw", ArchitectureId::defaults(Architecture::DDSPN)), FormatError);
    CHECK_THROWS(load_model(dir / "missing.spnw"));
  }

  TEST_CASE("tensors from another architecture do not load") {
    // DSPN weights relabelled as DDSPN
    const ModelState s = random_model(ArchitectureId::defaults(Architecture::DSPN), 7);
    ModelState other{ArchitectureId::defaults(Architecture::DDSPN), s.params};
    CHECK_THROWS(decode_model(encode_model(other)));
  }
}
