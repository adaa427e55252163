#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "spn/dataset.hpp"
#include "support.hpp"

using namespace spn;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// 167 nodules, 90 benign and 77 malignant, with 1-4 images each.
Manifest many_nodules() {
  Manifest m;
  for (std::size_t i = 0; i < 167; ++i)
    for (std::size_t j = 0; j <= i % 4; ++j)
      m.records.push_back({"n" + std::to_string(i) + "_" + std::to_string(j) + ".pgm", "nod-" + std::to_string(i),
                           "pat-" + std::to_string(i / 2), i < 90 ? Label::Benign : Label::Malignant,
                           std::nullopt, {}});
  return m;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("median labeling rules") {
    auto label = [](std::vector<int> r, double d = 10.0) { return label_from_ratings(r, d); };
    CHECK(label({1, 2, 2}).label == Label::Benign);
    CHECK(label({4, 5, 3}).label == Label::Malignant);
    CHECK(label({3, 3, 4}).exclusion == Exclusion::Indeterminate);
    CHECK(label({2, 4}).exclusion == Exclusion::TooFewRaters);
    CHECK(label({2, 2, 4, 4}).exclusion == Exclusion::Indeterminate);
    CHECK(label({2, 2, 3, 5}).label == Label::Benign);  // median 2.5
    CHECK(label({1, 4, 4, 5}).label == Label::Malignant);
    CHECK(label({1, 1, 1}, 2.9).exclusion == Exclusion::Size);
    CHECK(label({1, 1, 1}, 30.1).exclusion == Exclusion::Size);
    CHECK(label({1, 1, 1}, 3.0).label == Label::Benign);
    CHECK(label({5, 5, 5}, 30.0).label == Label::Malignant);
    CHECK(label({2, 4}, 50.0).exclusion == Exclusion::TooFewRaters);
    CHECK_THROWS_AS(label({0, 2, 3}), ValidationError);
    CHECK_THROWS_AS(label({2, 2, 6}), ValidationError);
    CHECK_THROWS_AS(label({2, 2, 2}, 0.0), ValidationError);
  }

  TEST_CASE("manifest round trip") {
    test::TempDir dir("manifest");
    Manifest m;
    m.records.push_back({"a.pgm", "n1", "p1", Label::Benign, 4.5, {1, 2, 2}});
    m.records.push_back({"sub/b.pgm", "n2", "p2", Label::Malignant, std::nullopt, {}});
    write_manifest(m, dir / "lidc.csv");
    const std::string text = slurp(dir / "lidc.csv");
    CHECK(text.find('\r') == std::string::npos);
    CHECK(text.rfind(kManifestHeader, 0) == 0);
    const Manifest back = read_manifest(dir / "lidc.csv");
    CHECK(back.records == m.records);
    CHECK(back.source == "lidc");
    CHECK(back.resolve(back.records[1]) == std::filesystem::absolute(dir.path()) / "sub/b.pgm");

    std::filesystem::create_directories(dir / "petct");
    write_manifest(m, dir / "petct" / "manifest.csv");
    CHECK(read_manifest(dir / "petct" / "manifest.csv").source == "petct");
  }

  TEST_CASE("malformed manifests are rejected") {
    test::TempDir dir("badmanifest");
    write_file(dir / "a.csv", "path,label\nx,benign\n");
    CHECK_THROWS_AS(read_manifest(dir / "a.csv"), FormatError);
    write_file(dir / "b.csv", std::string(kManifestHeader) + "\nx.pgm,n,p,unsure,,\n");
    CHECK_THROWS_AS(read_manifest(dir / "b.csv"), FormatError);
    write_file(dir / "c.csv", std::string(kManifestHeader) + "\nx.pgm,n,p,benign,abc,\n");
    CHECK_THROWS_AS(read_manifest(dir / "c.csv"), FormatError);
    write_file(dir / "d.csv", std::string(kManifestHeader) + "\nx.pgm,n,p,benign\n");
    CHECK_THROWS_AS(read_manifest(dir / "d.csv"), FormatError);
    CHECK_THROWS_AS(read_manifest(dir / "missing.csv"), ValidationError);
  }

  TEST_CASE("manifest validation") {
    Manifest m;
    CHECK_THROWS_AS(validate_manifest(m, false), ValidationError);
    m.records.push_back({"a", "n1", "p1", Label::Benign, {}, {}});
    CHECK_NOTHROW(validate_manifest(m, false));
    CHECK_THROWS_AS(validate_manifest(m, true), ValidationError);
    m.records.push_back({"b", "n1", "p1", Label::Malignant, {}, {}});
    CHECK_THROWS_AS(validate_manifest(m, false), ValidationError);
  }

  TEST_CASE("image cap per nodule keeps the first records") {
    Manifest m;
    for (int i = 0; i < 9; ++i) m.records.push_back({"i" + std::to_string(i), "n1", "p", Label::Benign, {}, {}});
    m.records.push_back({"other", "n2", "p", Label::Benign, {}, {}});
    const Manifest c = cap_images_per_nodule(m);
    CHECK(c.records.size() == 8);
    CHECK(c.records[6].image_path == "i6");
    CHECK(c.records[7].image_path == "other");
  }

  TEST_CASE("labeling a ratings table") {
    test::TempDir dir("ratings");
    write_file(dir / "raters.csv", std::string(kRatingsHeader) +
                                       "\n"
                                       "a.pgm,n1,p1,10,1|2|2\n"
                                       "b.pgm,n2,p1,10,4|4|5|5\n"
                                       "c.pgm,n3,p2,10,3|3|3\n"
                                       "d.pgm,n4,p3,40,5|5|5\n"
                                       "e.pgm,n5,p4,10,5|5\n");
    const LabelingSummary s = label_ratings_table(dir / "raters.csv");
    REQUIRE(s.manifest.records.size() == 2);
    CHECK(s.manifest.records[0].label == Label::Benign);
    CHECK(s.manifest.records[1].label == Label::Malignant);
    CHECK(s.excluded_records.at(Exclusion::Indeterminate) == 1);
    CHECK(s.excluded_records.at(Exclusion::Size) == 1);
    CHECK(s.excluded_records.at(Exclusion::TooFewRaters) == 1);
  }

  TEST_CASE("pgm encode and decode") {
    const Tensor img = synthesize_nodule(Label::Malignant, 3, 4);
    const auto bytes = encode_pgm(img);
    CHECK(bytes.size() == 13 + 1024);
    const Tensor back = decode_pgm(bytes);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back[i] - img[i]) <= 0.5 / 255 + 1e-12);
    CHECK(encode_pgm(back) == bytes);

    std::string commented = "P5\n# scanner export\n32  32\n255\n" + std::string(1024, '\x80');
    const Tensor c = decode_pgm(std::span(reinterpret_cast<const unsigned char*>(commented.data()), commented.size()));
    CHECK(c[0] == doctest::Approx(128.0 / 255.0));

    auto error_of = [](const std::string& s) -> std::string {
      try {
        decode_pgm(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
      } catch (const FormatError& e) {
        return e.what();
      }
      return "";
    };
    CHECK(error_of("P2\n32 32\n255\n").find("magic") != std::string::npos);
    CHECK(error_of("P5\n31 32\n255\n" + std::string(992, 'a')).find("width") != std::string::npos);
    CHECK(error_of("P5\n32 32\n65535\n").find("maxval") != std::string::npos);
    CHECK(error_of("P5\n32 32\n255\n" + std::string(1000, 'a')).find("1024") != std::string::npos);
    CHECK(error_of("P5\n32").find("height") != std::string::npos);
  }

  TEST_CASE("stratified folds") {
    const Manifest m = many_nodules();
    const FoldAssignment fa = stratified_kfold(m, 10, 5);
    std::vector<std::size_t> sizes = fa.fold_sizes();
    std::sort(sizes.begin(), sizes.end());
    CHECK(sizes == std::vector<std::size_t>{16, 16, 16, 17, 17, 17, 17, 17, 17, 17});
    // Each class is spread within one nodule of even.
    for (Label l : {Label::Benign, Label::Malignant}) {
      std::vector<std::size_t> per(10, 0);
      std::set<std::string> done;
      for (const auto& r : m.records)
        if (r.label == l && done.insert(r.nodule_id).second) ++per[fa.fold(r.nodule_id)];
      CHECK(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()) <= 1);
    }
    const FoldAssignment again = stratified_kfold(m, 10, 5);
    CHECK(again.fold_of == fa.fold_of);
    CHECK_FALSE(stratified_kfold(m, 10, 6).fold_of == fa.fold_of);
    CHECK_THROWS_AS(stratified_kfold(m, 1, 5), ValidationError);
    CHECK_THROWS_AS(stratified_kfold(m, 80, 5), ValidationError);
  }

  TEST_CASE("synthetic corpus") {
    test::TempDir dir("synth");
    const Manifest m = generate_synthetic_dataset(6, 9, dir / "corpus");
    CHECK(m.records.size() == 12);
    CHECK(m.count(Label::Malignant) == 6);
    const Manifest back = read_manifest(dir / "corpus" / "manifest.csv");
    CHECK(back.records == m.records);
    CHECK(back.source == "corpus");
    const ImageSet images = load_images(back);
    CHECK(images.images.size() == 12);
    CHECK(images.labels[11] == 1);
    CHECK(synthesize_nodule(Label::Benign, 9, 2) == synthesize_nodule(Label::Benign, 9, 2));
    CHECK_FALSE(synthesize_nodule(Label::Benign, 9, 2) == synthesize_nodule(Label::Benign, 10, 2));
    for (double v : synthesize_nodule(Label::Malignant, 9, 0).values()) CHECK((v >= 0.0 && v <= 1.0));
  }
}
