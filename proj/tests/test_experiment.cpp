#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "spn/experiment.hpp"
#include "spn/model_io.hpp"

using namespace spn;
using nlohmann::json;

namespace {

std::filesystem::path grid_dir() { return std::filesystem::path(SPN_SOURCE_DIR) / "grids"; }

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("config JSON accepts short and long forms") {
    const ExperimentConfig a = config_from_json(json::parse(R"({
      "architecture": "ddspn", "optimizer": "sgd", "regularizer": "none",
      "activation": "elu", "epochs": 3, "folds": 4, "seed": 9})"));
    CHECK(a.architecture.arch == Architecture::DDSPN);
    CHECK(a.optimizer == OptimizerSpec::sgd());
    CHECK(a.regularizer == RegularizerSpec::none());
    CHECK(a.epochs == 3);
    CHECK(a.folds == 4);
    CHECK(a.seed == 9);

    const ExperimentConfig b = config_from_json(json::parse(R"({
      "architecture": {"name": "tdspn", "head_pool": "global_avg"},
      "optimizer": {"kind": "adam", "learning_rate": 0.002},
      "regularizer": {"kind": "l1", "penalty": 0.01},
      "augmentation": {"enabled": true, "shift_max": 2}})"));
    CHECK(b.architecture.head_pool == HeadPool::GlobalAvg);
    CHECK(b.optimizer.learning_rate == 0.002);
    CHECK(b.regularizer == RegularizerSpec::l1(0.01));
    CHECK(b.augment);
    CHECK(config_from_json(config_to_json(b)) == b);
  }

  TEST_CASE("config JSON rejects unknown keys and bad values") {
    for (const char* text : {R"({"epoch": 3})", R"({"optimizer": "rmsprop"})", R"({"batch_size": 0})",
                             R"({"folds": 1})", R"({"regularizer": {"kind": "l2", "penalty": -1}})",
                             R"({"architecture": {"name": "dspn", "depth": 3}})", R"({"seed": "x"})",
                             R"({"augmentation": {"brightness": true}})", R"([1, 2])"}) {
      const std::string shown = text;
      CAPTURE(shown);
      CHECK_THROWS_AS(config_from_json(json::parse(text)), ValidationError);
    }
  }

  TEST_CASE("shipped configs parse") {
    for (const auto& e : std::filesystem::directory_iterator(std::filesystem::path(SPN_SOURCE_DIR) / "configs")) {
      CAPTURE(e.path().string());
      CHECK_NOTHROW(read_config(e.path()));
    }
  }

  TEST_CASE("row phrases resolve onto the base config") {
    const ExperimentConfig base;
    const ExperimentConfig c =
        resolve_row(base, {"Regularizer L1 at 0.01", "Adadelta Optimizer, Leaky ReLU", {}});
    CHECK(c.regularizer == RegularizerSpec::l1(0.01));
    CHECK(c.optimizer.kind == OptimizerKind::Adadelta);
    CHECK(c.architecture.activation == ActivationFn::leaky_relu());

    const ExperimentConfig d = resolve_row(base, {"Global Average Pooling", "No Regularizer", {}});
    CHECK(d.architecture.head_pool == HeadPool::GlobalAvg);
    CHECK(d.regularizer == RegularizerSpec::none());

    CHECK_THROWS_AS(resolve_row(base, {"Mystery Layer", "", {}}), ValidationError);
  }

  TEST_CASE("published grids have thirteen rows and ship as JSON") {
    for (Architecture a : {Architecture::DSPN, Architecture::DDSPN, Architecture::TDSPN}) {
      const GridFile g = paper_grid(a);
      CHECK(g.rows.size() == 13);
      for (std::size_t r = 0; r < g.rows.size(); ++r) {
        CAPTURE(r);
        const ExperimentConfig c = resolve_row(g.base, g.rows[r]);
        CHECK(c.architecture.arch == a);
        CHECK(in_paper_lattice(c));
      }
      const GridFile shipped = read_grid(grid_dir() / (to_string(a) + "_paper.json"));
      CHECK(shipped.rows == g.rows);
      CHECK(shipped.base == g.base);
      CHECK(shipped.conditions == g.conditions);
    }
  }

  TEST_CASE("lattice membership") {
    ExperimentConfig c;
    CHECK(in_paper_lattice(c));
    c.epochs = 7;
    c.seed = 99;
    CHECK(in_paper_lattice(c));
    c.optimizer = OptimizerSpec::adam(0.01);
    CHECK_FALSE(in_paper_lattice(c));
    c.optimizer = OptimizerSpec::adam();
    c.regularizer = RegularizerSpec::l2(0.5);
    CHECK_FALSE(in_paper_lattice(c));
    CHECK_THROWS_AS(c.validate(true), ValidationError);
    CHECK_NOTHROW(c.validate(false));
  }

  TEST_CASE("grid JSON round-trips and rejects unknown keys") {
    GridFile g = paper_grid(Architecture::TDSPN);
    g.base.epochs = 4;
    const GridFile back = grid_from_json(grid_to_json(g));
    CHECK(back.rows == g.rows);
    CHECK(back.base == g.base);
    CHECK_THROWS_AS(grid_from_json(json::parse(R"({"name": "x", "rows": [], "extra": 1})")), ValidationError);
  }

  TEST_CASE("crossval folds never see their held-out nodules") {
    const Manifest& m = test::small_corpus();
    const ImageSet data = load_images(m);
    const ExperimentConfig c = test::quick_config(Architecture::DSPN, 1);
    const FoldAssignment folds = stratified_kfold(m, c.folds, c.seed);
    std::mutex mu;
    std::size_t leaks = 0, batches = 0;
    const RunResult r = crossval(c, m, data, "iso", [&](std::size_t fold, std::span<const std::size_t> b) {
      std::lock_guard lock(mu);
      ++batches;
      for (std::size_t i : b)
        if (folds.fold(m.records[i].nodule_id) == fold) ++leaks;
    });
    CHECK(batches > 0);
    CHECK(leaks == 0);
    REQUIRE(r.folds.size() == 2);
    CHECK(r.folds[0].train_images + r.folds[0].test_images == m.records.size());
    CHECK(r.folds[0].test_images + r.folds[1].test_images == m.records.size());
    CHECK(r.underfit == (r.mean_train_accuracy < kUnderfitThreshold));
  }

  TEST_CASE("a one-row grid reproduces plain crossval") {
    const Manifest& m = test::small_corpus();
    GridFile g;
    g.name = "one";
    g.base = test::quick_config(Architecture::DSPN, 1);
    g.conditions = {"original"};
    g.rows = {{"No Regularizer", "Adam Optimizer, ReLU", {}}};
    const GridOutcome o = grid_run(g, m);
    REQUIRE(o.runs.size() == 1);
    CHECK(o.issues.empty());
    CHECK(o.runs[0].run_id == "01-original");

    ExperimentConfig c = g.base;
    c.regularizer = RegularizerSpec::none();
    const RunResult direct = crossval(c, m, load_images(m), "01-original");
    REQUIRE(direct.folds.size() == o.runs[0].folds.size());
    for (std::size_t f = 0; f < direct.folds.size(); ++f) {
      CHECK(direct.folds[f].test_accuracy == o.runs[0].folds[f].test_accuracy);
      CHECK(direct.folds[f].final_loss == o.runs[0].folds[f].final_loss);
    }
  }

  TEST_CASE("grid runs every cell except skips and bad rows") {
    const Manifest& m = test::small_corpus();
    GridFile g;
    g.name = "mixed";
    g.base = test::quick_config(Architecture::DSPN, 0);
    g.rows = {{"No Regularizer", "", {}},
              {"Flux Capacitor", "", {}},
              {"Regularizer L2 at 0.001", "", {"augmented"}},
              {"SGD Optimizer", "", {}}};
    std::size_t progress = 0;
    const GridOutcome o = grid_run(g, m, false, [&](const RunResult&) { ++progress; });
    REQUIRE(o.issues.size() == 1);
    CHECK(o.issues[0].row == 2);
    CHECK(o.issues[0].message.find("Flux Capacitor") != std::string::npos);
    // 3 good rows x 2 conditions, one of them skipped
    CHECK(o.runs.size() == 6);
    CHECK(std::count_if(o.runs.begin(), o.runs.end(), [](const RunResult& r) { return r.skipped; }) == 1);
    CHECK(progress == 6);
    CHECK(std::is_sorted(o.runs.begin(), o.runs.end(),
                         [](const RunResult& a, const RunResult& b) { return a.run_id < b.run_id; }));
    const std::string table = grid_table(g, o);
    CHECK(table.find('?') != std::string::npos);
    CHECK(table.find('-') != std::string::npos);
  }

  TEST_CASE("strict grid mode refuses rows outside the lattice") {
    GridFile g;
    g.name = "strict";
    g.base = test::quick_config(Architecture::DSPN, 0);
    g.conditions = {"original"};
    g.rows = {{"Regularizer L2 at 0.3", "", {}}, {"No Regularizer", "", {}}};
    const GridOutcome o = grid_run(g, test::small_corpus(), true);
    REQUIRE(o.issues.size() == 1);
    CHECK(o.issues[0].row == 1);
    CHECK(o.runs.size() == 1);
  }

  TEST_CASE("divergence inside a grid propagates") {
    GridFile g;
    g.name = "boom";
    g.base = test::quick_config(Architecture::DSPN, 2);
    g.base.optimizer = OptimizerSpec::sgd(1.0);
    g.base.regularizer = RegularizerSpec::l2(1e200);
    g.conditions = {"original"};
    g.rows = {{"Optimizer SGD", "", {}}};
    CHECK_THROWS_AS(grid_run(g, test::small_corpus()), DivergenceError);
  }

  TEST_CASE("evaluation on the training set matches training accuracy") {
    const Manifest& m = test::small_corpus();
    const ImageSet data = load_images(m);
    const TrainResult t = train(test::quick_config(Architecture::DSPN, 2), m);
    const double acc = evaluate_accuracy(t.model.network(), t.model.params, data, all_indices(data));
    const EvalResult e = evaluate_model(t.model, m);
    CHECK(e.accuracy == acc);
    CHECK(e.images == m.records.size());
    std::size_t total = 0;
    for (auto& row : e.confusion.counts)
      for (std::size_t v : row) total += v;
    CHECK(total == e.images);

    Manifest flipped = m;
    for (auto& r : flipped.records) r.label = r.label == Label::Benign ? Label::Malignant : Label::Benign;
    CHECK(evaluate_model(t.model, flipped).accuracy == doctest::Approx(1.0 - acc).epsilon(1e-12));

    test::TempDir dir("eval");
    save_model(t.model, dir / "m.spnw");
    CHECK(cross_dataset_eval(dir / "m.spnw", m).accuracy == acc);
  }

  TEST_CASE("crossval rejects one-class manifests and too many folds") {
    Manifest m = test::small_corpus();
    std::erase_if(m.records, [](const NoduleRecord& r) { return r.label == Label::Malignant; });
    CHECK_THROWS_AS(crossval(test::quick_config(), m), ValidationError);
    ExperimentConfig c = test::quick_config();
    c.folds = 500;
    CHECK_THROWS_AS(crossval(c, test::small_corpus()), ValidationError);
  }
}
