#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "spn/errors.hpp"
#include "spn/experiment.hpp"
#include "spn/kernels.hpp"
#include "spn/model_io.hpp"
#include "spn/results.hpp"

using namespace spn;

namespace {

void print_eval(const EvalResult& r) {
  std::printf("images %zu\naccuracy %.4f\n", r.images, r.accuracy);
  std::printf("confusion (rows true, cols predicted: benign malignant)\n");
  std::printf("  benign    %6zu %6zu\n", r.confusion.counts[0][0], r.confusion.counts[0][1]);
  std::printf("  malignant %6zu %6zu\n", r.confusion.counts[1][0], r.confusion.counts[1][1]);
}

void print_run(const RunResult& r) {
  if (r.skipped) {
    std::fprintf(stderr, "%s: skipped\n", r.run_id.c_str());
    return;
  }
  std::fprintf(stderr, "%s: mean test %.4f, mean train %.4f%s (%.1fs)\n", r.run_id.c_str(), r.mean_test_accuracy,
               r.mean_train_accuracy, r.underfit ? ", underfit" : "", r.wall_seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pulmonary nodule CNN experiments"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (default: all)");

  auto* synth = app.add_subcommand("synth", "write a synthetic nodule corpus");
  std::string synth_out;
  std::size_t n_per_class = 200;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--n-per-class", n_per_class, "images per class");
  synth->add_option("--seed", synth_seed, "generator seed");

  auto* label = app.add_subcommand("label", "turn a rater table into a labeled manifest");
  std::string ratings, label_out;
  std::size_t cap = 7;
  label->add_option("--ratings", ratings, "CSV: image_path,nodule_id,patient_id,diameter_mm,ratings")->required();
  label->add_option("--out", label_out, "manifest to write")->required();
  label->add_option("--cap", cap, "images kept per nodule");

  std::string config, manifest_path, out;
  auto* train_cmd = app.add_subcommand("train", "train on a whole manifest and save the model");
  train_cmd->add_option("--config", config, "experiment config JSON")->required();
  train_cmd->add_option("--manifest", manifest_path, "manifest CSV")->required();
  train_cmd->add_option("--out", out, "model file")->required();

  auto* cv = app.add_subcommand("crossval", "k-fold cross-validation");
  cv->add_option("--config", config, "experiment config JSON")->required();
  cv->add_option("--manifest", manifest_path, "manifest CSV")->required();
  cv->add_option("--out", out, "results CSV")->required();

  auto* grid = app.add_subcommand("grid", "run a tuning grid");
  std::string grid_path;
  bool paper_mode = false;
  grid->add_option("--grid", grid_path, "grid JSON")->required();
  grid->add_option("--manifest", manifest_path, "manifest CSV")->required();
  grid->add_option("--out", out, "results CSV")->required();
  grid->add_flag("--paper-grid", paper_mode, "only accept the published tuning rows");

  auto* eval = app.add_subcommand("eval", "evaluate a saved model on a manifest");
  std::string model_path;
  eval->add_option("--model", model_path, "model file")->required();
  eval->add_option("--manifest", manifest_path, "manifest CSV")->required();

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) kernels::set_num_threads(threads);

  try {
    if (*synth) {
      const Manifest m = generate_synthetic_dataset(n_per_class, synth_seed, synth_out);
      std::printf("wrote %zu images to %s\n", m.records.size(), synth_out.c_str());
    } else if (*label) {
      const LabelingSummary s = label_ratings_table(ratings, cap);
      write_manifest(s.manifest, label_out);
      std::printf("kept %zu records (%zu benign, %zu malignant)\n", s.manifest.records.size(),
                  s.manifest.count(Label::Benign), s.manifest.count(Label::Malignant));
      for (const auto& [why, n] : s.excluded_records) std::printf("excluded %zu (%s)\n", n, to_string(why).c_str());
    } else if (*train_cmd) {
      const ExperimentConfig c = read_config(config);
      const Manifest m = read_manifest(manifest_path);
      const TrainResult r = train(c, m);
      for (std::size_t e = 0; e < r.history.size(); ++e)
        std::fprintf(stderr, "epoch %3zu  loss %.4f  penalty %.4f  train_acc %.4f\n", e + 1, r.history[e].loss,
                     r.history[e].penalty, r.history[e].train_accuracy);
      save_model(r.model, out);
      std::printf("saved %s\n", out.c_str());
    } else if (*cv) {
      const ExperimentConfig c = read_config(config);
      const Manifest m = read_manifest(manifest_path);
      const RunResult r = crossval(c, m);
      emit_results({r}, out);
      print_run(r);
      std::printf("mean test accuracy %.4f\n", r.mean_test_accuracy);
    } else if (*grid) {
      const GridFile g = read_grid(grid_path);
      const Manifest m = read_manifest(manifest_path);
      const GridOutcome o = grid_run(g, m, paper_mode, print_run);
      for (const auto& issue : o.issues) std::fprintf(stderr, "skipped %s\n", issue.message.c_str());
      if (o.runs.empty()) throw ValidationError("no grid row could be run");
      emit_results(o.runs, out);
      std::printf("%s", grid_table(g, o).c_str());
    } else if (*eval) {
      print_eval(cross_dataset_eval(model_path, read_manifest(manifest_path)));
    }
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
