#include "spn/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "spn/errors.hpp"
#include "spn/model_io.hpp"

namespace spn {

using nlohmann::json;

namespace {

void check_keys(const json& j, const char* what, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end())
      throw ValidationError(std::string("unknown key '") + key + "' in " + what);
  }
}

OptimizerSpec default_optimizer(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::SGD:
      return OptimizerSpec::sgd();
    case OptimizerKind::Adam:
      return OptimizerSpec::adam();
    case OptimizerKind::Adadelta:
      return OptimizerSpec::adadelta();
  }
  return {};
}

OptimizerKind parse_optimizer_kind(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "adadelta" || name == "anadelta") return OptimizerKind::Adadelta;
  throw ValidationError("unknown optimizer '" + name + "' (expected sgd, adam or adadelta)");
}

RegularizerKind parse_regularizer_kind(const std::string& name) {
  if (name == "none") return RegularizerKind::None;
  if (name == "l1") return RegularizerKind::L1;
  if (name == "l2") return RegularizerKind::L2;
  throw ValidationError("unknown regularizer '" + name + "' (expected none, l1 or l2)");
}

ExperimentConfig parse_config(const json& j, ExperimentConfig c) {
  check_keys(j, "config",
             {"architecture", "optimizer", "regularizer", "activation", "augmentation", "batch_size",
              "epochs", "folds", "seed"});
  if (j.contains("architecture")) {
    const json& a = j["architecture"];
    if (a.is_string()) {
      const ActivationFn act = c.architecture.activation;
      c.architecture = ArchitectureId::defaults(parse_architecture(a.get<std::string>()));
      c.architecture.activation = act;
    } else {
      check_keys(a, "architecture", {"name", "normalization", "head_pool"});
      if (a.contains("name")) {
        const ActivationFn act = c.architecture.activation;
        c.architecture = ArchitectureId::defaults(parse_architecture(a["name"].get<std::string>()));
        c.architecture.activation = act;
      }
      if (a.contains("normalization"))
        c.architecture.normalization = parse_normalization(a["normalization"].get<std::string>());
      if (a.contains("head_pool")) c.architecture.head_pool = parse_head_pool(a["head_pool"].get<std::string>());
    }
  }
  if (j.contains("activation")) c.architecture.activation = parse_activation(j["activation"].get<std::string>());
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    if (o.is_string()) {
      c.optimizer = default_optimizer(parse_optimizer_kind(o.get<std::string>()));
    } else {
      check_keys(o, "optimizer", {"kind", "learning_rate"});
      if (o.contains("kind")) c.optimizer = default_optimizer(parse_optimizer_kind(o["kind"].get<std::string>()));
      if (o.contains("learning_rate")) c.optimizer.learning_rate = o["learning_rate"].get<double>();
    }
  }
  if (j.contains("regularizer")) {
    const json& r = j["regularizer"];
    auto set_kind = [&](const std::string& name) {
      const RegularizerKind kind = parse_regularizer_kind(name);
      c.regularizer = kind == RegularizerKind::None ? RegularizerSpec::none()
                      : kind == RegularizerKind::L1 ? RegularizerSpec::l1()
                                                    : RegularizerSpec::l2();
    };
    if (r.is_string()) {
      set_kind(r.get<std::string>());
    } else {
      check_keys(r, "regularizer", {"kind", "penalty"});
      if (r.contains("kind")) set_kind(r["kind"].get<std::string>());
      if (r.contains("penalty")) c.regularizer.penalty = r["penalty"].get<double>();
    }
  }
  if (j.contains("augmentation")) {
    const json& a = j["augmentation"];
    check_keys(a, "augmentation", {"enabled", "shift_max", "rotation_max_deg", "hflip", "vflip", "brightness"});
    if (a.contains("enabled")) c.augment = a["enabled"].get<bool>();
    if (a.contains("shift_max")) c.augmentation.shift_max = a["shift_max"].get<int>();
    if (a.contains("rotation_max_deg")) c.augmentation.rotation_max_deg = a["rotation_max_deg"].get<double>();
    if (a.contains("hflip")) c.augmentation.hflip = a["hflip"].get<bool>();
    if (a.contains("vflip")) c.augmentation.vflip = a["vflip"].get<bool>();
    if (a.contains("brightness")) c.augmentation.brightness = a["brightness"].get<bool>();
  }
  auto count = [&](const char* key, std::size_t& field) {
    if (!j.contains(key)) return;
    const json& v = j[key];
    if (!v.is_number_unsigned()) throw ValidationError(std::string(key) + " must be a non-negative integer");
    field = v.get<std::size_t>();
  };
  count("batch_size", c.batch_size);
  count("epochs", c.epochs);
  count("folds", c.folds);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ValidationError("seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  return c;
}

json parse_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ValidationError(std::string("cannot open ") + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + " " + path.string() + ": " + e.what());
  }
}

// Lowercase, single-spaced, trimmed.
std::string normalize_phrase(const std::string& s) {
  std::string out;
  bool space = false;
  for (unsigned char ch : s) {
    if (std::isspace(ch)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(ch));
  }
  return out;
}

void apply_phrase(ExperimentConfig& c, const std::string& raw) {
  static const std::regex no_reg("no regularizer");
  static const std::regex reg("regularizer (l1|l2)(?: at ([0-9]*\\.?[0-9]+(?:e-?[0-9]+)?))?(?: penalty)?");
  static const std::regex bn("batch ?normalization");
  static const std::regex dropout("dropout");
  static const std::regex gmp("global ?max ?pooling");
  static const std::regex gap("global ?average ?pooling");
  static const std::regex opt("(?:optimizer )?(sgd|adam|adadelta|anadelta)(?: optimizer)?");
  static const std::regex act("(?:activation function )?(relu|leaky ?relu|elu)");

  const std::string p = normalize_phrase(raw);
  std::smatch m;
  if (p.empty()) return;
  if (std::regex_match(p, no_reg)) {
    c.regularizer = RegularizerSpec::none();
  } else if (std::regex_match(p, m, reg)) {
    const double penalty = m[2].matched ? std::stod(m[2].str()) : 0.001;
    c.regularizer = m[1] == "l1" ? RegularizerSpec::l1(penalty) : RegularizerSpec::l2(penalty);
  } else if (std::regex_match(p, bn)) {
    c.architecture.normalization = Normalization::BatchNorm;
  } else if (std::regex_match(p, dropout)) {
    c.architecture.normalization = Normalization::Dropout;
  } else if (std::regex_match(p, gmp)) {
    c.architecture.normalization = Normalization::GlobalPoolOnly;
    c.architecture.head_pool = HeadPool::GlobalMax;
  } else if (std::regex_match(p, gap)) {
    c.architecture.normalization = Normalization::GlobalPoolOnly;
    c.architecture.head_pool = HeadPool::GlobalAvg;
  } else if (std::regex_match(p, m, opt)) {
    c.optimizer = default_optimizer(parse_optimizer_kind(m[1].str()));
  } else if (std::regex_match(p, m, act)) {
    const std::string a = m[1].str();
    c.architecture.activation = a == "relu"  ? ActivationFn::relu()
                                : a == "elu" ? ActivationFn::elu()
                                             : ActivationFn::leaky_relu();
  } else {
    throw ValidationError("unrecognized setting '" + raw + "'");
  }
}

void apply_phrases(ExperimentConfig& c, const std::string& list) {
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) apply_phrase(c, item);
}

struct PaperRow {
  const char* tuning;
  const char* other;
  bool skipped;
};

// Row labels of the three published tuning tables; skipped rows were not run
// on any dataset.
const std::vector<PaperRow>& paper_rows(Architecture arch) {
  static const std::vector<PaperRow> dspn = {
      {"No Regularizer", "Adam Optimizer, ReLU", false},
      {"Regularizer L2 at 0.01 penalty", "Adam Optimizer, ReLU", false},
      {"Regularizer L2 at 0.001", "Adam Optimizer, ReLU", false},
      {"Regularizer L1", "Adam Optimizer, ReLU", false},
      {"Batch Normalization", "Regularizer L2 at 0.001, ReLU, Adam", false},
      {"Global Max Pooling", "Regularizer L2 at 0.001, ReLU, Adam", false},
      {"Global Average Pooling", "Regularizer L2 at 0.001, ReLU, Adam", false},
      {"Optimizer SGD", "Regularizer L2 at 0.001, ReLU", false},
      {"Optimizer Adam", "Regularizer L2 at 0.001, ReLU", false},
      {"Optimizer Anadelta", "Regularizer L2 at 0.001, ReLU", false},
      {"Activation Function ReLU", "Regularizer L2 at 0.001, Adam Optimizer", false},
      {"Activation Function LeakyReLU", "Regularizer L2 at 0.001, Adam Optimizer", false},
      {"Activation Function ELU", "Regularizer L2 at 0.001, Adam Optimizer", false},
  };
  static const std::vector<PaperRow> ddspn = {
      {"No Regularizer", "Adam Optimizer, ReLU, Batch Normalization", false},
      {"Regularizer L2 at 0.01 penalty", "Adam Optimizer, ReLU, Batch Normalization", false},
      {"Regularizer L2 at 0.001", "Adam Optimizer, ReLU, Batch Normalization", false},
      {"Regularizer L1", "Adam Optimizer, ReLU, Batch Normalization", false},
      {"Dropout", "Regularizer L2 at 0.001, ReLU, Adam", false},
      {"Global Max Pooling", "Regularizer L2 at 0.001, ReLU, Adam", true},
      {"Global Average Pooling", "Regularizer L2 at 0.001, ReLU, Adam", false},
      {"Optimizer SGD", "Regularizer L2 at 0.001, ReLU, Batch Normalization", false},
      {"Optimizer Adam", "Regularizer L2 at 0.001, ReLU, Batch Normalization", false},
      {"Optimizer Anadelta", "Regularizer L2 at 0.001, ReLU, Batch Normalization", false},
      {"Activation Function ReLU", "Regularizer L2 at 0.001, Adam Optimizer, Batch Normalization", false},
      {"Activation Function LeakyReLU", "Regularizer L2 at 0.001, Adam Optimizer, Batch Normalization", false},
      {"Activation Function ELU", "Regularizer L2 at 0.001, Adam Optimizer, Batch Normalization", false},
  };
  static const std::vector<PaperRow> tdspn = {
      {"No Regularizer", "Adam Optimizer, ReLU, Batch Normalization", true},
      {"Regularizer L2 at 0.01 penalty", "Adam Optimizer, ReLU, Batch Normalization", true},
      {"Regularizer L2 at 0.001", "Adam Optimizer, ReLU, Batch Normalization", false},
      {"Regularizer L1", "Adam Optimizer, ReLU, Batch Normalization", false},
      {"Global Average Pooling", "Regularizer L2 at 0.001, ReLU", false},
      {"Global Max Pooling", "Regularizer L2 at 0.001, ReLU", false},
      {"Global Max Pooling", "Regularizer L2 at 0.001, ELU", false},
      {"Optimizer SGD", "Regularizer L2 at 0.001, ReLU, GlobalMaxPooling", false},
      {"Optimizer Adam", "Regularizer L2 at 0.001, ReLU, GlobalMaxPooling", false},
      {"Optimizer Anadelta", "Regularizer L2 at 0.001, ReLU, GlobalMaxPooling", false},
      {"Activation Function ReLU", "Regularizer L2 at 0.001, Adam Optimizer, Batch Normalization", false},
      {"Activation Function ReLU", "Regularizer L2 at 0.001, Adam Optimizer, GlobalMaxPooling", false},
      {"Activation Function Leaky ReLU", "Regularizer L2 at 0.001, Adam Optimizer, Batch Normalization", false},
  };
  switch (arch) {
    case Architecture::DSPN:
      return dspn;
    case Architecture::DDSPN:
      return ddspn;
    case Architecture::TDSPN:
      return tdspn;
  }
  return dspn;
}

ExperimentConfig default_config(Architecture arch) {
  ExperimentConfig c;
  c.architecture = ArchitectureId::defaults(arch);
  return c;
}

}  // namespace

// Config ---------------------------------------------------------------------

void ExperimentConfig::validate(bool paper_grid) const {
  architecture.validate();
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (folds < 2) throw ValidationError("folds must be at least 2");
  if (!std::isfinite(optimizer.learning_rate) || optimizer.learning_rate <= 0.0)
    throw ValidationError("learning_rate must be positive and finite");
  if (!std::isfinite(regularizer.penalty) || regularizer.penalty < 0.0)
    throw ValidationError("regularizer penalty must be non-negative and finite");
  augmentation.validate(paper_grid);
  if (paper_grid && !in_paper_lattice(*this))
    throw ValidationError("setting is not one of the published " + to_string(architecture.arch) +
                          " tuning rows (" + architecture.options_string() + ";optimizer=" +
                          to_string(optimizer.kind) + ";regularizer=" + to_string(regularizer.kind) + ")");
}

ExperimentConfig config_from_json(const json& j, ExperimentConfig base) {
  ExperimentConfig c;
  try {
    c = parse_config(j, std::move(base));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  return json{
      {"architecture",
       {{"name", to_string(c.architecture.arch)},
        {"normalization", to_string(c.architecture.normalization)},
        {"head_pool", to_string(c.architecture.head_pool)}}},
      {"activation", to_string(c.architecture.activation)},
      {"optimizer", {{"kind", to_string(c.optimizer.kind)}, {"learning_rate", c.optimizer.learning_rate}}},
      {"regularizer", {{"kind", to_string(c.regularizer.kind)}, {"penalty", c.regularizer.penalty}}},
      {"augmentation",
       {{"enabled", c.augment},
        {"shift_max", c.augmentation.shift_max},
        {"rotation_max_deg", c.augmentation.rotation_max_deg},
        {"hflip", c.augmentation.hflip},
        {"vflip", c.augmentation.vflip},
        {"brightness", c.augmentation.brightness}}},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"folds", c.folds},
      {"seed", c.seed},
  };
}

ExperimentConfig read_config(const std::filesystem::path& path) {
  return config_from_json(parse_json_file(path, "config"));
}

// Cross-validation -----------------------------------------------------------

RunResult crossval(const ExperimentConfig& config, const Manifest& manifest, const ImageSet& images,
                   std::string run_id, const FoldBatchObserver& observer) {
  config.validate();
  validate_manifest(manifest, true);
  if (images.images.size() != manifest.records.size())
    throw ValidationError("image set does not match the manifest");
  const auto start = std::chrono::steady_clock::now();

  const FoldAssignment assignment = stratified_kfold(manifest, config.folds, config.seed);
  const std::size_t k = config.folds;
  std::vector<std::size_t> fold_of(manifest.records.size());
  for (std::size_t i = 0; i < fold_of.size(); ++i) fold_of[i] = assignment.fold(manifest.records[i].nodule_id);

  RunResult run;
  run.run_id = std::move(run_id);
  run.config = config;
  run.dataset = manifest.source;
  run.folds.resize(k);
  std::vector<std::exception_ptr> errors(k);

  const bool parallel = omp_get_max_threads() > 1 && !omp_in_parallel();
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (std::size_t f = 0; f < k; ++f) {
    try {
      std::vector<std::size_t> train_idx, test_idx;
      for (std::size_t i = 0; i < fold_of.size(); ++i) (fold_of[i] == f ? test_idx : train_idx).push_back(i);
      BatchObserver batches;
      if (observer) batches = [&observer, f](std::span<const std::size_t> b) { observer(f, b); };
      const TrainResult trained = train(config, images, train_idx, f + 1, batches);
      const Network net = trained.model.network();
      FoldResult& r = run.folds[f];
      r.fold = f;
      r.train_images = train_idx.size();
      r.test_images = test_idx.size();
      r.train_accuracy = evaluate_accuracy(net, trained.model.params, images, train_idx);
      r.test_accuracy = evaluate_accuracy(net, trained.model.params, images, test_idx);
      r.final_loss = trained.history.empty() ? 0.0 : trained.history.back().loss;
    } catch (...) {
      errors[f] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (const FoldResult& r : run.folds) {
    run.mean_test_accuracy += r.test_accuracy;
    run.mean_train_accuracy += r.train_accuracy;
  }
  run.mean_test_accuracy /= static_cast<double>(k);
  run.mean_train_accuracy /= static_cast<double>(k);
  run.underfit = run.mean_train_accuracy < kUnderfitThreshold;
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

RunResult crossval(const ExperimentConfig& config, const Manifest& manifest) {
  validate_manifest(manifest, true);
  return crossval(config, manifest, load_images(manifest));
}

// Grids ----------------------------------------------------------------------

GridFile grid_from_json(const json& j) {
  GridFile g;
  try {
    check_keys(j, "grid", {"name", "base", "conditions", "rows"});
    if (j.contains("name")) g.name = j["name"].get<std::string>();
    if (j.contains("base")) g.base = parse_config(j["base"], g.base);
    g.base.validate();
    if (j.contains("conditions")) g.conditions = j["conditions"].get<std::vector<std::string>>();
    if (g.conditions.empty()) throw ValidationError("grid has no conditions");
    std::set<std::string> seen;
    for (const auto& c : g.conditions) {
      if (c != "original" && c != "augmented")
        throw ValidationError("unknown grid condition '" + c + "' (expected original or augmented)");
      if (!seen.insert(c).second) throw ValidationError("duplicate grid condition '" + c + "'");
    }
    if (!j.contains("rows") || !j["rows"].is_array()) throw ValidationError("grid needs a rows array");
    // Row contents are checked when the grid runs, so one bad row does not
    // sink the others.
    for (const json& r : j["rows"]) {
      GridRow row;
      if (r.is_object()) {
        if (r.contains("tuning") && r["tuning"].is_string()) row.tuning = r["tuning"].get<std::string>();
        if (r.contains("other") && r["other"].is_string()) row.other = r["other"].get<std::string>();
        if (r.contains("skip")) {
          if (r["skip"].is_boolean()) {
            if (r["skip"].get<bool>()) row.skip = g.conditions;
          } else if (r["skip"].is_array()) {
            row.skip = r["skip"].get<std::vector<std::string>>();
          }
        }
        for (const auto& [key, value] : r.items()) {
          (void)value;
          if (key != "tuning" && key != "other" && key != "skip") row.other += ", <unknown key " + key + ">";
        }
      } else {
        row.tuning = "<row is not an object>";
      }
      g.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad grid file: ") + e.what());
  }
  return g;
}

json grid_to_json(const GridFile& g) {
  json rows = json::array();
  for (const GridRow& r : g.rows) {
    json row{{"tuning", r.tuning}, {"other", r.other}};
    if (!r.skip.empty()) row["skip"] = r.skip == g.conditions ? json(true) : json(r.skip);
    rows.push_back(row);
  }
  json base = config_to_json(g.base);
  return json{{"name", g.name}, {"base", base}, {"conditions", g.conditions}, {"rows", rows}};
}

GridFile read_grid(const std::filesystem::path& path) { return grid_from_json(parse_json_file(path, "grid")); }

ExperimentConfig resolve_row(const ExperimentConfig& base, const GridRow& row) {
  if (normalize_phrase(row.tuning).empty()) throw ValidationError("row has no tuning parameter");
  ExperimentConfig c = base;
  apply_phrases(c, row.other);
  apply_phrases(c, row.tuning);
  return c;
}

GridFile paper_grid(Architecture arch) {
  GridFile g;
  g.name = to_string(arch) + " tuning grid";
  g.base = default_config(arch);
  for (const PaperRow& r : paper_rows(arch)) {
    GridRow row{r.tuning, r.other, {}};
    if (r.skipped) row.skip = g.conditions;
    g.rows.push_back(std::move(row));
  }
  return g;
}

bool in_paper_lattice(const ExperimentConfig& config) {
  const ExperimentConfig base = default_config(config.architecture.arch);
  for (const PaperRow& r : paper_rows(config.architecture.arch)) {
    const ExperimentConfig c = resolve_row(base, GridRow{r.tuning, r.other, {}});
    if (c.architecture == config.architecture && c.optimizer == config.optimizer &&
        c.regularizer == config.regularizer)
      return true;
  }
  return false;
}

std::string grid_run_id(std::size_t row, const std::string& condition) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02zu-", row);
  return buf + condition;
}

GridOutcome grid_run(const GridFile& grid, const Manifest& manifest, bool paper_mode,
                     const std::function<void(const RunResult&)>& progress) {
  validate_manifest(manifest, true);
  const ImageSet images = load_images(manifest);
  GridOutcome out;
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    const GridRow& row = grid.rows[r];
    ExperimentConfig config;
    try {
      config = resolve_row(grid.base, row);
      config.validate(paper_mode);
      for (const auto& s : row.skip)
        if (std::find(grid.conditions.begin(), grid.conditions.end(), s) == grid.conditions.end())
          throw ValidationError("skip names unknown condition '" + s + "'");
    } catch (const ValidationError& e) {
      out.issues.push_back({r + 1, "row " + std::to_string(r + 1) + " ('" + row.tuning + "' / '" + row.other +
                                       "'): " + e.what()});
      continue;
    }
    for (const std::string& condition : grid.conditions) {
      ExperimentConfig c = config;
      c.augment = condition == "augmented";
      RunResult result;
      const std::string id = grid_run_id(r + 1, condition);
      if (std::find(row.skip.begin(), row.skip.end(), condition) != row.skip.end()) {
        result.run_id = id;
        result.config = c;
        result.dataset = manifest.source;
        result.skipped = true;
      } else {
        result = crossval(c, manifest, images, id);
      }
      if (progress) progress(result);
      out.runs.push_back(std::move(result));
    }
  }
  std::stable_sort(out.runs.begin(), out.runs.end(),
                   [](const RunResult& a, const RunResult& b) { return a.run_id < b.run_id; });
  return out;
}

std::string grid_table(const GridFile& grid, const GridOutcome& outcome) {
  std::ostringstream t;
  t << "Parameter for tuning\tOther Parameters";
  for (const auto& c : grid.conditions) t << '\t' << c;
  t << '\n';
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    t << grid.rows[r].tuning << '\t' << grid.rows[r].other;
    for (const auto& c : grid.conditions) {
      const std::string id = grid_run_id(r + 1, c);
      auto it = std::find_if(outcome.runs.begin(), outcome.runs.end(),
                             [&](const RunResult& run) { return run.run_id == id; });
      t << '\t';
      if (it == outcome.runs.end()) {
        t << '?';
      } else if (it->skipped) {
        t << '-';
      } else if (it->underfit) {
        t << 'x';
      } else {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.2f", it->mean_test_accuracy);
        t << buf;
      }
    }
    t << '\n';
  }
  return t.str();
}

// Evaluation -----------------------------------------------------------------

EvalResult evaluate_model(const ModelState& model, const Manifest& manifest) {
  validate_manifest(manifest, false);
  const Network net = model.network();
  net.check_params(model.params);
  if (net.input_shape() != Shape{kImageSide, kImageSide, 1})
    throw ValidationError("model expects input " + to_string(net.input_shape()) + ", not 32x32x1");
  const ImageSet images = load_images(manifest);
  const auto idx = all_indices(images);
  const auto predicted = predict_classes(net, model.params, images, idx);
  EvalResult r;
  r.images = idx.size();
  r.accuracy = accuracy(predicted, images.labels);
  r.confusion = confusion_matrix(predicted, images.labels);
  return r;
}

EvalResult cross_dataset_eval(const std::filesystem::path& model_file, const Manifest& manifest) {
  return evaluate_model(load_model(model_file), manifest);
}

}  // namespace spn
