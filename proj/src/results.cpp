#include "spn/results.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "spn/errors.hpp"

namespace spn {

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::string fmt4(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& s, const char* field, std::size_t line) {
  T v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw FormatError("results line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
  return v;
}

// Fold rows sort numerically, the mean row last.
bool row_less(const ResultRow& a, const ResultRow& b) {
  if (a.run_id != b.run_id) return a.run_id < b.run_id;
  auto key = [](const std::string& f) {
    std::size_t n = 0;
    auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), n);
    return (ec == std::errc() && end == f.data() + f.size()) ? n : static_cast<std::size_t>(-1);
  };
  return key(a.fold) < key(b.fold);
}

}  // namespace

std::string arch_label(const ArchitectureId& id) {
  const ArchitectureId def = ArchitectureId::defaults(id.arch);
  std::string s = to_string(id.arch);
  if (id.normalization != def.normalization) s += "+" + to_string(id.normalization);
  if (id.head_pool != def.head_pool) s += "+" + to_string(id.head_pool);
  return s;
}

std::string regularizer_label(const RegularizerSpec& spec) {
  if (spec.kind == RegularizerKind::None) return "none";
  return to_string(spec.kind) + ":" + fmt_g(spec.penalty);
}

std::string optimizer_label(const OptimizerSpec& spec) {
  const OptimizerSpec def = spec.kind == OptimizerKind::SGD    ? OptimizerSpec::sgd()
                            : spec.kind == OptimizerKind::Adam ? OptimizerSpec::adam()
                                                               : OptimizerSpec::adadelta();
  if (spec.learning_rate == def.learning_rate) return to_string(spec.kind);
  return to_string(spec.kind) + ":" + fmt_g(spec.learning_rate);
}

std::vector<ResultRow> result_rows(const std::vector<RunResult>& runs) {
  std::vector<ResultRow> rows;
  for (const RunResult& run : runs) {
    ResultRow base;
    base.run_id = run.run_id;
    base.arch = arch_label(run.config.architecture);
    base.dataset = run.dataset;
    base.augmented = run.config.augment;
    base.regularizer = regularizer_label(run.config.regularizer);
    base.optimizer = optimizer_label(run.config.optimizer);
    base.activation = to_string(run.config.architecture.activation);
    base.epochs = run.config.epochs;
    base.seed = run.config.seed;
    if (run.skipped) {
      base.status = "skipped";
      rows.push_back(base);
      continue;
    }
    if (run.folds.empty()) throw ValidationError("run '" + run.run_id + "' has no folds");
    double train_sum = 0.0, test_sum = 0.0;
    for (const FoldResult& f : run.folds) {
      ResultRow r = base;
      r.fold = std::to_string(f.fold);
      r.train_acc = round4(f.train_accuracy);
      r.test_acc = round4(f.test_accuracy);
      r.status = f.train_accuracy < kUnderfitThreshold ? "underfit" : "ok";
      train_sum += *r.train_acc;
      test_sum += *r.test_acc;
      rows.push_back(std::move(r));
    }
    ResultRow mean = base;
    mean.fold = "mean";
    mean.train_acc = round4(train_sum / static_cast<double>(run.folds.size()));
    mean.test_acc = round4(test_sum / static_cast<double>(run.folds.size()));
    mean.status = run.underfit ? "underfit" : "ok";
    rows.push_back(std::move(mean));
  }
  std::stable_sort(rows.begin(), rows.end(), row_less);
  return rows;
}

std::string format_results(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (const ResultRow& r : rows) {
    out << r.run_id << ',' << r.arch << ',' << r.dataset << ',' << (r.augmented ? "true" : "false") << ','
        << r.regularizer << ',' << r.optimizer << ',' << r.activation << ',' << r.fold << ',' << fmt4(r.train_acc)
        << ',' << fmt4(r.test_acc) << ',' << r.epochs << ',' << r.seed << ',' << r.status << '\n';
  }
  return out.str();
}

std::vector<ResultRow> parse_results(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) throw FormatError("results file has a bad header");
  std::vector<ResultRow> rows;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 13) throw FormatError("results line " + std::to_string(n) + ": expected 13 fields");
    ResultRow r;
    r.run_id = f[0];
    r.arch = f[1];
    r.dataset = f[2];
    if (f[3] != "true" && f[3] != "false")
      throw FormatError("results line " + std::to_string(n) + ": bad augmented '" + f[3] + "'");
    r.augmented = f[3] == "true";
    r.regularizer = f[4];
    r.optimizer = f[5];
    r.activation = f[6];
    r.fold = f[7];
    if (!f[8].empty()) r.train_acc = parse_number<double>(f[8], "train_acc", n);
    if (!f[9].empty()) r.test_acc = parse_number<double>(f[9], "test_acc", n);
    r.epochs = parse_number<std::size_t>(f[10], "epochs", n);
    r.seed = parse_number<std::uint64_t>(f[11], "seed", n);
    r.status = f[12];
    if (r.status != "ok" && r.status != "underfit" && r.status != "skipped")
      throw FormatError("results line " + std::to_string(n) + ": bad status '" + r.status + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_results(const std::vector<RunResult>& runs, const std::filesystem::path& path) {
  if (runs.empty()) throw ValidationError("no results to write");
  const std::string text = format_results(result_rows(runs));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write results file " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing results file " + path.string());
}

std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open results file " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_results(s.str());
}

}  // namespace spn
