#include "spn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>

#include "spn/rng.hpp"

namespace spn {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size())
    throw FormatError(what + ": '" + text + "' is not a number");
  return v;
}

std::vector<int> parse_ratings(const std::string& text, const std::string& where) {
  std::vector<int> out;
  if (text.empty()) return out;
  for (const auto& part : split(text, '|')) {
    int v = 0;
    auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || end != part.data() + part.size() || part.empty())
      throw FormatError(where + ": rating '" + part + "' is not an integer");
    out.push_back(v);
  }
  return out;
}

std::string join_ratings(const std::vector<int>& ratings) {
  std::string s;
  for (std::size_t i = 0; i < ratings.size(); ++i) s += (i ? "|" : "") + std::to_string(ratings[i]);
  return s;
}

// Reads a CSV with the exact expected header into rows of fields.
std::vector<std::vector<std::string>> read_table(const fs::path& path, const std::string& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  auto strip = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  strip(line);
  if (line != header)
    throw FormatError(path.string() + ": header must be '" + header + "', got '" + line + "'");
  const std::size_t columns = split(header, ',').size();
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip(line);
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != columns)
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(columns) + " fields, got " + std::to_string(fields.size()));
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::string source_tag(const fs::path& path) {
  if (path.stem() == "manifest") {
    const auto parent = fs::absolute(path).parent_path().filename().string();
    if (!parent.empty()) return parent;
  }
  return path.stem().string();
}

}  // namespace

std::string to_string(Label l) { return l == Label::Benign ? "benign" : "malignant"; }

Label parse_label(const std::string& text) {
  const std::string t = lower(text);
  if (t == "benign" || t == "0") return Label::Benign;
  if (t == "malignant" || t == "1") return Label::Malignant;
  throw FormatError("label '" + text + "' is neither benign nor malignant");
}

fs::path Manifest::resolve(const NoduleRecord& r) const {
  const fs::path p(r.image_path);
  return p.is_absolute() ? p : base_dir / p;
}

std::size_t Manifest::count(Label l) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [&](const auto& r) { return r.label == l; }));
}

Manifest read_manifest(const fs::path& path) {
  Manifest m;
  m.source = source_tag(path);
  m.base_dir = fs::absolute(path).parent_path();
  std::size_t row_no = 1;
  for (auto& f : read_table(path, kManifestHeader)) {
    ++row_no;
    const std::string where = path.string() + " row " + std::to_string(row_no);
    NoduleRecord r;
    r.image_path = f[0];
    r.nodule_id = f[1];
    r.patient_id = f[2];
    if (r.image_path.empty() || r.nodule_id.empty())
      throw FormatError(where + ": image_path and nodule_id are required");
    r.label = parse_label(f[3]);
    if (!f[4].empty()) {
      r.diameter_mm = parse_double(f[4], where + " diameter_mm");
      if (!(*r.diameter_mm > 0.0)) throw FormatError(where + ": diameter_mm must be positive");
    }
    r.ratings = parse_ratings(f[5], where);
    for (int v : r.ratings)
      if (v < 1 || v > 5) throw FormatError(where + ": rating " + std::to_string(v) + " outside [1,5]");
    m.records.push_back(std::move(r));
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : manifest.records) {
    for (const std::string* s : {&r.image_path, &r.nodule_id, &r.patient_id})
      if (s->find(',') != std::string::npos)
        throw ValidationError("manifest field '" + *s + "' contains a comma");
    out << r.image_path << ',' << r.nodule_id << ',' << r.patient_id << ',' << to_string(r.label)
        << ',' << (r.diameter_mm ? format_double(*r.diameter_mm) : "") << ','
        << join_ratings(r.ratings) << '\n';
  }
  if (!out) throw ValidationError("failed writing " + path.string());
}

void validate_manifest(const Manifest& manifest, bool require_both_classes) {
  if (manifest.records.empty()) throw ValidationError("manifest is empty");
  std::map<std::string, const NoduleRecord*> first;
  for (const auto& r : manifest.records) {
    auto [it, fresh] = first.emplace(r.nodule_id, &r);
    if (!fresh && (it->second->label != r.label || it->second->patient_id != r.patient_id))
      throw ValidationError("nodule '" + r.nodule_id + "' has records with conflicting label or patient");
  }
  if (require_both_classes && (manifest.count(Label::Benign) == 0 || manifest.count(Label::Malignant) == 0))
    throw ValidationError("manifest must contain both benign and malignant records");
}

std::string to_string(Exclusion e) {
  switch (e) {
    case Exclusion::None:
      return "none";
    case Exclusion::TooFewRaters:
      return "too-few-raters";
    case Exclusion::Size:
      return "size";
    case Exclusion::Indeterminate:
      return "indeterminate";
  }
  return "?";
}

LabelDecision label_from_ratings(std::span<const int> ratings, double diameter_mm) {
  for (int v : ratings)
    if (v < 1 || v > 5) throw ValidationError("malignancy rating " + std::to_string(v) + " outside [1,5]");
  if (!(diameter_mm > 0.0)) throw ValidationError("nodule diameter must be positive");
  LabelDecision d;
  if (ratings.size() < kMinRaters) {
    d.exclusion = Exclusion::TooFewRaters;
    return d;
  }
  std::vector<int> sorted(ratings.begin(), ratings.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  d.median = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
  if (diameter_mm < kMinDiameterMm || diameter_mm > kMaxDiameterMm) {
    d.exclusion = Exclusion::Size;
    return d;
  }
  if (d.median < 3.0)
    d.label = Label::Benign;
  else if (d.median > 3.0)
    d.label = Label::Malignant;
  else
    d.exclusion = Exclusion::Indeterminate;
  return d;
}

Manifest cap_images_per_nodule(const Manifest& manifest, std::size_t cap) {
  if (cap == 0) throw ValidationError("image cap must be >= 1");
  Manifest out;
  out.source = manifest.source;
  out.base_dir = manifest.base_dir;
  std::map<std::string, std::size_t> seen;
  for (const auto& r : manifest.records)
    if (++seen[r.nodule_id] <= cap) out.records.push_back(r);
  return out;
}

LabelingSummary label_ratings_table(const fs::path& ratings_csv, std::size_t cap) {
  LabelingSummary s;
  Manifest& m = s.manifest;
  m.source = source_tag(ratings_csv);
  m.base_dir = fs::absolute(ratings_csv).parent_path();
  std::size_t row_no = 1;
  for (auto& f : read_table(ratings_csv, kRatingsHeader)) {
    ++row_no;
    const std::string where = ratings_csv.string() + " row " + std::to_string(row_no);
    if (f[3].empty()) throw FormatError(where + ": diameter_mm is required for labeling");
    const double diameter = parse_double(f[3], where + " diameter_mm");
    const auto ratings = parse_ratings(f[4], where);
    LabelDecision d;
    try {
      d = label_from_ratings(ratings, diameter);
    } catch (const ValidationError& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (d.excluded()) {
      ++s.excluded_records[d.exclusion];
      continue;
    }
    m.records.push_back({f[0], f[1], f[2], *d.label, diameter, ratings});
  }
  m = cap_images_per_nodule(m, cap);
  return s;
}

std::vector<unsigned char> encode_pgm(const Tensor& image) {
  if (image.shape() != Shape{kImageSide, kImageSide, 1})
    throw ShapeError("PGM images must be [32,32,1], got " + to_string(image.shape()));
  const std::string header = "P5\n32 32\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (double v : image.values())
    bytes.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return bytes;
}

Tensor decode_pgm(std::span<const unsigned char> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&](const char* field) {
    skip_space();
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    if (t.empty()) throw FormatError(std::string("PGM: missing ") + field);
    return t;
  };
  auto number = [&](const char* field) {
    const std::string t = token(field);
    int v = 0;
    auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || end != t.data() + t.size())
      throw FormatError(std::string("PGM: ") + field + " '" + t + "' is not an integer");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw FormatError("PGM: magic must be P5");
  pos = 2;
  const int width = number("width");
  const int height = number("height");
  const int maxval = number("maxval");
  if (width != static_cast<int>(kImageSide))
    throw FormatError("PGM: width must be 32, got " + std::to_string(width));
  if (height != static_cast<int>(kImageSide))
    throw FormatError("PGM: height must be 32, got " + std::to_string(height));
  if (maxval != 255) throw FormatError("PGM: maxval must be 255, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw FormatError("PGM: header must end in a single whitespace byte");
  ++pos;
  const std::size_t pixels = kImageSide * kImageSide;
  if (bytes.size() - pos != pixels)
    throw FormatError("PGM: data must hold 1024 bytes, got " + std::to_string(bytes.size() - pos));
  Tensor image({kImageSide, kImageSide, 1});
  for (std::size_t i = 0; i < pixels; ++i) image[i] = bytes[pos + i] / 255.0;
  return image;
}

Tensor load_image(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open image " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_image(const fs::path& path, const Tensor& image) {
  const auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing image " + path.string());
}

ImageSet load_images(const Manifest& manifest) {
  ImageSet set;
  set.images.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    set.images.push_back(load_image(manifest.resolve(r)));
    set.labels.push_back(class_index(r.label));
  }
  return set;
}

std::vector<std::string> FoldAssignment::nodules_in(std::size_t f) const {
  std::vector<std::string> out;
  for (const auto& [id, fold] : fold_of)
    if (fold == f) out.push_back(id);
  return out;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (const auto& [id, fold] : fold_of) ++sizes[fold];
  return sizes;
}

FoldAssignment stratified_kfold(const Manifest& manifest, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("k-fold needs k >= 2 so that a fold is held out");
  std::vector<std::string> by_class[2];
  std::set<std::string> seen;
  for (const auto& r : manifest.records)
    if (seen.insert(r.nodule_id).second) by_class[class_index(r.label)].push_back(r.nodule_id);
  for (const auto& ids : by_class)
    if (ids.size() < k)
      throw ValidationError("k-fold needs at least " + std::to_string(k) +
                            " nodules per class, got " + std::to_string(ids.size()));
  FoldAssignment fa;
  fa.k = k;
  Rng rng = make_rng(seed, {0xF01D});
  std::size_t next = 0;
  for (auto& ids : by_class) {
    std::shuffle(ids.begin(), ids.end(), rng);
    for (const auto& id : ids) fa.fold_of[id] = next++ % k;
  }
  return fa;
}

Tensor synthesize_nodule(Label label, std::uint64_t seed, std::size_t index) {
  Rng rng = make_rng(seed, {class_index(label), index});
  std::uniform_real_distribution<double> radius_dist(4.0, 10.0), intensity_dist(0.5, 1.0);
  const double radius = radius_dist(rng);
  const double intensity = intensity_dist(rng);
  const double sigma = radius / 2.0;
  const double center = (kImageSide - 1) / 2.0;

  struct Spike {
    double angle, length, half_width;
  };
  std::vector<Spike> spikes;
  if (label == Label::Malignant) {
    std::uniform_int_distribution<int> count(5, 12);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi), length(3.0, 8.0),
        width(1.0, 2.0);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) spikes.push_back({angle(rng), length(rng), width(rng) / 2.0});
  }

  Tensor image({kImageSide, kImageSide, 1});
  std::normal_distribution<double> noise(0.0, 0.05);
  for (std::size_t r = 0; r < kImageSide; ++r) {
    for (std::size_t c = 0; c < kImageSide; ++c) {
      const double y = static_cast<double>(r) - center, x = static_cast<double>(c) - center;
      double v = intensity * std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      for (const auto& s : spikes) {
        // Radial segment from half the blob radius out past its edge.
        const double ux = std::cos(s.angle), uy = std::sin(s.angle);
        const double along = x * ux + y * uy;
        const double across = std::abs(-x * uy + y * ux);
        if (along >= radius * 0.5 && along <= radius + s.length && across <= s.half_width)
          v = std::max(v, 0.8 * intensity);
      }
      image[r * kImageSide + c] = std::clamp(v + noise(rng), 0.0, 1.0);
    }
  }
  return image;
}

Manifest generate_synthetic_dataset(std::size_t n_per_class, std::uint64_t seed, const fs::path& out_dir) {
  if (n_per_class == 0) throw ValidationError("n_per_class must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw ValidationError("cannot create output directory " + out_dir.string());
  Manifest m;
  m.base_dir = fs::absolute(out_dir);
  m.source = source_tag(out_dir / "manifest.csv");
  std::size_t serial = 0;
  for (Label label : {Label::Benign, Label::Malignant}) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++serial) {
      char name[32];
      std::snprintf(name, sizeof name, "img_%05zu.pgm", serial);
      char nodule[32];
      std::snprintf(nodule, sizeof nodule, "syn-%05zu", serial);
      char patient[32];
      std::snprintf(patient, sizeof patient, "pat-%05zu", serial);
      Tensor image = synthesize_nodule(label, seed, i);
      save_image(out_dir / name, image);
      m.records.push_back({name, nodule, patient, label, std::nullopt, {}});
    }
  }
  write_manifest(m, out_dir / "manifest.csv");
  return m;
}

}  // namespace spn
