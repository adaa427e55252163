#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spn/errors.hpp"
#include "spn/tensor.hpp"

namespace spn {

enum class Label { Benign = 0, Malignant = 1 };

inline std::size_t class_index(Label l) { return static_cast<std::size_t>(l); }
std::string to_string(Label l);
Label parse_label(const std::string& text);

struct NoduleRecord {
  std::string image_path;
  std::string nodule_id;
  std::string patient_id;
  Label label = Label::Benign;
  std::optional<double> diameter_mm;
  std::vector<int> ratings;

  friend bool operator==(const NoduleRecord&, const NoduleRecord&) = default;
};

/// Ordered nodule image records. Relative image paths resolve against
/// base_dir (the directory holding the manifest file).
struct Manifest {
  std::vector<NoduleRecord> records;
  std::string source;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const NoduleRecord& r) const;
  std::size_t count(Label l) const;
};

inline constexpr const char* kManifestHeader =
    "image_path,nodule_id,patient_id,label,diameter_mm,ratings";

/// Reads the manifest CSV; the source tag is the file stem, or the parent
/// directory name for a file called manifest.csv.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Throws ValidationError if the manifest is empty, a nodule's records
/// disagree on label or patient, or (for training) a class is missing.
void validate_manifest(const Manifest& manifest, bool require_both_classes);

enum class Exclusion { None, TooFewRaters, Size, Indeterminate };
std::string to_string(Exclusion e);

struct LabelDecision {
  std::optional<Label> label;
  Exclusion exclusion = Exclusion::None;
  double median = 0.0;

  bool excluded() const { return exclusion != Exclusion::None; }
};

inline constexpr std::size_t kMinRaters = 3;
inline constexpr double kMinDiameterMm = 3.0;
inline constexpr double kMaxDiameterMm = 30.0;

/// Median-of-ratings labeling: fewer than three raters or a diameter
/// outside [3, 30] mm excludes the nodule; otherwise median < 3 is benign,
/// > 3 malignant and exactly 3 excluded. Even counts average the two middle
/// ratings.
LabelDecision label_from_ratings(std::span<const int> ratings, double diameter_mm);

/// Keeps the first `cap` records of each nodule, preserving order.
Manifest cap_images_per_nodule(const Manifest& manifest, std::size_t cap = 7);

/// Rater table consumed by label_manifest: the manifest header minus the
/// label column.
inline constexpr const char* kRatingsHeader = "image_path,nodule_id,patient_id,diameter_mm,ratings";

struct LabelingSummary {
  Manifest manifest;
  std::map<Exclusion, std::size_t> excluded_records;
};

/// Labels every row of a ratings table, drops excluded nodules and applies
/// the per-nodule image cap.
LabelingSummary label_ratings_table(const std::filesystem::path& ratings_csv, std::size_t cap = 7);

inline constexpr std::size_t kImageSide = 32;

/// Binary 8-bit 32x32 greyscale PGM ("P5", maxval 255) to [32,32,1] in [0,1].
Tensor load_image(const std::filesystem::path& path);
/// Writes a [32,32,1] tensor, quantizing v to round(255 v).
void save_image(const std::filesystem::path& path, const Tensor& image);
Tensor decode_pgm(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_pgm(const Tensor& image);

/// Loaded pixels of a manifest, aligned with its records.
struct ImageSet {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
};

ImageSet load_images(const Manifest& manifest);

/// Nodule-level fold assignment.
struct FoldAssignment {
  std::size_t k = 0;
  std::map<std::string, std::size_t> fold_of;

  std::size_t fold(const std::string& nodule_id) const { return fold_of.at(nodule_id); }
  std::vector<std::string> nodules_in(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Shuffles each class's nodules with the seed and deals them round-robin
/// across k folds, continuing the deal from one class to the next.
FoldAssignment stratified_kfold(const Manifest& manifest, std::size_t k = 10, std::uint64_t seed = 0);

/// Writes n_per_class benign blobs and n_per_class spiculated blobs as PGM
/// files plus manifest.csv under out_dir.
Manifest generate_synthetic_dataset(std::size_t n_per_class, std::uint64_t seed,
                                    const std::filesystem::path& out_dir);

/// The synthetic image for one nodule, without touching the filesystem.
Tensor synthesize_nodule(Label label, std::uint64_t seed, std::size_t index);

}  // namespace spn
