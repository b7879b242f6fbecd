#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pah/stream_heads.hpp"
#include "pah/tensor.hpp"

namespace pah {

enum class Split { kTrain, kQuery, kGallery };
std::string split_name(Split split);
Split parse_split(const std::string& text);

struct ImageSample {
  Tensor pixels;  // [H,W,3] in [0,1]
  int identity = 0;
  int clothes_id = 0;
  int camera_id = 0;
  std::optional<HeadBox> head_box;
  int sample_id = 0;
};

// ---------------------------------------------------------------- PNG I/O

/// Writes an [H,W,3] image with values in [0,1] as 8-bit RGB.
void write_png(const std::filesystem::path& path, const Tensor& image);
Tensor read_png(const std::filesystem::path& path);
/// Image width and height from the PNG header only.
std::pair<std::size_t, std::size_t> png_size(const std::filesystem::path& path);
/// Writes an indexed-colour PNG of small integer labels.
void write_label_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels,
                     std::size_t height, std::size_t width, std::size_t scale = 1);

/// Rounds every value to the nearest multiple of 1/255, as stored on disk.
void quantize_to_bytes(Tensor& image);

// --------------------------------------------------------------- Manifest

struct ManifestRecord {
  std::string path;  // relative to the dataset root
  int identity = 0;
  int clothes_id = 0;
  int camera_id = 0;
  std::optional<HeadBox> head_box;
  Split split = Split::kTrain;
};

inline constexpr const char* kManifestFile = "manifest.csv";
inline constexpr const char* kManifestHeader = "path,identity,clothes_id,camera_id,x0,y0,x1,y1,split";

void write_manifest(const std::filesystem::path& root, const std::vector<ManifestRecord>& records);
/// Parses the manifest; errors name the offending line.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& root);

struct LoadOptions {
  /// Closed-set evaluation sets share identities with training.
  bool allow_shared_identities = false;
};

/// Validated manifest with lazy image decoding.
class Dataset {
 public:
  static Dataset load(const std::filesystem::path& root, const LoadOptions& options = {});

  const std::filesystem::path& root() const { return root_; }
  const std::vector<ManifestRecord>& records() const { return records_; }
  std::vector<std::size_t> indices(Split split) const;
  /// Training labels remapped to 0..C-1 (ascending raw identity).
  std::size_t train_label(std::size_t index) const;
  std::size_t num_train_classes() const { return num_classes_; }
  ImageSample sample(std::size_t index) const;

 private:
  std::filesystem::path root_;
  std::vector<ManifestRecord> records_;
  std::vector<std::size_t> labels_;
  std::size_t num_classes_ = 0;
};

// ------------------------------------------------------ Synthetic dataset

struct SyntheticSpec {
  std::size_t num_ids = 8;
  std::size_t imgs_per_id = 12;  // training images per identity
  std::size_t clothes_per_id = 2;
  std::size_t height = 64;
  std::size_t width = 32;
  std::uint64_t seed = 7;
  /// Identities for query/gallery. 0 reuses the training identities
  /// (closed set); otherwise fresh identities are drawn.
  std::size_t test_ids = 0;
  std::size_t query_per_clothes = 2;
  std::size_t gallery_per_clothes = 3;
};

/// Upper bound on the RGB distance between the mean colours of the central
/// half of the head box in two images of one identity.
inline constexpr double kHeadColorBound = 0.3;

/// Renders one image. Exposed for tests and tools.
ImageSample render_synthetic(const SyntheticSpec& spec, int identity, int clothes_id,
                             std::mt19937_64& rng);

/// Writes PNGs and the manifest under `root`; returns the records.
std::vector<ManifestRecord> generate_synthetic(const std::filesystem::path& root,
                                               const SyntheticSpec& spec);

// --------------------------------------------------------------- Sampling

/// Identity-balanced batches: P distinct identities x K_inst images each.
class PkSampler {
 public:
  /// `labels[i]` is the class of the i-th training item.
  PkSampler(std::vector<std::size_t> labels, std::size_t identities_per_batch,
            std::size_t instances, std::uint64_t seed);

  /// Batches of one epoch, as positions into `labels`. Every identity
  /// appears at least once per epoch.
  std::vector<std::vector<std::size_t>> epoch();
  std::size_t batches_per_epoch() const;
  std::size_t num_identities() const { return by_identity_.size(); }

  std::string rng_state() const;
  void restore_rng_state(const std::string& state);

 private:
  std::vector<std::vector<std::size_t>> by_identity_;
  std::size_t total_items_ = 0;
  std::size_t p_;
  std::size_t k_;
  std::mt19937_64 rng_;
};

// ------------------------------------------------------------ Augmentation

struct EraseRect {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // exclusive upper bounds
};

struct Augmented {
  ImageSample sample;
  bool flipped = false;
  std::optional<EraseRect> erased;
};

struct AugmentOptions {
  double flip_probability = 0.5;
  double erase_probability = 0.5;
  double erase_area_min = 0.02;
  double erase_area_max = 0.4;
  double erase_aspect_min = 0.3;
};

/// Mirrors pixels and head box left-right.
ImageSample hflip(const ImageSample& sample);

/// Training-time horizontal flip and random erasing (uniform-noise fill).
Augmented augment(const ImageSample& sample, std::mt19937_64& rng, const AugmentOptions& options = {});

}  // namespace pah
