#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "pah/checkpoint.hpp"
#include "pah/config.hpp"
#include "pah/data.hpp"
#include "pah/model.hpp"
#include "pah/optimizer.hpp"
#include "pah/pseudo_labeler.hpp"
#include "pah/retrieval.hpp"

namespace pah {

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss_id = 0.0;  // means over the epoch's batches
  double loss_pair = 0.0;
  double loss_psd = 0.0;
  double loss_total = 0.0;
  double lr = 0.0;  // at the first iteration of the epoch
  std::size_t psd_fallbacks = 0;
};

inline constexpr const char* kMetricsHeader = "epoch,loss_id,loss_pair,loss_psd,loss_total,lr";
std::string metrics_row(const EpochMetrics& m);

/// Owns the model, optimizer and sampling state of one training run.
/// With an empty `config.out` nothing is written to disk.
class Trainer {
 public:
  explicit Trainer(RunConfig config);

  EpochMetrics train_epoch();
  /// Remaining epochs; writes metrics.csv and checkpoint.bin under `out`.
  std::vector<EpochMetrics> run();

  EvalReport evaluate();
  PahModel& model() { return model_; }
  const RunConfig& config() const { return config_; }
  const Dataset& dataset() const { return dataset_; }
  std::size_t epoch() const { return epoch_; }
  std::filesystem::path checkpoint_path() const;
  void save(const std::filesystem::path& path) const;

  /// Pseudo-labels of every training image from the current dense backbone.
  std::vector<PseudoLabelMap> pseudo_labels(std::size_t epoch) const;

 private:
  void load_split_images();

  RunConfig config_;
  Dataset dataset_;
  PahModel model_;
  Optimizer optimizer_;
  std::vector<std::size_t> train_indices_;
  std::vector<ImageSample> train_images_;
  std::vector<std::size_t> train_labels_;
  std::vector<ImageSample> query_images_;
  std::vector<ImageSample> gallery_images_;
  std::optional<PkSampler> sampler_;
  std::mt19937_64 augment_rng_;
  std::size_t epoch_ = 0;
};

/// Mixes a run seed with integer keys into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace pah
