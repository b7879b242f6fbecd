#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "pah/backbones.hpp"

namespace pah {

struct RunConfig {
  ModelConfig model;

  std::size_t epochs_warmup = 3;
  std::size_t epochs_main = 30;
  double lr_init = 6e-5;
  double lr_peak = 6e-4;
  double lr_final = 6e-7;

  std::string optimizer = "sgd";  // sgd | adam
  double momentum = 0.9;
  double weight_decay = 5e-4;

  bool augment = true;
  double flip_probability = 0.5;
  double erase_probability = 0.5;

  std::string dataset;
  std::string out = "run";
  /// Query/gallery may share identities with training (closed-set protocol).
  bool closed_set = false;
  std::size_t eval_every = 0;  // epochs between evaluations; 0 = end only
  std::size_t top_k = 10;
  bool exclude_same_sample = false;

  std::size_t total_epochs() const { return epochs_warmup + epochs_main; }

  /// Assigns one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Flat `key = value` text; '#' starts a comment.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Every key, one per line, in a stable order. parse(to_text()) == *this.
  std::string to_text() const;
  void validate() const;
};

/// Learning rate at a fractional epoch: linear warmup from lr_init to
/// lr_peak, then cosine annealing to lr_final over epochs_main. Epochs
/// outside [0, total] are clamped to the nearest endpoint and flagged.
double lr_schedule(double epoch, const RunConfig& config, bool* clamped = nullptr);

}  // namespace pah
