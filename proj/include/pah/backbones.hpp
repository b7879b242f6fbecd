#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pah/nn.hpp"

namespace pah {

/// Which of the three streams a model carries (ablation support).
struct StreamSet {
  bool global = true;
  bool part = true;
  bool head = true;

  bool any() const { return global || part || head; }
  std::string to_string() const;
  /// Parses a comma list such as "global,part,head".
  static StreamSet parse(const std::string& text);
  bool operator==(const StreamSet&) const = default;
};

struct PairLossParams {
  double alpha_pos = 2.0;
  double alpha_neg = 40.0;
  double margin = 0.5;
};

struct ModelConfig {
  std::size_t input_h = 64;
  std::size_t input_w = 32;
  /// Output channels of the stride-2 stem convolutions shared by both branches.
  std::vector<std::size_t> stem_channels{16, 32};
  /// Output channels of each branch's stride-2 convolutions; the last entry is Cb.
  std::vector<std::size_t> branch_channels{32, 32};
  /// Output channels of the two stride-2 dense stem convolutions.
  std::vector<std::size_t> dense_stem_channels{16, 32};
  std::size_t dense_channels = 48;  // Cd
  std::size_t num_parts = 7;        // K, background included
  std::size_t num_classes = 2;      // C
  double lambda_pair = 1.0;
  double lambda_psd = 0.1;
  PairLossParams pair;
  std::size_t batch_identities = 6;  // P
  std::size_t batch_instances = 7;   // K_inst
  std::uint64_t seed = 1;
  StreamSet streams;
  /// Fraction of feature-map rows erased by adversarial erasing, num/den.
  std::size_t erase_num = 1;
  std::size_t erase_den = 3;

  std::size_t branch_features() const { return branch_channels.back(); }
  std::size_t stream_stride() const;
  std::size_t stream_map_h() const { return input_h / stream_stride(); }
  std::size_t stream_map_w() const { return input_w / stream_stride(); }
  std::size_t dense_map_h() const { return input_h / 4; }
  std::size_t dense_map_w() const { return input_w / 4; }
  std::size_t part_features() const { return (num_parts - 1) * dense_channels; }
  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Shared stem followed by two branches of identical architecture and
/// disjoint parameters (global or head stream).
class StreamBackbone {
 public:
  StreamBackbone() = default;
  StreamBackbone(const ModelConfig& config, std::mt19937_64& rng);

  struct Output {
    Tensor f21;  // branch a, [h,w,Cb]
    Tensor f22;  // branch b, [h,w,Cb]
  };
  Output forward(const Tensor& image) const;

  std::string stem_descriptor() const;
  std::string branch_a_descriptor() const;
  std::string branch_b_descriptor() const;
  void collect(const std::string& prefix, NamedTensors& params) const;

  std::vector<ConvLayer>& branch_a() { return branch_a_; }
  std::vector<ConvLayer>& branch_b() { return branch_b_; }

 private:
  std::size_t input_h_ = 0;
  std::size_t input_w_ = 0;
  std::vector<ConvLayer> stem_;
  std::vector<ConvLayer> branch_a_;
  std::vector<ConvLayer> branch_b_;
};

/// Stride-4 dense feature extractor for the part stream, ReLU-terminated.
class DenseBackbone {
 public:
  DenseBackbone() = default;
  DenseBackbone(const ModelConfig& config, std::mt19937_64& rng);

  Tensor forward(const Tensor& image) const;  // [H/4, W/4, Cd]
  std::string descriptor() const;
  void collect(const std::string& prefix, NamedTensors& params) const;
  std::vector<ConvLayer>& layers() { return layers_; }

 private:
  std::size_t input_h_ = 0;
  std::size_t input_w_ = 0;
  std::vector<ConvLayer> layers_;
};

}  // namespace pah
