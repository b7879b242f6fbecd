#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "pah/backbones.hpp"
#include "pah/losses.hpp"
#include "pah/stream_heads.hpp"

namespace pah {

/// Outputs of a batched forward pass.
struct BatchOutput {
  std::array<Tensor, kNumHeads> features;    // pre-BN [N,D], undefined if disabled
  std::array<Tensor, kNumHeads> normalized;  // post-BN [N,D]
  std::array<Tensor, kNumHeads> logits;      // [N,C]
  std::vector<Tensor> dense_maps;            // per image [h,w,Cd] (part stream only)
  std::vector<Tensor> part_probs;            // per image [h,w,K]
  std::size_t batch_size = 0;

  /// Row `i` as a FeatureBundle (differentiable slices).
  FeatureBundle bundle(std::size_t i, std::size_t label, std::size_t classes) const;
};

/// Three-stream model: global stream, part stream, head stream.
class PahModel {
 public:
  PahModel() = default;
  explicit PahModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  /// `images` and `head_images` are [H,W,3]; head_images may be empty when
  /// the head stream is disabled.
  BatchOutput forward(std::span<const Tensor> images, std::span<const Tensor> head_images,
                      NormMode mode);

  /// Eval-mode descriptor: concatenated post-BN vectors of the enabled heads
  /// in head order.
  Tensor descriptor(const Tensor& image, const Tensor& head_image);
  std::size_t descriptor_length() const;

  /// Dense part-stream features of one image (no tape needed).
  Tensor dense_features(const Tensor& image) const;

  NamedTensors parameters() const;
  NamedTensors buffers() const;

  StreamBackbone& global_backbone() { return global_; }
  StreamBackbone& head_backbone() { return head_; }
  DenseBackbone& dense_backbone() { return dense_; }
  Tensor& part_classifier() { return w_part_; }
  std::array<EmbeddingHead, kNumHeads>& heads() { return heads_; }

 private:
  ModelConfig config_;
  StreamBackbone global_;
  StreamBackbone head_;
  DenseBackbone dense_;
  Tensor w_part_;  // [K,Cd]
  std::array<EmbeddingHead, kNumHeads> heads_;
};

}  // namespace pah
