#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "pah/backbones.hpp"
#include "pah/tensor.hpp"

namespace pah {

/// The seven feature heads in descriptor order.
enum class HeadIndex : std::size_t {
  kGlobalGmp = 0,
  kGlobalAe,
  kGlobalGap,
  kPart,
  kHeadGmp,
  kHeadAe,
  kHeadGap,
};
inline constexpr std::size_t kNumHeads = 7;

std::string_view head_name(std::size_t head);
/// Whether `head` belongs to an enabled stream.
bool head_enabled(const StreamSet& streams, std::size_t head);

/// Outputs of one image. Slots of disabled streams stay undefined.
struct FeatureBundle {
  std::array<Tensor, kNumHeads> features;    // pre-BN vectors (pair loss)
  std::array<Tensor, kNumHeads> normalized;  // post-BN vectors (descriptor)
  std::array<Tensor, kNumHeads> logits;      // identity logits
  Tensor label;                              // one-hot [C]
};

Tensor one_hot(std::size_t label, std::size_t classes);
Tensor one_hot_rows(std::span<const std::size_t> labels, std::size_t classes);

/// Sum over heads of softmax cross-entropy against the bundle's label.
Tensor identity_loss(const FeatureBundle& bundle);

/// Multi-similarity pair loss with raw dot-product similarity, summed over
/// heads, no pair mining.
Tensor ms_loss(const FeatureBundle& anchor, std::span<const FeatureBundle> positives,
               std::span<const FeatureBundle> negatives, const PairLossParams& params);

struct PsdLoss {
  Tensor value;
  bool clamped = false;  // some labeled probability was floored at 1e-12
};

/// Pixel-summed cross-entropy between part probabilities and one-hot
/// pseudo-labels, both [h,w,K].
PsdLoss psd_loss(const Tensor& probs, const Tensor& labels_one_hot);

Tensor total_loss(const Tensor& l_id, const Tensor& l_pair, const Tensor& l_psd, double lambda_pair,
                  double lambda_psd);

// Batched forms used by the trainer. Each returns the sum over the batch.

/// logits [N,C] for one head, targets one-hot [N,C].
Tensor identity_loss_batch(std::span<const Tensor> head_logits, const Tensor& targets);

/// Pair loss for every anchor in the batch: positives are the other rows
/// with the same label, negatives all rows with a different label.
/// `features` holds one [N,D] tensor per head.
Tensor ms_loss_batch(std::span<const Tensor> features, std::span<const std::size_t> labels,
                     const PairLossParams& params);

/// Same as above for one head given its similarity matrix S [N,N].
Tensor ms_loss_from_similarity(const Tensor& similarity, std::span<const std::size_t> labels,
                               const PairLossParams& params);

}  // namespace pah
