#pragma once

#include <vector>

#include "pah/nn.hpp"

namespace pah {

/// Per-pixel part probabilities: softmax(W_part * F_dense[i,j]).
/// dense [h,w,Cd], w_part [K,Cd] -> [h,w,K].
Tensor part_probabilities(const Tensor& dense, const Tensor& w_part);

struct PartAggregate {
  std::vector<Tensor> f_parts;  // K-1 vectors of length Cd, parts 1..K-1
  Tensor f_l;                   // [(K-1)*Cd], ascending part order
};

/// Probability-weighted average pooling of the dense map for every
/// non-background part (channel 0 is background and is skipped). The
/// normalizer is the full map area h*w.
PartAggregate part_aggregate(const Tensor& dense, const Tensor& probs);

/// BN + classifier on the stacked part vectors f_l [N,(K-1)*Cd].
EmbeddingHead::Output part_head(const Tensor& f_l, EmbeddingHead& head, NormMode mode);

}  // namespace pah
