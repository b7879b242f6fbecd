#include "pah/part_stream.hpp"

#include "pah/errors.hpp"

namespace pah {

Tensor part_probabilities(const Tensor& dense, const Tensor& w_part) {
  if (dense.rank() != 3 || w_part.rank() != 2 || w_part.dim(1) != dense.dim(2)) {
    throw DimensionError("part_probabilities: dense " + shape_to_string(dense.shape()) +
                         " incompatible with classifier " + shape_to_string(w_part.shape()));
  }
  const std::size_t h = dense.dim(0), w = dense.dim(1), cd = dense.dim(2);
  const std::size_t k = w_part.dim(0);
  Tensor pixels = reshape(dense, {h * w, cd});
  Tensor logits = matmul(pixels, transpose(w_part));
  return reshape(softmax(logits, 1), {h, w, k});
}

PartAggregate part_aggregate(const Tensor& dense, const Tensor& probs) {
  if (dense.rank() != 3 || probs.rank() != 3 || dense.dim(0) != probs.dim(0) ||
      dense.dim(1) != probs.dim(1)) {
    throw DimensionError("part_aggregate: dense " + shape_to_string(dense.shape()) +
                         " and probabilities " + shape_to_string(probs.shape()) + " disagree");
  }
  const std::size_t n = dense.dim(0) * dense.dim(1);
  const std::size_t cd = dense.dim(2);
  const std::size_t k = probs.dim(2);
  if (k < 2) throw DimensionError("part_aggregate: need a background and at least one part");
  Tensor p = reshape(probs, {n, k});
  Tensor f = reshape(dense, {n, cd});
  Tensor pooled = scale(matmul(transpose(p), f), 1.0 / static_cast<double>(n));  // [K,Cd]
  Tensor parts = slice_rows(pooled, 1, k);
  PartAggregate out;
  out.f_l = reshape(parts, {(k - 1) * cd});
  for (std::size_t part = 0; part + 1 < k; ++part) out.f_parts.push_back(select_row(parts, part));
  return out;
}

EmbeddingHead::Output part_head(const Tensor& f_l, EmbeddingHead& head, NormMode mode) {
  return head.forward(f_l, mode);
}

}  // namespace pah
