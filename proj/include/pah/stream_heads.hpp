#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pah/nn.hpp"

namespace pah {

/// Head region in source-image pixels; x1/y1 are exclusive.
struct HeadBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool valid_for(std::size_t width, std::size_t height) const;
  bool operator==(const HeadBox&) const = default;
};

/// Rational erase fraction; the band height is ceil(h * num / den).
struct EraseFraction {
  std::size_t num = 1;
  std::size_t den = 3;

  std::size_t rows_for(std::size_t h) const { return (h * num + den - 1) / den; }
};

Tensor gmp(const Tensor& map);
Tensor gap(const Tensor& map);

struct ErasedPool {
  std::vector<double> mask;  // per row, 0 inside the erased band
  std::size_t peak_row = 0;  // row with the largest sum of squared activations
  std::size_t band_begin = 0;
  std::size_t band_end = 0;  // exclusive
  Tensor f_ae;               // [C]
};

/// Zeroes a contiguous band of rows centered on the highest-energy row and
/// max-pools what remains. Ties in row energy go to the lowest row.
ErasedPool adversarial_erase(const Tensor& map, EraseFraction fraction = {});

/// The three pooled vectors of one stream over a batch.
struct StreamHeadOutput {
  // Pre-BN features [N,Cb].
  Tensor f_gmp;
  Tensor f_ae;
  Tensor f_gap;
  // Post-BN features [N,Cb].
  Tensor t_gmp;
  Tensor t_ae;
  Tensor t_gap;
  // Identity logits [N,C].
  Tensor p_gmp;
  Tensor p_ae;
  Tensor p_gap;
  std::vector<std::vector<double>> erase_masks;  // one per image
};

/// GMP on branch a, AE and GAP on branch b, each followed by its own
/// BN + classifier. `heads` are in the order GMP, AE, GAP.
StreamHeadOutput stream_head(std::span<const Tensor> f21, std::span<const Tensor> f22,
                             std::span<EmbeddingHead, 3> heads, NormMode mode,
                             EraseFraction fraction = {});

struct HeadCrop {
  Tensor image;
  bool fallback = false;  // no box was supplied; the top rows were used
};

/// Crops the head box (or the top 20% of rows when absent) and resizes it
/// back to the full image size with corner-aligned bilinear sampling.
HeadCrop crop_head(const Tensor& image, const std::optional<HeadBox>& box);

/// Corner-aligned bilinear resampling of a [H,W,C] region.
Tensor resize_bilinear(const Tensor& image, double y0, double x0, double y1, double x1,
                       std::size_t out_h, std::size_t out_w);

}  // namespace pah
