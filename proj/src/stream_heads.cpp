#include "pah/stream_heads.hpp"

#include <algorithm>
#include <cmath>

#include "pah/errors.hpp"

namespace pah {

bool HeadBox::valid_for(std::size_t width, std::size_t height) const {
  return x0 >= 0 && y0 >= 0 && x0 < x1 && y0 < y1 && x1 <= static_cast<int>(width) &&
         y1 <= static_cast<int>(height);
}

Tensor gmp(const Tensor& map) { return global_max_pool(map); }
Tensor gap(const Tensor& map) { return global_avg_pool(map); }

ErasedPool adversarial_erase(const Tensor& map, EraseFraction fraction) {
  if (map.rank() != 3) throw DimensionError("adversarial_erase: expected [h,w,C] map");
  const std::size_t h = map.dim(0);
  if (h < 2) throw DegenerateMapError("adversarial_erase: need at least 2 rows to erase and pool");
  if (map.dim(1) == 0 || map.dim(2) == 0) throw DimensionError("adversarial_erase: empty map");
  const std::size_t row = map.dim(1) * map.dim(2);
  auto v = map.data();

  ErasedPool out;
  double best = -1.0;
  for (std::size_t i = 0; i < h; ++i) {
    double energy = 0.0;
    for (std::size_t k = 0; k < row; ++k) energy += v[i * row + k] * v[i * row + k];
    if (energy > best) {
      best = energy;
      out.peak_row = i;
    }
  }

  const std::size_t band = std::min(fraction.rows_for(h), h - 1);
  std::size_t begin = out.peak_row >= band / 2 ? out.peak_row - band / 2 : 0;
  begin = std::min(begin, h - band);
  out.band_begin = begin;
  out.band_end = begin + band;
  out.mask.assign(h, 1.0);
  for (std::size_t i = out.band_begin; i < out.band_end; ++i) out.mask[i] = 0.0;
  out.f_ae = global_max_pool(mask_rows(map, out.mask));
  return out;
}

StreamHeadOutput stream_head(std::span<const Tensor> f21, std::span<const Tensor> f22,
                             std::span<EmbeddingHead, 3> heads, NormMode mode,
                             EraseFraction fraction) {
  if (f21.size() != f22.size() || f21.empty()) {
    throw DimensionError("stream_head: branch batches must be non-empty and equal in size");
  }
  const std::size_t n = f21.size();
  std::vector<Tensor> gmps, aes, gaps;
  gmps.reserve(n);
  aes.reserve(n);
  gaps.reserve(n);
  StreamHeadOutput out;
  for (std::size_t i = 0; i < n; ++i) {
    if (f21[i].shape() != f22[i].shape()) {
      throw DimensionError("stream_head: branch maps differ in shape");
    }
    gmps.push_back(gmp(f21[i]));
    ErasedPool erased = adversarial_erase(f22[i], fraction);
    aes.push_back(erased.f_ae);
    out.erase_masks.push_back(std::move(erased.mask));
    gaps.push_back(gap(f22[i]));
  }
  out.f_gmp = stack(gmps);
  out.f_ae = stack(aes);
  out.f_gap = stack(gaps);
  auto gmp_out = heads[0].forward(out.f_gmp, mode);
  auto ae_out = heads[1].forward(out.f_ae, mode);
  auto gap_out = heads[2].forward(out.f_gap, mode);
  out.t_gmp = gmp_out.normalized;
  out.t_ae = ae_out.normalized;
  out.t_gap = gap_out.normalized;
  out.p_gmp = gmp_out.logits;
  out.p_ae = ae_out.logits;
  out.p_gap = gap_out.logits;
  return out;
}

Tensor resize_bilinear(const Tensor& image, double y0, double x0, double y1, double x1,
                       std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 3) throw DimensionError("resize_bilinear: expected [H,W,C] image");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out({out_h, out_w, c});
  auto o = out.mutable_data();
  auto v = image.data();
  const double sy = out_h > 1 ? (y1 - y0) / static_cast<double>(out_h - 1) : 0.0;
  const double sx = out_w > 1 ? (x1 - x0) / static_cast<double>(out_w - 1) : 0.0;
  for (std::size_t i = 0; i < out_h; ++i) {
    const double y = std::clamp(y0 + sy * static_cast<double>(i), 0.0, static_cast<double>(h - 1));
    const auto ya = static_cast<std::size_t>(std::floor(y));
    const std::size_t yb = std::min(ya + 1, h - 1);
    const double wy = y - static_cast<double>(ya);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double x =
          std::clamp(x0 + sx * static_cast<double>(j), 0.0, static_cast<double>(w - 1));
      const auto xa = static_cast<std::size_t>(std::floor(x));
      const std::size_t xb = std::min(xa + 1, w - 1);
      const double wx = x - static_cast<double>(xa);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = v[(ya * w + xa) * c + ch] * (1.0 - wx) + v[(ya * w + xb) * c + ch] * wx;
        const double bot = v[(yb * w + xa) * c + ch] * (1.0 - wx) + v[(yb * w + xb) * c + ch] * wx;
        o[(i * out_w + j) * c + ch] = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

HeadCrop crop_head(const Tensor& image, const std::optional<HeadBox>& box) {
  if (image.rank() != 3) throw DimensionError("crop_head: expected [H,W,C] image");
  const std::size_t h = image.dim(0), w = image.dim(1);
  HeadBox region;
  bool fallback = false;
  if (box) {
    if (box->x1 <= box->x0 || box->y1 <= box->y0) {
      throw InvalidBoxError("crop_head: head box has zero area");
    }
    if (!box->valid_for(w, h)) throw InvalidBoxError("crop_head: head box outside the image");
    region = *box;
  } else {
    region = HeadBox{0, 0, static_cast<int>(w), static_cast<int>((h + 4) / 5)};
    fallback = true;
  }
  Tensor out = resize_bilinear(image, region.y0, region.x0, region.y1 - 1, region.x1 - 1, h, w);
  return {out, fallback};
}

}  // namespace pah
