#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <sstream>

#include "pah/data.hpp"
#include "pah/errors.hpp"

namespace pah {

PkSampler::PkSampler(std::vector<std::size_t> labels, std::size_t identities_per_batch,
                     std::size_t instances, std::uint64_t seed)
    : total_items_(labels.size()), p_(identities_per_batch), k_(instances), rng_(seed) {
  if (p_ == 0 || k_ == 0) throw ConfigError("pk_sampler: P and K_inst must be >= 1");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  for (auto& [label, items] : groups) by_identity_.push_back(std::move(items));
  if (by_identity_.size() < p_) {
    throw ConfigError("pk_sampler: " + std::to_string(by_identity_.size()) +
                      " identities for P=" + std::to_string(p_));
  }
}

std::size_t PkSampler::batches_per_epoch() const {
  const std::size_t ids = by_identity_.size();
  const std::size_t by_ids = (ids + p_ - 1) / p_;
  const std::size_t by_items = (total_items_ + p_ * k_ - 1) / (p_ * k_);
  return std::max(by_ids, by_items);
}

std::vector<std::vector<std::size_t>> PkSampler::epoch() {
  const std::size_t ids = by_identity_.size();
  std::deque<std::size_t> pool;
  auto refill = [&] {
    std::vector<std::size_t> perm(ids);
    for (std::size_t i = 0; i < ids; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng_);
    pool.insert(pool.end(), perm.begin(), perm.end());
  };

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < batches_per_epoch(); ++b) {
    std::vector<std::size_t> chosen, deferred;
    while (chosen.size() < p_) {
      if (pool.empty()) refill();
      const std::size_t id = pool.front();
      pool.pop_front();
      if (std::find(chosen.begin(), chosen.end(), id) != chosen.end()) {
        deferred.push_back(id);
      } else {
        chosen.push_back(id);
      }
    }
    pool.insert(pool.begin(), deferred.begin(), deferred.end());

    std::vector<std::size_t> batch;
    batch.reserve(p_ * k_);
    for (std::size_t id : chosen) {
      std::vector<std::size_t> items = by_identity_[id];
      if (items.size() >= k_) {
        std::shuffle(items.begin(), items.end(), rng_);
        batch.insert(batch.end(), items.begin(), items.begin() + static_cast<long>(k_));
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
        for (std::size_t k = 0; k < k_; ++k) batch.push_back(items[pick(rng_)]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::string PkSampler::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void PkSampler::restore_rng_state(const std::string& state) {
  std::istringstream in(state);
  in >> rng_;
  if (!in) throw ContractError("pk_sampler: malformed generator state");
}

ImageSample hflip(const ImageSample& sample) {
  const Tensor& src = sample.pixels;
  if (src.rank() != 3) throw DimensionError("hflip: expected [H,W,C] image");
  const std::size_t h = src.dim(0), w = src.dim(1), c = src.dim(2);
  ImageSample out = sample;
  out.pixels = Tensor(src.shape());
  auto o = out.pixels.mutable_data();
  auto v = src.data();
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < c; ++ch)
        o[(i * w + j) * c + ch] = v[(i * w + (w - 1 - j)) * c + ch];
  if (sample.head_box) {
    const int width = static_cast<int>(w);
    HeadBox b = *sample.head_box;
    out.head_box = HeadBox{width - b.x1, b.y0, width - b.x0, b.y1};
  }
  return out;
}

Augmented augment(const ImageSample& sample, std::mt19937_64& rng, const AugmentOptions& options) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Augmented out;
  out.flipped = u(rng) < options.flip_probability;
  out.sample = out.flipped ? hflip(sample) : sample;
  if (!out.flipped) out.sample.pixels = sample.pixels.clone();
  if (u(rng) >= options.erase_probability) return out;

  Tensor& img = out.sample.pixels;
  const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  const double area = static_cast<double>(h * w);
  const double log_lo = std::log(options.erase_aspect_min);
  const double log_hi = std::log(1.0 / options.erase_aspect_min);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double target = area * (options.erase_area_min +
                                  (options.erase_area_max - options.erase_area_min) * u(rng));
    const double aspect = std::exp(log_lo + (log_hi - log_lo) * u(rng));
    const auto eh = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto ew = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (eh == 0 || ew == 0 || eh >= h || ew >= w) continue;
    const double got = static_cast<double>(eh * ew);
    if (got < options.erase_area_min * area || got > options.erase_area_max * area) continue;
    const auto y0 = std::uniform_int_distribution<std::size_t>(0, h - eh)(rng);
    const auto x0 = std::uniform_int_distribution<std::size_t>(0, w - ew)(rng);
    auto px = img.mutable_data();
    for (std::size_t i = y0; i < y0 + eh; ++i)
      for (std::size_t j = x0; j < x0 + ew; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) px[(i * w + j) * c + ch] = u(rng);
    out.erased = EraseRect{x0, y0, x0 + ew, y0 + eh};
    break;
  }
  return out;
}

}  // namespace pah
