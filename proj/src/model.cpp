#include "pah/model.hpp"

#include <cmath>
#include <random>

#include "pah/errors.hpp"
#include "pah/part_stream.hpp"

namespace pah {

namespace {

// Independent generator per component so that toggling a stream leaves the
// initialization of the others unchanged.
std::mt19937_64 component_rng(std::uint64_t seed, std::uint64_t component) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(component)};
  return std::mt19937_64(seq);
}

Tensor select(const Tensor& batch, std::size_t i) {
  return batch.defined() ? select_row(batch, i) : Tensor{};
}

}  // namespace

FeatureBundle BatchOutput::bundle(std::size_t i, std::size_t label, std::size_t classes) const {
  FeatureBundle b;
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    b.features[h] = select(features[h], i);
    b.normalized[h] = select(normalized[h], i);
    b.logits[h] = select(logits[h], i);
  }
  b.label = one_hot(label, classes);
  return b;
}

PahModel::PahModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  {
    auto rng = component_rng(config.seed, 1);
    global_ = StreamBackbone(config_, rng);
  }
  {
    auto rng = component_rng(config.seed, 2);
    head_ = StreamBackbone(config_, rng);
  }
  {
    auto rng = component_rng(config.seed, 3);
    dense_ = DenseBackbone(config_, rng);
    const std::size_t k = config_.num_parts, cd = config_.dense_channels;
    const double bound = std::sqrt(6.0 / static_cast<double>(cd));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(k * cd);
    for (double& v : w) v = dist(rng);
    w_part_ = Tensor({k, cd}, std::move(w), true);
  }
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    auto rng = component_rng(config.seed, 10 + h);
    const std::size_t d = h == static_cast<std::size_t>(HeadIndex::kPart)
                              ? config_.part_features()
                              : config_.branch_features();
    heads_[h] = make_embedding_head(d, config_.num_classes, rng);
  }
}

BatchOutput PahModel::forward(std::span<const Tensor> images, std::span<const Tensor> head_images,
                              NormMode mode) {
  const StreamSet& streams = config_.streams;
  if (images.empty()) throw DimensionError("forward: empty batch");
  if (streams.head && head_images.size() != images.size()) {
    throw DimensionError("forward: need one head image per image");
  }
  const EraseFraction fraction{config_.erase_num, config_.erase_den};
  BatchOutput out;
  out.batch_size = images.size();

  auto run_stream = [&](StreamBackbone& backbone, std::span<const Tensor> inputs,
                        std::size_t first_head) {
    std::vector<Tensor> f21, f22;
    for (const auto& img : inputs) {
      auto maps = backbone.forward(img);
      f21.push_back(maps.f21);
      f22.push_back(maps.f22);
    }
    std::span<EmbeddingHead, 3> trio(heads_.data() + first_head, 3);
    StreamHeadOutput so = stream_head(f21, f22, trio, mode, fraction);
    out.features[first_head] = so.f_gmp;
    out.features[first_head + 1] = so.f_ae;
    out.features[first_head + 2] = so.f_gap;
    out.normalized[first_head] = so.t_gmp;
    out.normalized[first_head + 1] = so.t_ae;
    out.normalized[first_head + 2] = so.t_gap;
    out.logits[first_head] = so.p_gmp;
    out.logits[first_head + 1] = so.p_ae;
    out.logits[first_head + 2] = so.p_gap;
  };

  if (streams.global) run_stream(global_, images, static_cast<std::size_t>(HeadIndex::kGlobalGmp));
  if (streams.part) {
    std::vector<Tensor> f_ls;
    for (const auto& img : images) {
      Tensor dense = dense_.forward(img);
      Tensor probs = part_probabilities(dense, w_part_);
      f_ls.push_back(part_aggregate(dense, probs).f_l);
      out.dense_maps.push_back(dense);
      out.part_probs.push_back(probs);
    }
    const auto p = static_cast<std::size_t>(HeadIndex::kPart);
    out.features[p] = stack(f_ls);
    auto ho = part_head(out.features[p], heads_[p], mode);
    out.normalized[p] = ho.normalized;
    out.logits[p] = ho.logits;
  }
  if (streams.head) run_stream(head_, head_images, static_cast<std::size_t>(HeadIndex::kHeadGmp));
  return out;
}

Tensor PahModel::descriptor(const Tensor& image, const Tensor& head_image) {
  std::array<Tensor, 1> imgs{image};
  std::array<Tensor, 1> heads{head_image};
  std::span<const Tensor> head_span =
      config_.streams.head ? std::span<const Tensor>(heads) : std::span<const Tensor>{};
  BatchOutput out = forward(imgs, head_span, NormMode::kEval);
  std::vector<Tensor> parts;
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    if (out.normalized[h].defined()) parts.push_back(out.normalized[h]);
  }
  return reshape(concat(parts), {descriptor_length()});
}

std::size_t PahModel::descriptor_length() const {
  std::size_t n = 0;
  if (config_.streams.global) n += 3 * config_.branch_features();
  if (config_.streams.part) n += config_.part_features();
  if (config_.streams.head) n += 3 * config_.branch_features();
  return n;
}

Tensor PahModel::dense_features(const Tensor& image) const { return dense_.forward(image); }

NamedTensors PahModel::parameters() const {
  NamedTensors params;
  const StreamSet& s = config_.streams;
  if (s.global) global_.collect("global", params);
  if (s.part) {
    dense_.collect("dense", params);
    params.push_back({"part.classifier", w_part_});
  }
  if (s.head) head_.collect("head", params);
  NamedTensors unused;
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    if (head_enabled(s, h)) heads_[h].collect("heads." + std::string(head_name(h)), params, unused);
  }
  return params;
}

NamedTensors PahModel::buffers() const {
  NamedTensors params, buffers;
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    if (head_enabled(config_.streams, h)) {
      heads_[h].collect("heads." + std::string(head_name(h)), params, buffers);
    }
  }
  return buffers;
}

}  // namespace pah
