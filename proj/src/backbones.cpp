#include "pah/backbones.hpp"

#include <sstream>

#include "pah/errors.hpp"

namespace pah {

namespace {

void check_image(const Tensor& image, std::size_t h, std::size_t w, const char* who) {
  if (image.rank() != 3 || image.dim(0) != h || image.dim(1) != w || image.dim(2) != 3) {
    throw DimensionError(std::string(who) + ": expected image [" + std::to_string(h) + "," +
                         std::to_string(w) + ",3], got " + shape_to_string(image.shape()));
  }
}

Tensor run(const std::vector<ConvLayer>& layers, Tensor x) {
  for (const auto& layer : layers) x = layer.forward(x);
  return x;
}

std::string describe(const std::vector<ConvLayer>& layers) {
  std::string out;
  for (const auto& layer : layers) {
    if (!out.empty()) out += '|';
    out += layer.describe();
  }
  return out;
}

void collect_layers(const std::vector<ConvLayer>& layers, const std::string& prefix,
                    NamedTensors& params) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect(prefix + "." + std::to_string(i), params);
  }
}

}  // namespace

std::string StreamSet::to_string() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(global, "global");
  add(part, "part");
  add(head, "head");
  return out;
}

StreamSet StreamSet::parse(const std::string& text) {
  StreamSet s{false, false, false};
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "global") {
      s.global = true;
    } else if (item == "part") {
      s.part = true;
    } else if (item == "head") {
      s.head = true;
    } else if (!item.empty()) {
      throw ConfigError("unknown stream '" + item + "' (expected global, part, head)");
    }
  }
  if (!s.any()) throw ConfigError("stream set is empty");
  return s;
}

std::size_t ModelConfig::stream_stride() const {
  return std::size_t{1} << (stem_channels.size() + branch_channels.size());
}

void ModelConfig::validate() const {
  if (num_parts < 2) throw ConfigError("num_parts (K) must be >= 2");
  if (num_classes < 2) throw ConfigError("num_classes (C) must be >= 2");
  if (stem_channels.empty() || branch_channels.empty()) {
    throw ConfigError("stem and branch channel plans must be non-empty");
  }
  if (dense_stem_channels.size() != 2) {
    throw ConfigError("dense stem must have exactly two stride-2 layers (output stride 4)");
  }
  const std::size_t stride = stream_stride();
  if (input_h % stride != 0 || input_w % stride != 0) {
    throw ConfigError("input dims must be divisible by the stream stride " + std::to_string(stride));
  }
  if (input_h % 4 != 0 || input_w % 4 != 0) throw ConfigError("input dims must be divisible by 4");
  if (pair.alpha_pos <= 0.0 || pair.alpha_neg <= 0.0) {
    throw ConfigError("pair loss scales must be positive");
  }
  if (lambda_pair < 0.0 || lambda_psd < 0.0) throw ConfigError("loss weights must be >= 0");
  if (erase_den == 0 || erase_num == 0 || erase_num >= erase_den) {
    throw ConfigError("erase fraction must lie in (0, 1)");
  }
  if (batch_identities < 1 || batch_instances < 1) throw ConfigError("batch sizes must be >= 1");
  if (!streams.any()) throw ConfigError("at least one stream must be enabled");
}

StreamBackbone::StreamBackbone(const ModelConfig& config, std::mt19937_64& rng)
    : input_h_(config.input_h), input_w_(config.input_w) {
  std::size_t in = 3;
  for (std::size_t c : config.stem_channels) {
    stem_.push_back(make_conv(3, in, c, 2, rng));
    in = c;
  }
  const std::size_t branch_in = in;
  for (auto* branch : {&branch_a_, &branch_b_}) {
    in = branch_in;
    for (std::size_t c : config.branch_channels) {
      branch->push_back(make_conv(3, in, c, 2, rng));
      in = c;
    }
  }
}

StreamBackbone::Output StreamBackbone::forward(const Tensor& image) const {
  check_image(image, input_h_, input_w_, "stream_forward");
  Tensor shared = run(stem_, image);
  return {run(branch_a_, shared), run(branch_b_, shared)};
}

std::string StreamBackbone::stem_descriptor() const { return describe(stem_); }
std::string StreamBackbone::branch_a_descriptor() const { return describe(branch_a_); }
std::string StreamBackbone::branch_b_descriptor() const { return describe(branch_b_); }

void StreamBackbone::collect(const std::string& prefix, NamedTensors& params) const {
  collect_layers(stem_, prefix + ".stem", params);
  collect_layers(branch_a_, prefix + ".branch_a", params);
  collect_layers(branch_b_, prefix + ".branch_b", params);
}

DenseBackbone::DenseBackbone(const ModelConfig& config, std::mt19937_64& rng)
    : input_h_(config.input_h), input_w_(config.input_w) {
  std::size_t in = 3;
  for (std::size_t c : config.dense_stem_channels) {
    layers_.push_back(make_conv(3, in, c, 2, rng));
    in = c;
  }
  layers_.push_back(make_conv(3, in, config.dense_channels, 1, rng));
}

Tensor DenseBackbone::forward(const Tensor& image) const {
  check_image(image, input_h_, input_w_, "dense_forward");
  return run(layers_, image);
}

std::string DenseBackbone::descriptor() const { return describe(layers_); }

void DenseBackbone::collect(const std::string& prefix, NamedTensors& params) const {
  collect_layers(layers_, prefix + ".layer", params);
}

}  // namespace pah
