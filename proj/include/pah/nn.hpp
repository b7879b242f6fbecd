#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pah/ops.hpp"
#include "pah/tensor.hpp"

namespace pah {

/// Named tensors in registration order. Parameters are trainable; buffers
/// (running statistics) are persisted but not optimized.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using NamedTensors = std::vector<NamedTensor>;

/// 3x3 (or any odd) convolution + bias + ReLU.
struct ConvLayer {
  Tensor kernel;  // [k,k,Cin,Cout]
  Tensor bias;    // [Cout]
  std::size_t stride = 1;
  std::size_t padding = 1;

  Tensor forward(const Tensor& x) const;
  std::string describe() const;
  void collect(const std::string& prefix, NamedTensors& params) const;
};

/// Kaiming-uniform kernel, zero bias.
ConvLayer make_conv(std::size_t kernel, std::size_t in_channels, std::size_t out_channels,
                    std::size_t stride, std::mt19937_64& rng);

/// Batch normalization followed by the identity classifier: the per-vector
/// head applied to every pooled feature.
struct EmbeddingHead {
  Tensor gamma;
  Tensor beta;
  BatchNormState bn;
  Tensor fc_weight;  // [D,C]
  Tensor fc_bias;    // [C]

  struct Output {
    Tensor normalized;  // post-BN [N,D]
    Tensor logits;      // [N,C]
  };
  Output forward(const Tensor& features, NormMode mode);
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const;
};

EmbeddingHead make_embedding_head(std::size_t features, std::size_t classes, std::mt19937_64& rng);

}  // namespace pah
