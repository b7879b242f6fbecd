#include "pah/nn.hpp"

#include <cmath>
#include <sstream>

namespace pah {

Tensor ConvLayer::forward(const Tensor& x) const {
  return relu(add_bias(conv2d(x, kernel, stride, padding), bias));
}

std::string ConvLayer::describe() const {
  std::ostringstream out;
  out << "conv" << kernel.dim(0) << 'x' << kernel.dim(1) << '/' << stride << ':' << kernel.dim(2)
      << "->" << kernel.dim(3) << "+relu";
  return out.str();
}

void ConvLayer::collect(const std::string& prefix, NamedTensors& params) const {
  params.push_back({prefix + ".kernel", kernel});
  params.push_back({prefix + ".bias", bias});
}

ConvLayer make_conv(std::size_t kernel, std::size_t in_channels, std::size_t out_channels,
                    std::size_t stride, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(kernel * kernel * in_channels);
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(kernel * kernel * in_channels * out_channels);
  for (double& v : values) v = dist(rng);
  ConvLayer layer;
  layer.kernel = Tensor({kernel, kernel, in_channels, out_channels}, std::move(values), true);
  layer.bias = Tensor({out_channels}, 0.0, true);
  layer.stride = stride;
  layer.padding = kernel / 2;
  return layer;
}

EmbeddingHead::Output EmbeddingHead::forward(const Tensor& features, NormMode mode) {
  Tensor normalized = batchnorm(features, gamma, beta, mode, bn);
  Tensor logits = affine(normalized, fc_weight, fc_bias);
  return {normalized, logits};
}

void EmbeddingHead::collect(const std::string& prefix, NamedTensors& params,
                            NamedTensors& buffers) const {
  params.push_back({prefix + ".bn.gamma", gamma});
  params.push_back({prefix + ".bn.beta", beta});
  params.push_back({prefix + ".fc.weight", fc_weight});
  params.push_back({prefix + ".fc.bias", fc_bias});
  buffers.push_back({prefix + ".bn.running_mean", bn.running_mean});
  buffers.push_back({prefix + ".bn.running_var", bn.running_var});
}

EmbeddingHead make_embedding_head(std::size_t features, std::size_t classes,
                                  std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 0.01);
  std::vector<double> w(features * classes);
  for (double& v : w) v = dist(rng);
  EmbeddingHead head;
  head.gamma = Tensor({features}, 1.0, true);
  head.beta = Tensor({features}, 0.0, true);
  head.bn = BatchNormState::fresh(features);
  head.fc_weight = Tensor({features, classes}, std::move(w), true);
  head.fc_bias = Tensor({classes}, 0.0, true);
  return head;
}

}  // namespace pah
