#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pah/tensor.hpp"

// Differentiable operations. Each op records itself on the active tape when
// a tape is active and at least one input requires a gradient; otherwise it
// runs as a plain forward computation.
namespace pah {

/// Records a custom op. Marks `output` as grad-requiring and appends it to the
/// active tape when some input requires a gradient; returns whether it did.
bool record_op(std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn backward);

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& x);
/// Sum of any number of same-shaped tensors.
Tensor add_n(std::span<const Tensor> terms);

// Reductions to a scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

// Shape manipulation.
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // [m,n] -> [n,m]
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
/// Concatenates tensors flattened to 1-D.
Tensor concat(std::span<const Tensor> parts);
Tensor select_row(const Tensor& x, std::size_t row);            // [N,D] -> [D]
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);  // [N,D] -> [end-begin,D]

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
/// Adds a per-channel bias along the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x[N,D] * weight[D,C] + bias[C].
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// 2-D convolution on a channels-last map.
/// input [H,W,Cin], kernel [kh,kw,Cin,Cout]; kh and kw must be odd.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);

enum class NormMode { kTrain, kEval };

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  static BatchNormState fresh(std::size_t features, double eps = 1e-5, double momentum = 0.1);
};

/// Batch normalization over the rows of x[N,D]. Train mode normalizes by the
/// (biased) batch statistics and updates the running stats; eval mode uses
/// the running stats.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, NormMode mode,
                 BatchNormState& state);

/// Numerically stable softmax along `axis` (max-subtracted).
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x);  // along the last axis

// Spatial pooling over [h,w,C] maps.
Tensor global_max_pool(const Tensor& map);  // -> [C]
Tensor global_avg_pool(const Tensor& map);  // -> [C]
/// Multiplies every row i of a [h,w,C] map by the constant mask[i].
Tensor mask_rows(const Tensor& map, std::span<const double> mask);

/// Sum over rows of -log softmax(logits)[row, target], logits [N,C] or [C],
/// targets exactly one-hot with the same shape.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot);

/// -sum Y * ln(max(P, floor)). `clamped` is set when any labeled probability
/// hit the floor.
Tensor clamped_cross_entropy(const Tensor& probs, const Tensor& one_hot, double floor,
                             bool* clamped);

/// (1/alpha) * ln(1 + sum_i exp(sign * alpha * (s_i - margin))), sign = +1 or -1.
/// An empty similarity vector yields 0.
Tensor log_one_plus_sum_exp(const Tensor& similarities, double sign, double alpha, double margin);

}  // namespace pah
