#include "pah/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pah/errors.hpp"

namespace pah {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

Tensor finished(Tensor out, const char* op) {
  check_finite(out.data(), op);
  return out;
}

}  // namespace

bool record_op(std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn backward) {
  Tape* tape = active_tape();
  if (tape == nullptr) return false;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return false;
  output.set_requires_grad(true);
  tape->record(std::move(inputs), output, std::move(backward));
  return true;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  record_op({a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
  return finished(out, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  record_op({a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return finished(out, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  record_op({a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    auto x = a.data();
    auto y = b.data();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
  return finished(out, "mul");
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  record_op({a}, out, [a, out, factor]() mutable {
    auto g = out.grad();
    auto ga = a.grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return finished(out, "scale");
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto v = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] > 0.0 ? v[i] : 0.0;
  record_op({x}, out, [x, out]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    auto v = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (v[i] > 0.0) gx[i] += g[i];
    }
  });
  return finished(out, "relu");
}

Tensor add_n(std::span<const Tensor> terms) {
  if (terms.empty()) throw DimensionError("add_n: no terms");
  for (const auto& t : terms) require_same_shape(terms[0], t, "add_n");
  Tensor out(terms[0].shape());
  auto o = out.mutable_data();
  for (const auto& t : terms) {
    auto v = t.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += v[i];
  }
  std::vector<Tensor> inputs(terms.begin(), terms.end());
  record_op(inputs, out, [inputs, out]() mutable {
    auto g = out.grad();
    for (auto& t : inputs) {
      if (!t.requires_grad()) continue;
      auto gt = t.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
    }
  });
  return finished(out, "add_n");
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  record_op({x}, out, [x, out]() mutable {
    const double g = out.grad()[0];
    for (double& gx : x.grad()) gx += g;
  });
  return finished(out, "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw DimensionError("dot: length mismatch");
  auto x = a.data();
  auto y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  Tensor out = Tensor::scalar(s);
  record_op({a, b}, out, [a, b, out]() mutable {
    const double g = out.grad()[0];
    auto x = a.data();
    auto y = b.data();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * y[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * x[i];
    }
  });
  return finished(out, "dot");
}

Tensor reshape(const Tensor& x, Shape shape) {
  Tensor out = x.view_as(std::move(shape));
  record_op({x}, out, [x, out]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return out;
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0);
  const std::size_t n = x.dim(1);
  Tensor out({n, m});
  auto o = out.mutable_data();
  auto v = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[j * m + i] = v[i * n + j];
  record_op({x}, out, [x, out, m, n]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
  });
  return out;
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack: no parts");
  for (const auto& p : parts) require_same_shape(parts[0], p, "stack");
  Shape shape{parts.size()};
  shape.insert(shape.end(), parts[0].shape().begin(), parts[0].shape().end());
  Tensor out(shape);
  const std::size_t block = parts[0].numel();
  auto o = out.mutable_data();
  for (std::size_t p = 0; p < parts.size(); ++p) {
    std::copy(parts[p].data().begin(), parts[p].data().end(), o.begin() + p * block);
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  record_op(inputs, out, [inputs, out, block]() mutable {
    auto g = out.grad();
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      if (!inputs[p].requires_grad()) continue;
      auto gp = inputs[p].grad();
      for (std::size_t i = 0; i < block; ++i) gp[i] += g[p * block + i];
    }
  });
  return out;
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  std::size_t total = 0;
  for (const auto& p : parts) total += p.numel();
  Tensor out({total});
  auto o = out.mutable_data();
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), o.begin() + static_cast<std::ptrdiff_t>(at));
    at += p.numel();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  record_op(inputs, out, [inputs, out]() mutable {
    auto g = out.grad();
    std::size_t at = 0;
    for (auto& p : inputs) {
      const std::size_t n = p.numel();
      if (p.requires_grad()) {
        auto gp = p.grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[at + i];
      }
      at += n;
    }
  });
  return out;
}

Tensor select_row(const Tensor& x, std::size_t row) {
  require_rank(x, 2, "select_row");
  if (row >= x.dim(0)) throw DimensionError("select_row: row out of range");
  Tensor sliced = slice_rows(x, row, row + 1);
  return reshape(sliced, {x.dim(1)});
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows");
  if (begin >= end || end > x.dim(0)) throw DimensionError("slice_rows: invalid range");
  const std::size_t cols = x.dim(1);
  Tensor out({end - begin, cols});
  auto v = x.data();
  std::copy(v.begin() + static_cast<std::ptrdiff_t>(begin * cols),
            v.begin() + static_cast<std::ptrdiff_t>(end * cols), out.mutable_data().begin());
  record_op({x}, out, [x, out, begin, cols]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * cols + i] += g[i];
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Tensor out({m, n});
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = o.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* yrow = y.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += xv * yrow[j];
    }
  }
  record_op({a, b}, out, [a, b, out, m, k, n]() mutable {
    auto g = out.grad();
    auto x = a.data();
    auto y = b.data();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          if (xv == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xv * g[i * n + j];
        }
    }
  });
  return finished(out, "matmul");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  if (x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: bias length " + std::to_string(bias.dim(0)) +
                         " does not match " + shape_to_string(x.shape()));
  }
  const std::size_t c = bias.dim(0);
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto v = x.data();
  auto bv = bias.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] + bv[i % c];
  record_op({x, bias}, out, [x, bias, out, c]() mutable {
    auto g = out.grad();
    if (x.requires_grad()) {
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
    }
  });
  return finished(out, "add_bias");
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_bias(matmul(x, weight), bias);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "conv2d");
  require_rank(kernel, 4, "conv2d");
  const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  if (kernel.dim(2) != cin) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(2)) +
                         " input channels, got " + std::to_string(cin));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw DimensionError("conv2d: kernel sizes must be odd");
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
  Tensor out({ho, wo, cout});
  auto o = out.mutable_data();
  auto x = input.data();
  auto k = kernel.data();
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t oh = 0; oh < ho; ++oh) {
    for (std::size_t ow = 0; ow < wo; ++ow) {
      double* orow = o.data() + (oh * wo + ow) * cout;
      for (std::size_t ki = 0; ki < kh; ++ki) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) - pad;
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kj = 0; kj < kw; ++kj) {
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) - pad;
          if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* xin = x.data() + (static_cast<std::size_t>(ih) * w + iw) * cin;
          const double* kblock = k.data() + (ki * kw + kj) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = xin[ci];
            if (xv == 0.0) continue;
            const double* krow = kblock + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) orow[co] += xv * krow[co];
          }
        }
      }
    }
  }
  record_op({input, kernel}, out,
            [input, kernel, out, h, w, cin, kh, kw, cout, ho, wo, stride, pad]() mutable {
              auto g = out.grad();
              auto x = input.data();
              auto k = kernel.data();
              const bool want_x = input.requires_grad();
              const bool want_k = kernel.requires_grad();
              std::span<double> gx = want_x ? input.grad() : std::span<double>{};
              std::span<double> gk = want_k ? kernel.grad() : std::span<double>{};
              for (std::size_t oh = 0; oh < ho; ++oh) {
                for (std::size_t ow = 0; ow < wo; ++ow) {
                  const double* grow = g.data() + (oh * wo + ow) * cout;
                  for (std::size_t ki = 0; ki < kh; ++ki) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) - pad;
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kj = 0; kj < kw; ++kj) {
                      const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) - pad;
                      if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                      const std::size_t xbase = (static_cast<std::size_t>(ih) * w + iw) * cin;
                      const std::size_t kbase = (ki * kw + kj) * cin * cout;
                      for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double* krow = k.data() + kbase + ci * cout;
                        if (want_x) {
                          double s = 0.0;
                          for (std::size_t co = 0; co < cout; ++co) s += grow[co] * krow[co];
                          gx[xbase + ci] += s;
                        }
                        if (want_k) {
                          const double xv = x[xbase + ci];
                          if (xv == 0.0) continue;
                          double* gkrow = gk.data() + kbase + ci * cout;
                          for (std::size_t co = 0; co < cout; ++co) gkrow[co] += xv * grow[co];
                        }
                      }
                    }
                  }
                }
              }
            });
  return finished(out, "conv2d");
}

BatchNormState BatchNormState::fresh(std::size_t features, double eps, double momentum) {
  BatchNormState s;
  s.running_mean = Tensor({features}, 0.0);
  s.running_var = Tensor({features}, 1.0);
  s.eps = eps;
  s.momentum = momentum;
  return s;
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, NormMode mode,
                 BatchNormState& state) {
  require_rank(x, 2, "batchnorm");
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d || state.running_mean.numel() != d ||
      state.running_var.numel() != d) {
    throw DimensionError("batchnorm: parameter length does not match feature count");
  }
  auto v = x.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  Tensor out({n, d});
  auto o = out.mutable_data();

  if (mode == NormMode::kEval) {
    std::vector<double> inv_std(d);
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(rv[j] + state.eps);
    std::vector<double> mu(rm.begin(), rm.end());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        o[i * d + j] = gm[j] * (v[i * d + j] - mu[j]) * inv_std[j] + bt[j];
    record_op({x, gamma, beta}, out, [x, gamma, beta, out, n, d, inv_std, mu]() mutable {
      auto g = out.grad();
      auto v = x.data();
      auto gm = gamma.data();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * gm[j] * inv_std[j];
      }
      if (gamma.requires_grad()) {
        auto gg = gamma.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j)
            gg[j] += g[i * d + j] * (v[i * d + j] - mu[j]) * inv_std[j];
      }
      if (beta.requires_grad()) {
        auto gb = beta.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
      }
    });
    return finished(out, "batchnorm");
  }

  if (n < 2) throw InsufficientBatchError("batchnorm: train mode needs at least 2 rows");
  std::vector<double> mu(d, 0.0), var(d, 0.0), inv_std(d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += v[i * d + j];
  for (std::size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = v[i * d + j] - mu[j];
      var[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    var[j] /= static_cast<double>(n);
    inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
  }
  std::vector<double> xhat(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (v[i * d + j] - mu[j]) * inv_std[j];
      o[i * d + j] = gm[j] * xhat[i * d + j] + bt[j];
    }

  // Running variance tracks the unbiased estimate.
  auto rm = state.running_mean.mutable_data();
  auto rv = state.running_var.mutable_data();
  const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
  for (std::size_t j = 0; j < d; ++j) {
    rm[j] = (1.0 - state.momentum) * rm[j] + state.momentum * mu[j];
    rv[j] = (1.0 - state.momentum) * rv[j] + state.momentum * var[j] * unbias;
  }

  record_op({x, gamma, beta}, out, [x, gamma, beta, out, n, d, inv_std, xhat]() mutable {
    auto g = out.grad();
    auto gm = gamma.data();
    if (gamma.requires_grad()) {
      auto gg = gamma.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
    }
    if (beta.requires_grad()) {
      auto gb = beta.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
    }
    if (x.requires_grad()) {
      auto gx = x.grad();
      const double nn = static_cast<double>(n);
      for (std::size_t j = 0; j < d; ++j) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double dxh = g[i * d + j] * gm[j];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xhat[i * d + j];
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double dxh = g[i * d + j] * gm[j];
          gx[i * d + j] +=
              inv_std[j] / nn * (nn * dxh - sum_dxhat - xhat[i * d + j] * sum_dxhat_xhat);
        }
      }
    }
  });
  return finished(out, "batchnorm");
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("softmax: axis out of range");
  const Shape& s = x.shape();
  const std::size_t len = s[axis];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const std::size_t outer = x.numel() / (len * inner);
  Tensor out(s);
  auto o = out.mutable_data();
  auto v = x.data();
  for (std::size_t p = 0; p < outer; ++p) {
    for (std::size_t q = 0; q < inner; ++q) {
      const std::size_t base = p * len * inner + q;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, v[base + i * inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double e = std::exp(v[base + i * inner] - mx);
        o[base + i * inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < len; ++i) o[base + i * inner] /= z;
    }
  }
  record_op({x}, out, [x, out, len, inner, outer]() mutable {
    auto g = out.grad();
    auto y = out.data();
    auto gx = x.grad();
    for (std::size_t p = 0; p < outer; ++p) {
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t base = p * len * inner + q;
        double s = 0.0;
        for (std::size_t i = 0; i < len; ++i) s += g[base + i * inner] * y[base + i * inner];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t at = base + i * inner;
          gx[at] += y[at] * (g[at] - s);
        }
      }
    }
  });
  return finished(out, "softmax");
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("log_softmax: scalar input");
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * len;
    const double mx = *std::max_element(row, row + len);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) z += std::exp(row[i] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < len; ++i) o[r * len + i] = row[i] - lse;
  }
  record_op({x}, out, [x, out, len, rows]() mutable {
    auto g = out.grad();
    auto y = out.data();
    auto gx = x.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < len; ++i) s += g[r * len + i];
      for (std::size_t i = 0; i < len; ++i) {
        gx[r * len + i] += g[r * len + i] - std::exp(y[r * len + i]) * s;
      }
    }
  });
  return finished(out, "log_softmax");
}

Tensor global_max_pool(const Tensor& map) {
  require_rank(map, 3, "global_max_pool");
  const std::size_t pixels = map.dim(0) * map.dim(1);
  const std::size_t c = map.dim(2);
  if (pixels == 0 || c == 0) throw DimensionError("global_max_pool: empty map");
  Tensor out({c});
  auto o = out.mutable_data();
  auto v = map.data();
  std::vector<std::size_t> argmax(c, 0);
  for (std::size_t ch = 0; ch < c; ++ch) o[ch] = v[ch];
  for (std::size_t p = 1; p < pixels; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double val = v[p * c + ch];
      if (val > o[ch]) {
        o[ch] = val;
        argmax[ch] = p;
      }
    }
  }
  record_op({map}, out, [map, out, argmax, c]() mutable {
    auto g = out.grad();
    auto gm = map.grad();
    for (std::size_t ch = 0; ch < c; ++ch) gm[argmax[ch] * c + ch] += g[ch];
  });
  return finished(out, "global_max_pool");
}

Tensor global_avg_pool(const Tensor& map) {
  require_rank(map, 3, "global_avg_pool");
  const std::size_t pixels = map.dim(0) * map.dim(1);
  const std::size_t c = map.dim(2);
  if (pixels == 0 || c == 0) throw DimensionError("global_avg_pool: empty map");
  Tensor out({c});
  auto o = out.mutable_data();
  auto v = map.data();
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) o[ch] += v[p * c + ch];
  const double inv = 1.0 / static_cast<double>(pixels);
  for (double& x : o) x *= inv;
  record_op({map}, out, [map, out, pixels, c, inv]() mutable {
    auto g = out.grad();
    auto gm = map.grad();
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) gm[p * c + ch] += g[ch] * inv;
  });
  return finished(out, "global_avg_pool");
}

Tensor mask_rows(const Tensor& map, std::span<const double> mask) {
  require_rank(map, 3, "mask_rows");
  const std::size_t h = map.dim(0);
  if (mask.size() != h) throw DimensionError("mask_rows: mask length differs from map height");
  const std::size_t row = map.dim(1) * map.dim(2);
  std::vector<double> m(mask.begin(), mask.end());
  Tensor out(map.shape());
  auto o = out.mutable_data();
  auto v = map.data();
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t k = 0; k < row; ++k) o[i * row + k] = v[i * row + k] * m[i];
  record_op({map}, out, [map, out, m, row, h]() mutable {
    auto g = out.grad();
    auto gm = map.grad();
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t k = 0; k < row; ++k) gm[i * row + k] += g[i * row + k] * m[i];
  });
  return finished(out, "mask_rows");
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot) {
  require_same_shape(logits, one_hot, "softmax_cross_entropy");
  if (logits.rank() != 1 && logits.rank() != 2) {
    throw DimensionError("softmax_cross_entropy: logits must be [C] or [N,C]");
  }
  const std::size_t c = logits.shape().back();
  const std::size_t rows = logits.numel() / c;
  auto y = one_hot.data();
  std::vector<std::size_t> target(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t ones = 0;
    for (std::size_t k = 0; k < c; ++k) {
      const double t = y[r * c + k];
      if (t == 1.0) {
        ++ones;
        target[r] = k;
      } else if (t != 0.0) {
        throw LabelError("softmax_cross_entropy: target is not one-hot");
      }
    }
    if (ones != 1) throw LabelError("softmax_cross_entropy: target is not one-hot");
  }
  Tensor logp = log_softmax(logits);
  auto lp = logp.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) total -= lp[r * c + target[r]];
  Tensor out = Tensor::scalar(total);
  record_op({logp}, out, [logp, out, target, c]() mutable {
    const double g = out.grad()[0];
    auto gl = logp.grad();
    for (std::size_t r = 0; r < target.size(); ++r) gl[r * c + target[r]] -= g;
  });
  return finished(out, "softmax_cross_entropy");
}

Tensor clamped_cross_entropy(const Tensor& probs, const Tensor& one_hot, double floor,
                             bool* clamped) {
  require_same_shape(probs, one_hot, "clamped_cross_entropy");
  auto p = probs.data();
  auto y = one_hot.data();
  double total = 0.0;
  bool hit = false;
  std::vector<double> coeff(p.size(), 0.0);  // d(loss)/dP
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] == 0.0) continue;
    if (p[i] < floor) {
      hit = true;
      total -= y[i] * std::log(floor);
    } else {
      total -= y[i] * std::log(p[i]);
      coeff[i] = -y[i] / p[i];
    }
  }
  if (clamped != nullptr) *clamped = hit;
  Tensor out = Tensor::scalar(total);
  record_op({probs}, out, [probs, out, coeff]() mutable {
    const double g = out.grad()[0];
    auto gp = probs.grad();
    for (std::size_t i = 0; i < coeff.size(); ++i) gp[i] += g * coeff[i];
  });
  return finished(out, "clamped_cross_entropy");
}

Tensor log_one_plus_sum_exp(const Tensor& similarities, double sign, double alpha, double margin) {
  if (alpha <= 0.0) throw ContractError("log_one_plus_sum_exp: alpha must be positive");
  const std::size_t n = similarities.numel();
  if (n == 0) return Tensor::scalar(0.0);
  auto s = similarities.data();
  std::vector<double> z(n);
  double mx = 0.0;  // the implicit "1" term has exponent 0
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = sign * alpha * (s[i] - margin);
    mx = std::max(mx, z[i]);
  }
  double total = std::exp(-mx);
  for (std::size_t i = 0; i < n; ++i) total += std::exp(z[i] - mx);
  const double value = (mx + std::log(total)) / alpha;
  std::vector<double> weight(n);
  for (std::size_t i = 0; i < n; ++i) weight[i] = std::exp(z[i] - mx) / total;
  Tensor out = Tensor::scalar(value);
  record_op({similarities}, out, [similarities, out, weight, sign]() mutable {
    const double g = out.grad()[0];
    auto gs = similarities.grad();
    for (std::size_t i = 0; i < weight.size(); ++i) gs[i] += g * sign * weight[i];
  });
  return finished(out, "log_one_plus_sum_exp");
}

}  // namespace pah
