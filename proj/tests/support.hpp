#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pah/tensor.hpp"

namespace pah::test {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor(shape, std::move(v), requires_grad);
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t coords = 0;
};

/// Central finite differences against the tape gradient. `loss` must rebuild
/// the graph from the current values of `params` on every call. At most
/// `max_coords` coordinates per tensor are probed; the error of a tensor is
/// |analytic - numeric| / max(|analytic|, |numeric|) over those coordinates.
inline GradCheck grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                            std::mt19937_64& rng, std::size_t max_coords = 24, double h = 1e-5) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor l = loss();
    tape.backward(l);
  }
  GradCheck out;
  for (auto& p : params) {
    std::vector<std::size_t> idx(p.numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), max_coords));
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : idx) {
      auto v = p.mutable_data();
      const double saved = v[i];
      v[i] = saved + h;
      const double up = loss().item();
      v[i] = saved - h;
      const double down = loss().item();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      ++out.coords;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    if (denom < 1e-7) continue;  // both vanish: nothing to compare
    out.max_rel_error = std::max(out.max_rel_error, std::sqrt(diff2) / denom);
  }
  return out;
}

}  // namespace pah::test
