#include "pah/optimizer.hpp"

#include <cmath>

#include "pah/errors.hpp"

namespace pah {

Optimizer::Kind parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::Kind::kSgd;
  if (name == "adam") return Optimizer::Kind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(NamedTensors params, Kind kind, double momentum, double weight_decay)
    : params_(std::move(params)), kind_(kind), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : params_) {
    first_.push_back({p.name + ".m", Tensor(p.tensor.shape())});
    if (kind_ == Kind::kAdam) second_.push_back({p.name + ".v", Tensor(p.tensor.shape())});
  }
}

void Optimizer::step(double lr) {
  ++steps_;
  constexpr double kBeta2 = 0.999, kEps = 1e-8;
  const double c1 = 1.0 - std::pow(momentum_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    auto w = p.mutable_data();
    auto g = p.grad();
    auto m = first_[i].tensor.mutable_data();
    if (kind_ == Kind::kSgd) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = momentum_ * m[j] + g[j] + weight_decay_ * w[j];
        w[j] -= lr * m[j];
      }
    } else {
      auto v = second_[i].tensor.mutable_data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double grad = g[j] + weight_decay_ * w[j];
        m[j] = momentum_ * m[j] + (1.0 - momentum_) * grad;
        v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * grad * grad;
        w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + kEps);
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

NamedTensors Optimizer::state() const {
  NamedTensors out = first_;
  out.insert(out.end(), second_.begin(), second_.end());
  return out;
}

}  // namespace pah
