#pragma once

#include <cstddef>
#include <string>

#include "pah/nn.hpp"

namespace pah {

/// First-order optimizer over a fixed list of named parameters. State
/// tensors are named after their parameter so checkpoints can restore them.
class Optimizer {
 public:
  enum class Kind { kSgd, kAdam };

  Optimizer() = default;
  Optimizer(NamedTensors params, Kind kind, double momentum, double weight_decay);

  /// Applies one update with learning rate `lr` from the current gradients.
  void step(double lr);
  void zero_grad();

  NamedTensors state() const;
  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t steps) { steps_ = steps; }

 private:
  NamedTensors params_;
  NamedTensors first_;   // momentum / first moment
  NamedTensors second_;  // second moment (adam)
  Kind kind_ = Kind::kSgd;
  double momentum_ = 0.9;
  double weight_decay_ = 0.0;
  std::size_t steps_ = 0;
};

Optimizer::Kind parse_optimizer(const std::string& name);

}  // namespace pah
