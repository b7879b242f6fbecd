#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pah {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Copies share storage (handle semantics, like most autograd tensors);
/// use clone() for an independent deep copy. Feature maps are laid out
/// channels-last, [H, W, C].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  /// Gradient view; zero-filled on first access. Constness of the handle
  /// does not extend to the storage.
  std::span<double> grad() const;
  void zero_grad();

  Tensor clone() const;
  /// Detached copy with a new shape of equal element count (no tape edge).
  Tensor view_as(Shape shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  detail::TensorImpl& impl() const;
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of executed differentiable operations.
///
/// Recording order is a topological order, so replaying it in reverse
/// visits every node once, after all of its consumers. A tape belongs to
/// one thread; see TapeScope.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);
  /// Seeds d(loss)/d(loss) = 1 and propagates to every grad-requiring tensor.
  void backward(const Tensor& loss);
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

/// Makes a tape the active recorder on the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Convenience wrapper: loss must be a scalar recorded on `tape`.
void backward(const Tensor& loss, Tape& tape);

/// Throws NumericError when any value is NaN or infinite.
void check_finite(std::span<const double> values, const char* what);

}  // namespace pah
