#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spdectl {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Shape mismatches, invalid arguments and non-finite results all surface as
/// this exception; nothing in the numeric core fails silently.
class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grad buffers.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 array with optional reverse-mode gradient tracking.
///
/// Values are immutable once built; the only mutation path is
/// `mutable_values()` on leaf tensors, used by optimizers between steps.
/// Copying a Tensor copies a handle, not the data.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const { return shape().at(axis); }
  std::size_t numel() const;

  std::span<const double> values() const;
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  bool is_leaf() const;
  const char* op() const;

  /// Gradient accumulated by `backward`; empty until the node is reached.
  std::span<const double> grad() const;
  void zero_grad();

  /// Leaf-only in-place access for parameter updates.
  std::span<double> mutable_values();

  /// Same values, cut from the tape.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Accumulates d(root)/d(leaf) into every reachable leaf with requires_grad.
/// Intermediate gradients are reset first, so repeated calls on overlapping
/// graphs only accumulate at leaves.
void backward(const Tensor& root);

/// Builds a result node. Values are checked for NaN/Inf. The backward rule is
/// attached only when at least one input requires a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs,
                   std::function<void(detail::Node&)> backward_rule);

void check_finite(const char* op, std::span<const double> values);

}  // namespace spdectl
