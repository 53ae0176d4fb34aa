#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cefnet::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

// One node of the dynamic tape. Leaves have no backward function; interior
// nodes keep their inputs alive until backward() releases them.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool retain_grad = false;
  bool released = false;
  std::string op;
  std::vector<Tensor> inputs;
  std::function<void(Node&)> backward_fn;
};

}  // namespace detail

/// Dense row-major double tensor with optional participation in reverse-mode
/// differentiation. Copies are shallow handles; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const { return node().shape; }
  std::size_t ndim() const { return node().shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node().data.size(); }

  std::span<double> data() { return node().data; }
  std::span<const double> data() const { return node().data; }
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node().requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return !node().backward_fn; }
  const std::string& op_name() const { return node().op; }

  /// Gradient buffer. Leaves that require grad always own a zero-initialised
  /// buffer; tensors outside the tape return an empty span.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  /// Keep this interior tensor's gradient after backward() (Grad-CAM needs it).
  Tensor& retain_grad();

  Tensor clone() const;
  /// Same values, cut off from the tape.
  Tensor detach() const;

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  // Engine internals.
  detail::Node& node();
  const detail::Node& node() const;
  static Tensor make_result(Shape shape, std::vector<double> data, std::string op,
                            std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate; the
/// recorded graph is released afterwards.
void backward(const Tensor& loss);

}  // namespace cefnet::ad
