#include "cefnet/ad/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace cefnet::ad {

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw std::invalid_argument("tensor shape " + shape_str(shape) + " has a zero dimension");
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) { return full(shape, 0.0, requires_grad); }

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  check_shape(shape);
  return from(shape, std::vector<double>(numel_of(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (numel_of(shape) != values.size()) {
    throw std::invalid_argument("tensor shape " + shape_str(shape) + " needs " + std::to_string(numel_of(shape)) +
                                " values, got " + std::to_string(values.size()));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = shape;
  n->data = std::move(values);
  n->op = "leaf";
  Tensor t(std::move(n));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

detail::Node& Tensor::node() {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return *node_;
}

const detail::Node& Tensor::node() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return *node_;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = node().shape;
  if (axis >= s.size()) {
    throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape()));
  return node().data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw std::out_of_range("index rank does not match tensor rank");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw std::out_of_range("index out of range on axis " + std::to_string(axis));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node().data[flat];
}

Tensor& Tensor::set_requires_grad(bool on) {
  auto& n = node();
  if (!is_leaf()) throw std::logic_error("requires_grad can only be toggled on leaf tensors");
  n.requires_grad = on;
  if (on && n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
  if (!on) n.grad.clear();
  return *this;
}

std::span<const double> Tensor::grad() const { return node().grad; }

std::span<double> Tensor::mutable_grad() {
  auto& n = node();
  if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
  return n.grad;
}

void Tensor::zero_grad() {
  auto& n = node();
  if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

Tensor& Tensor::retain_grad() {
  node().retain_grad = true;
  return *this;
}

Tensor Tensor::clone() const {
  const auto& n = node();
  return from(n.shape, n.data, n.requires_grad && is_leaf());
}

Tensor Tensor::detach() const { return from(node().shape, node().data, false); }

Tensor Tensor::make_result(Shape shape, std::vector<double> data, std::string op, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = std::move(op);
  const bool tracked = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (tracked) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(backward);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward on a tensor that was not recorded on the tape");
  }
  if (loss.node().released) throw std::invalid_argument("backward through a graph that was already released");

  // Iterative post-order DFS gives a topological order of the recorded graph.
  // `order` holds handles so nodes stay alive while their parents release inputs.
  std::vector<Tensor> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<Tensor, std::size_t>> stack;
  stack.emplace_back(loss, 0);
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& top = stack.back();
    auto& inputs = top.first.node().inputs;
    if (top.second < inputs.size()) {
      Tensor in = inputs[top.second++];
      if (!in.defined() || !in.requires_grad()) continue;
      if (seen.insert(&in.node()).second) stack.emplace_back(std::move(in), 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  for (auto& t : order) {
    auto& n = t.node();
    if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
  }
  order.back().node().grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& n = it->node();
    if (!n.backward_fn) continue;
    n.backward_fn(n);
    n.backward_fn = nullptr;
    n.inputs.clear();
    n.released = true;
    if (!n.retain_grad) {
      n.grad.clear();
      n.grad.shrink_to_fit();
    }
  }
}

}  // namespace cefnet::ad
