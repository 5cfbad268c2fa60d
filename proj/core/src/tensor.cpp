#include "cdi/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "cdi/errors.hpp"

namespace cdi {

std::string Shape::to_string() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " +
         std::to_string(h) + ", " + std::to_string(w) + ")";
}

namespace {

void check_shape(const Shape& s) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
    throw DataError("tensor shape has a non-positive dim: " + s.to_string());
  }
  constexpr std::size_t kMaxElements = std::size_t{1} << 31;
  if (s.numel() > kMaxElements) {
    throw DataError("tensor too large: " + s.to_string());
  }
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<Node>(shape);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return wrap(std::move(node));
}

Tensor Tensor::full(const Shape& shape, float value) {
  Tensor t = zeros(shape, false);
  std::ranges::fill(t.node_->value, value);
  return t;
}

Tensor Tensor::from_vector(const Shape& shape, std::vector<float> data,
                           bool requires_grad) {
  check_shape(shape);
  if (data.size() != shape.numel()) {
    throw DataError("tensor data size " + std::to_string(data.size()) +
                    " does not match shape " + shape.to_string());
  }
  auto node = std::make_shared<Node>(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return wrap(std::move(node));
}

Tensor Tensor::wrap(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw DataError("use of an undefined tensor");
  return node_->shape;
}

std::span<float> Tensor::value() {
  if (!node_) throw DataError("use of an undefined tensor");
  return node_->value;
}

std::span<const float> Tensor::value() const {
  if (!node_) throw DataError("use of an undefined tensor");
  return node_->value;
}

std::span<float> Tensor::grad() {
  if (!node_) throw DataError("use of an undefined tensor");
  if (!node_->requires_grad) {
    throw DataError("grad requested on a tensor that does not require it");
  }
  node_->ensure_grad();
  return node_->grad;
}

std::span<const float> Tensor::grad() const {
  return const_cast<Tensor*>(this)->grad();
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::zero_grad() {
  if (!node_) throw DataError("use of an undefined tensor");
  if (node_->requires_grad) {
    node_->ensure_grad();
    std::ranges::fill(node_->grad, 0.0f);
  }
}

float Tensor::item() const {
  if (!node_) throw DataError("use of an undefined tensor");
  if (node_->value.size() != 1) {
    throw DataError("item() on a tensor of shape " + node_->shape.to_string());
  }
  return node_->value[0];
}

void Tensor::backward() {
  if (!node_) throw DataError("use of an undefined tensor");
  if (node_->value.size() != 1) {
    throw DataError("backward() without a seed requires a scalar tensor");
  }
  const float one = 1.0f;
  backward(std::span<const float>(&one, 1));
}

void Tensor::backward(std::span<const float> seed) {
  if (!node_) throw DataError("use of an undefined tensor");
  if (!node_->requires_grad) {
    throw DataError("backward() on a tensor that does not require grad");
  }
  if (seed.size() != node_->value.size()) {
    throw DataError("backward seed size mismatch");
  }

  // Iterative post-order DFS over grad-requiring parents; children end up
  // after their parents in `order`, so the reverse walk is a valid
  // reverse-topological schedule.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.contains(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) node->ensure_grad();
  for (std::size_t i = 0; i < seed.size(); ++i) node_->grad[i] += seed[i];

  // `order` is post-order (root last); walk it back to front.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn();
  }
}

}  // namespace cdi
