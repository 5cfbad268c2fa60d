#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cdi {

// (batch, channels, height, width); degenerate dims are 1.
struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * static_cast<std::size_t>(h) * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string to_string() const;
};

// One vertex of the computation graph. Ops allocate nodes, fill `value`, and
// register a backward function that scatters the node's grad into its
// parents' grads. The grad buffer exists only on nodes that require it.
class Node {
 public:
  explicit Node(const Shape& s) : shape(s), value(s.numel(), 0.0f) {}

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  }

  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;
};

// Value-semantics handle on a graph node. Ops build fresh nodes every call;
// parameter tensors are long-lived leaves whose grad buffers accumulate
// until explicitly zeroed.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, float value);
  static Tensor from_vector(const Shape& shape, std::vector<float> data,
                            bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  // The spans below alias the node's storage: they are valid only while some
  // Tensor handle to that node is alive, so bind an op result to a local
  // before holding its span.
  std::span<float> value();
  std::span<const float> value() const;
  // Valid only on requires_grad tensors (throws otherwise).
  std::span<float> grad();
  std::span<const float> grad() const;
  bool requires_grad() const;
  void zero_grad();

  // Scalar convenience for 1-element tensors.
  float item() const;

  // Reverse-mode sweep from this node. The no-argument form requires a
  // scalar and seeds with 1; the seeded form accepts any shape.
  void backward();
  void backward(std::span<const float> seed);

  const std::shared_ptr<Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

}  // namespace cdi
