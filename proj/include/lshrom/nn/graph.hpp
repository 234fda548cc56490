#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Graph is built fresh for every forward pass. Operations append nodes in
// topological order and register a backward closure; Graph::backward walks the
// tape in reverse. Learnable arrays live in a ParamStore that outlives graphs;
// binding a Param into a graph creates a leaf whose gradient is accumulated
// back into Param::grad.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lshrom::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
struct Param {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  // Buffers (batch-norm running statistics, power-iteration vectors) are
  // persisted with the parameters but never updated by the optimizer.
  bool trainable = true;
};

/// Insertion-ordered collection of named parameters with stable addresses.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  std::size_t add(std::string name, Shape shape, bool trainable = true);
  Param<T>& at(std::size_t index) { return params_[index]; }
  const Param<T>& at(std::size_t index) const { return params_[index]; }
  Param<T>& get(const std::string& name);
  const Param<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const { return index_.at(name); }
  std::size_t size() const { return params_.size(); }
  std::size_t trainable_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Param<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Graph;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  Param<T>* param = nullptr;
  std::function<void(Graph<T>&, Var self)> backward;
};

template <typename T>
class Graph {
 public:
  /// Constant input (no gradient).
  Var constant(Shape shape, std::vector<T> data);
  Var constant(Shape shape, std::span<const T> data);
  /// Leaf bound to a parameter; gradients flow into param.grad on backward().
  Var param(Param<T>& p);
  /// Result node of an operation. `requires_grad` should be true when any
  /// input requires a gradient; `backward` receives the node's own handle.
  Var emit(Shape shape, std::vector<T> value, bool requires_grad,
           std::function<void(Graph<T>&, Var)> backward);

  const Shape& shape(Var v) const { return nodes_[v.id].shape; }
  const std::vector<T>& value(Var v) const { return nodes_[v.id].value; }
  std::vector<T>& mutable_value(Var v) { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  /// Gradient buffer of v, allocated (zero) on first access.
  std::vector<T>& grad(Var v);
  bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }
  T scalar(Var v) const { return nodes_[v.id].value.at(0); }

  /// Back-propagates from a scalar node with seed d(loss)/d(v) = 1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node<T>> nodes_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace lshrom::nn
