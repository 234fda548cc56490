#include "lshrom/nn/graph.hpp"

#include <sstream>
#include <stdexcept>

namespace lshrom::nn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

template <typename T>
ParamStore<T>::ParamStore(const ParamStore& other) : params_(other.params_), index_(other.index_) {}

template <typename T>
ParamStore<T>& ParamStore<T>::operator=(const ParamStore& other) {
  params_ = other.params_;
  index_ = other.index_;
  return *this;
}

template <typename T>
std::size_t ParamStore<T>::add(std::string name, Shape shape, bool trainable) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
  const std::size_t n = numel(shape);
  Param<T> p;
  p.name = name;
  p.shape = std::move(shape);
  p.value.assign(n, T(0));
  p.grad.assign(trainable ? n : 0, T(0));
  p.trainable = trainable;
  params_.push_back(std::move(p));
  index_.emplace(std::move(name), params_.size() - 1);
  return params_.size() - 1;
}

template <typename T>
Param<T>& ParamStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second];
}

template <typename T>
const Param<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second];
}

template <typename T>
std::size_t ParamStore<T>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) {
    std::fill(p.grad.begin(), p.grad.end(), T(0));
  }
}

template <typename T>
Var Graph<T>::constant(Shape shape, std::vector<T> data) {
  if (numel(shape) != data.size()) {
    throw std::invalid_argument("constant: data size does not match shape " + shape_string(shape));
  }
  Node<T> node;
  node.shape = std::move(shape);
  node.value = std::move(data);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::constant(Shape shape, std::span<const T> data) {
  return constant(std::move(shape), std::vector<T>(data.begin(), data.end()));
}

template <typename T>
Var Graph<T>::param(Param<T>& p) {
  Node<T> node;
  node.shape = p.shape;
  node.value = p.value;
  node.requires_grad = p.trainable;
  node.param = &p;
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::emit(Shape shape, std::vector<T> value, bool requires_grad,
                   std::function<void(Graph<T>&, Var)> backward) {
  Node<T> node;
  node.shape = std::move(shape);
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
std::vector<T>& Graph<T>::grad(Var v) {
  auto& node = nodes_[v.id];
  if (node.grad.empty()) node.grad.assign(node.value.size(), T(0));
  return node.grad;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (nodes_[loss.id].value.size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  grad(loss)[0] = T(1);
  for (std::int32_t id = loss.id; id >= 0; --id) {
    auto& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.param != nullptr) {
      auto& pg = node.param->grad;
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += node.grad[i];
    } else if (node.backward) {
      node.backward(*this, Var{id});
    }
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace lshrom::nn
