#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "auv/tensor.hpp"

namespace auv {

// A trainable (or frozen) weight tensor together with its gradient buffer.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    grad.fill(T{0});
  }
};

template <class T>
class Tape;

// Lightweight handle to a node on a tape.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  int dim(int i) const { return value().dim(i); }
  bool requires_grad() const;
  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

// Records operations in creation order (which is a topological order) and
// runs reverse-mode accumulation. Single owner; not thread safe.
template <class T>
class Tape {
 public:
  // Receives the gradient of the node and pushes contributions to parents
  // through Tape::grad_ptr.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Detached value: never receives gradient.
  Var<T> constant(Tensor<T> value);
  // Leaf bound to a parameter. Frozen parameters are attached as constants
  // that alias the parameter storage.
  Var<T> param(Parameter<T>& p);
  Var<T> record(Tensor<T> value, std::vector<int> parents, BackwardFn backward);

  const Tensor<T>& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  const std::vector<int>& parents(int id) const { return nodes_[static_cast<std::size_t>(id)].parents; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of a node (zero-initialised on first access), or nullptr
  // when the node does not require gradient.
  T* grad_ptr(int id);

  // Reverse pass from a scalar loss. Gradients of every parameter attached
  // to this tape are reset first, so unreachable parameters end at zero.
  void backward(const Var<T>& loss);

  // Number of nodes whose backward closure ran in the last backward().
  std::size_t visited() const { return visited_; }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // stable addresses: Var::value() references outlive later records
  std::size_t visited_ = 0;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <class T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace auv
