#include "auv/tape.hpp"

#include <sstream>

namespace auv {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e < 0 ? 0 : e);
  return n;
}

template <class T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <class T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  Node n;
  n.external = &p.value;
  if (!p.frozen) {
    n.param = &p;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <class T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<int> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (int p : parents) {
    if (p < 0 || static_cast<std::size_t>(p) >= nodes_.size()) {
      throw Error(ErrorKind::InvalidArgument, "tape: parent handle out of range");
    }
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p)].requires_grad;
  }
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <class T>
T* Tape<T>::grad_ptr(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return nullptr;
  const Tensor<T>& v = n.external ? *n.external : n.value;
  if (n.grad.size() != v.size()) n.grad = Tensor<T>(v.shape());
  return n.grad.data();
}

template <class T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.tape() != this) throw Error(ErrorKind::InvalidArgument, "backward: loss belongs to another tape");
  const Tensor<T>& lv = value(loss.id());
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(lv.shape()));

  for (Node& n : nodes_) {
    if (n.param) n.param->zero_grad();
  }
  visited_ = 0;
  if (!requires_grad(loss.id())) return;

  grad_ptr(loss.id())[0] = T{1};
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param) {
      T* dst = n.param->grad.data();
      const T* src = n.grad.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
    } else if (n.backward) {
      // Move the gradient out so the closure may safely touch other nodes.
      Tensor<T> g = std::move(n.grad);
      n.backward(*this, g);
      ++visited_;
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace auv
