#include "ssnas/diffcore/tape.hpp"

#include "ssnas/common/error.hpp"

namespace ssnas::diffcore {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw Error("Var::scalar: value is not 1x1");
  return v[0];
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(ParameterStore& store, const std::string& name) {
  Parameter& p = store.param(name);
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw Error("Tape::record: input from another tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix* Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return &n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Matrix* buf = grad_buffer(v);
  if (buf == nullptr) return;
  buf->add_in_place(g);
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw Error("Tape::backward: root from another tape");
  if (nodes_[root.id()].value.size() != 1) throw Error("Tape::backward: root must be a scalar");
  for (auto& n : nodes_) n.grad = Matrix();
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Matrix(1, 1, 1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    // Inputs always have smaller ids, so accumulate() never touches n.
    if (n.backward) n.backward(*this, n.grad);
    if (n.sink != nullptr) {
      if (n.sink->grad.empty()) n.sink->grad = Matrix(n.value.rows(), n.value.cols());
      n.sink->grad.add_in_place(n.grad);
    }
  }
}

}  // namespace ssnas::diffcore
