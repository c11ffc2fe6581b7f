#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ssnas/diffcore/matrix.hpp"
#include "ssnas/diffcore/params.hpp"

namespace ssnas::diffcore {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode recording. Nodes are appended in evaluation order, so the
// creation order is a topological order and backward() walks it in reverse.
class Tape {
 public:
  // Receives the gradient flowing into the node's output; must accumulate
  // into the inputs through Tape::accumulate.
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  // Leaf bound to a stored parameter; backward() adds its gradient into
  // Parameter::grad.
  Var parameter(ParameterStore& store, const std::string& name);

  Var record(Matrix value, std::span<const Var> inputs, Backward backward);
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  // Zeros when nothing flowed into v.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  void accumulate(Var v, const Matrix& g);
  // Direct access for backward closures that scatter sparsely.
  Matrix* grad_buffer(Var v);

  // root must be 1x1. Seeds d(root)=1 and propagates to every node once.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  // Piecewise ops record which branch each element took; two evaluations
  // with equal signatures lie in the same smooth piece.
  void note_branch(bool taken) {
    branch_signature_ = (branch_signature_ ^ (taken ? 0x9dU : 0x3bU)) * 0x100000001b3ULL;
  }
  std::uint64_t branch_signature() const { return branch_signature_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* sink = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::uint64_t branch_signature_ = 0xcbf29ce484222325ULL;
};

}  // namespace ssnas::diffcore
