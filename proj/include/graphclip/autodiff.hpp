#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "graphclip/matrix.hpp"

// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records every operation of one forward pass. Values are immutable
// once recorded; gradients are allocated lazily and only for nodes on a path
// from a leaf that requires grad. Tapes are single-use and per call.
namespace graphclip::ad {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Leaves.
  Var constant(Matrix value);
  Var leaf(Matrix value, bool requires_grad = true);
  // Leaf that references external storage (e.g. a ParamStore tensor), which
  // must outlive the tape.
  Var param(const Matrix& value, bool requires_grad = true);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient of the last backward pass; zeros if the node received none.
  Matrix grad(Var v) const;

  // Propagates `seed` (same shape as root) back through the tape.
  void backward(Var root, const Matrix& seed);
  // Scalar form: root must be 1×1.
  void backward(Var root, double seed = 1.0);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Operations.
  Var matmul(Var a, Var b);                          // a · b
  Var matmul_nt(Var a, Var b);                       // a · bᵀ
  Var matmul_const_left(const Matrix& m, Var x);     // m · x, m constant
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);                       // broadcast 1×m row over a
  Var scale(Var a, double s);
  Var gelu(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var softmax_rows(Var a);
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  Var concat_cols(std::span<const Var> parts);
  Var mean_rows(Var a);
  Var l2_normalize_rows(Var a);
  Var sum_all(Var a);

 private:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Matrix owned;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;

    const Matrix& value() const { return ref ? *ref : owned; }
  };

  Var push(Matrix value, bool requires_grad, BackwardFn fn);
  bool any_requires(std::initializer_list<Var> vs) const;
  const Node& node(Var v) const;
  // Accumulates g into the gradient slot of v (no-op if v needs no grad).
  void accumulate(Var v, const Matrix& g);
  const Matrix& upstream(std::size_t self) const { return nodes_[self].grad; }

  std::vector<Node> nodes_;
};

}  // namespace graphclip::ad
