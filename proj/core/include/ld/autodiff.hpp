#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ld/tensor.hpp"

// Tape-based reverse-mode differentiation.
//
// A Var is either a constant (no tape) or a node on exactly one Tape. Every
// operation whose inputs include a tracked Var is appended to that tape; an
// operation on constants only yields a constant. Backward rules are
// themselves written with these operations, so a gradient computed with
// create_graph=true is again differentiable (reverse-over-reverse).
namespace ld::ad {

class Tape;

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value);

  bool defined() const { return static_cast<bool>(value_); }
  bool tracked() const { return tape_ != nullptr; }
  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }

  // Constant sharing this value; never receives an adjoint.
  Var detached() const;

 private:
  friend class Tape;
  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

// Computes input adjoints from the output adjoint. `needs[i]` is false for
// inputs that do not need one; the returned vector may hold undefined Vars
// there.
using BackwardFn = std::function<std::vector<Var>(const std::vector<Var>& inputs, const Var& output,
                                                  const Var& grad, const std::vector<bool>& needs)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // New leaf tensor tracked on this tape.
  Var variable(Tensor value);

  // Appends an operation. Used by the op library; returns a constant when no
  // input is tracked.
  static Var record(const char* op, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t node) const { return nodes_.at(node).op; }

  // Adjoints of `loss` w.r.t. each entry of `wrt` (all must be tracked on this
  // tape). Inputs that do not influence the loss get zeros.
  std::vector<Var> gradient(const Var& loss, std::span<const Var> wrt, bool create_graph);

  // Node ids visited by the most recent gradient() call, in visit order.
  const std::vector<std::size_t>& last_backward_order() const { return last_order_; }

 private:
  struct Node {
    std::string op;
    std::vector<Var> inputs;
    Var output;  // detached view of the value
    BackwardFn backward;
  };

  Var push(std::string op, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  // deque: references stay valid while backward rules append nodes
  std::deque<Node> nodes_;
  std::vector<std::size_t> last_order_;
};

// Convenience wrappers around Tape::gradient.
std::vector<Tensor> grad(const Var& loss, std::span<const Var> wrt);
Tensor grad(const Var& loss, const Var& wrt);
std::vector<Var> grad_graph(const Var& loss, std::span<const Var> wrt);

inline Var constant(Tensor t) { return Var(std::move(t)); }

// ---- operations ----------------------------------------------------------

Var matmul(const Var& a, const Var& b);     // a·b
Var matmul_nt(const Var& a, const Var& b);  // a·bᵀ
Var matmul_tn(const Var& a, const Var& b);  // aᵀ·b
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var affine(const Var& a, double c, double shift);  // c·a + shift
Var scale_by(const Var& a, const Var& s);          // s one-element

Var add_row(const Var& a, const Var& row);  // a[m×n] + row[1×n] on every row
Var sum_rows(const Var& a);                 // [m×n] -> [1×n]
Var broadcast_rows(const Var& row, std::size_t m);
Var row_sum(const Var& a);                  // [m×n] -> [m×1]
Var broadcast_cols(const Var& col, std::size_t n);
Var sum(const Var& a);                      // -> scalar
Var mean(const Var& a);
Var expand(const Var& s, const Shape& shape);
Var dot(const Var& a, const Var& b);        // sum(a∘b)

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softmax_rows(const Var& z);
// log(max(p, floor)); gradient is zero where p <= floor.
Var log_clamped(const Var& p, double floor = 1e-12);
// 1/p where p > floor, else 0.
Var recip_clamped(const Var& p, double floor = 1e-12);

Var reshape(const Var& a, const Shape& shape);
Var pad_cols(const Var& a, std::size_t extra, double value);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);

// out[i] = a[index[i]] (0 where index[i] < 0); its adjoint is scatter_add.
using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;
Var gather(const Var& a, IndexMap index, const Shape& out_shape);
Var scatter_add(const Var& a, IndexMap index, const Shape& out_shape);

Var add_diag(const Var& a, double lambda);  // a + λI
// a⁻¹·b for symmetric positive definite a (Cholesky).
Var spd_solve(const Var& a, const Var& b);

}  // namespace ld::ad
