#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wearfuse/tensor.hpp"

namespace wearfuse::ad {

class Tape;

// A tensor participating in a reverse-mode differentiation graph. Carries a
// value (shared, immutable once wrapped) and, when tracked, the id of the
// node that produced it on its tape. Constants have node() == -1 and no tape.
class Var {
 public:
  Var() = default;
  /* implicit */ Var(Tensor value) : val_(std::make_shared<const Tensor>(std::move(value))) {}

  static Var constant(Tensor value) { return Var(std::move(value)); }

  const Tensor& value() const { return *val_; }
  bool defined() const { return static_cast<bool>(val_); }
  int node() const { return node_; }
  bool tracked() const { return node_ >= 0; }
  Tape* tape() const { return tape_; }

  const std::shared_ptr<const Tensor>& payload() const { return val_; }

 private:
  friend class Tape;
  Var(std::shared_ptr<const Tensor> v, int node, Tape* tape)
      : val_(std::move(v)), node_(node), tape_(tape) {}

  std::shared_ptr<const Tensor> val_;
  int node_ = -1;
  Tape* tape_ = nullptr;
};

// Gradients produced by one backward pass, indexed by node id. Nodes the loss
// does not reach hold zero tensors of the node's shape.
class GradMap {
 public:
  const Tensor& at(const Var& v) const;
  const Tensor& at_node(int node_id) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  explicit GradMap(std::vector<Tensor> grads) : grads_(std::move(grads)) {}
  std::vector<Tensor> grads_;
};

// Gradient sink handed to a node's pull function during backward.
class Accum {
 public:
  // grads[node] += g (allocates zeros on first touch).
  void add(int node_id, const Tensor& g);
  void add(int node_id, Tensor&& g);

 private:
  friend class Tape;
  Accum(std::vector<Tensor>& grads, const std::vector<Shape>& shapes)
      : grads_(grads), shapes_(shapes) {}
  std::vector<Tensor>& grads_;
  const std::vector<Shape>& shapes_;
};

// Dynamic tape rebuilt per forward pass. Node creation order is a topological
// order by construction; backward walks it once in reverse, accumulating
// gradients additively across fan-out.
class Tape {
 public:
  using Pull = std::function<void(const Tensor& grad_out, Accum& sink)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Tracked leaf (parameter or input we want gradients for).
  Var leaf(Tensor value);

  // Low-level node record; ops are built on this. `pull` receives the node's
  // output gradient and distributes it to the parents it captured.
  Var make(Tensor value, Pull pull);

  std::size_t size() const { return nodes_.size(); }

  // Reverse pass from a scalar loss. Rejects non-scalar losses.
  GradMap backward(const Var& loss);

 private:
  struct Node {
    Shape shape;
    Pull pull;  // empty for leaves
  };
  std::vector<Node> nodes_;
};

// ---- Operations ----------------------------------------------------------
// Each op computes its forward value through the kernels and, when any input
// is tracked, records a node whose pull applies the analytic derivative.
// Combining vars from two different tapes is an error.

// Matrix product: [m x k]*[k x n] -> [m x n], or [k]*[k x n] -> [n].
Var matmul(const Var& a, const Var& b);

// Elementwise, same shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

// A[m x n] + b[n] broadcast over rows (rank-1 A is one row).
Var add_row_bias(const Var& a, const Var& b);

// scalar-by-constant family
Var scale(const Var& a, double c);
Var shift(const Var& a, double c);

enum class UnaryFn { tanh, sigmoid, exp, log, negate, sqrt };
Var apply_unary(const Var& x, UnaryFn f);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);  // domain error on non-positive input, names the index
Var neg(const Var& x);
Var sqrt(const Var& x);

// y = max(x, c) elementwise; gradient passes only where x > c.
Var clamp_min(const Var& x, double c);

// Row softmax/log-sum-exp over a rank-1 tensor, max-subtracted.
Var softmax_row(const Var& x);
Var logsumexp_row(const Var& x);

enum class Reduce { sum, mean };
Var reduce_all(const Var& x, Reduce kind);             // -> scalar
Var reduce_axis(const Var& x, Reduce kind, int axis);  // rank-2, axis 0|1 -> rank-1
Var sum(const Var& x);
Var mean(const Var& x);

// Structural ops.
Var row(const Var& a, std::size_t i);                    // [m x n] -> [n]
Var segment(const Var& x, std::size_t off, std::size_t len);  // rank-1 slice
Var index(const Var& x, std::size_t i);                  // rank-1 -> scalar
Var concat(std::span<const Var> parts);                  // rank-1 pieces -> rank-1
Var smul(const Var& s, const Var& t);                    // scalar * tensor

// ---- Gradient checking ----------------------------------------------------

// f builds a scalar loss from the given parameter vars; it is called with
// tracked leaves for the reverse-mode pass and with constants for the
// central-difference evaluations.
using ScalarFn = std::function<Var(std::span<const Var>)>;

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double step = 0.0;
  double tol = 0.0;
  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
};

// Compares reverse-mode gradients against (f(x+h)-f(x-h))/2h per entry.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
// Finite-difference evaluations run in parallel; results do not depend on
// the thread count.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<std::pair<std::string, Tensor>>& params,
                           double step, double tol);

}  // namespace wearfuse::ad
