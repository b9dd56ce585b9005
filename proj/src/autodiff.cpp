#include "wearfuse/autodiff.hpp"

#include <cmath>
#include <utility>

#include "wearfuse/errors.hpp"
#include "wearfuse/kernels.hpp"

namespace wearfuse::ad {

namespace k = wearfuse::kernels;

// ---- GradMap / Accum / Tape ------------------------------------------------

const Tensor& GradMap::at(const Var& v) const {
  if (!v.tracked()) throw Error("GradMap: var is not tracked on any tape");
  return at_node(v.node());
}

const Tensor& GradMap::at_node(int node_id) const {
  if (node_id < 0 || static_cast<std::size_t>(node_id) >= grads_.size())
    throw Error("GradMap: node id " + std::to_string(node_id) + " out of range");
  return grads_[static_cast<std::size_t>(node_id)];
}

void Accum::add(int node_id, const Tensor& g) {
  Tensor& slot = grads_[static_cast<std::size_t>(node_id)];
  if (slot.numel() == 0) slot = Tensor::zeros(shapes_[static_cast<std::size_t>(node_id)]);
  if (!slot.same_shape(g))
    throw ShapeError("gradient accumulation: " + slot.shape_str() + " vs " + g.shape_str());
  double* d = slot.data();
  const double* s = g.data();
  for (std::size_t i = 0; i < slot.numel(); ++i) d[i] += s[i];
}

void Accum::add(int node_id, Tensor&& g) {
  Tensor& slot = grads_[static_cast<std::size_t>(node_id)];
  if (slot.numel() == 0) {
    if (g.shape() != shapes_[static_cast<std::size_t>(node_id)])
      throw ShapeError("gradient accumulation: expected " +
                       Tensor::shape_str(shapes_[static_cast<std::size_t>(node_id)]) + ", got " +
                       g.shape_str());
    slot = std::move(g);
    return;
  }
  add(node_id, g);
}

Var Tape::leaf(Tensor value) {
  auto payload = std::make_shared<const Tensor>(std::move(value));
  nodes_.push_back(Node{payload->shape(), Pull{}});
  return Var{payload, static_cast<int>(nodes_.size()) - 1, this};
}

Var Tape::make(Tensor value, Pull pull) {
  auto payload = std::make_shared<const Tensor>(std::move(value));
  nodes_.push_back(Node{payload->shape(), std::move(pull)});
  return Var{payload, static_cast<int>(nodes_.size()) - 1, this};
}

GradMap Tape::backward(const Var& loss) {
  if (loss.value().numel() != 1)
    throw ShapeError("backward: loss must be scalar, got " + loss.value().shape_str());
  std::vector<Tensor> grads(nodes_.size());
  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  for (const auto& n : nodes_) shapes.push_back(n.shape);

  if (loss.tracked()) {
    if (loss.tape() != this) throw Error("backward: loss belongs to a different tape");
    grads[static_cast<std::size_t>(loss.node())] = Tensor::full(loss.value().shape(), 1.0);
    Accum sink{grads, shapes};
    for (int i = loss.node(); i >= 0; --i) {
      Tensor& g = grads[static_cast<std::size_t>(i)];
      if (g.numel() == 0) continue;  // loss does not reach this node
      const Node& node = nodes_[static_cast<std::size_t>(i)];
      if (node.pull) node.pull(g, sink);
    }
  }
  // Unreached nodes get zero gradients of their shape.
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].numel() == 0) grads[i] = Tensor::zeros(shapes[i]);
  }
  return GradMap{std::move(grads)};
}

// ---- op helpers ------------------------------------------------------------

namespace {

Tape* pick_tape(std::initializer_list<const Var*> vars) {
  Tape* t = nullptr;
  for (const Var* v : vars) {
    if (!v->tracked()) continue;
    if (t == nullptr) {
      t = v->tape();
    } else if (t != v->tape()) {
      throw Error("op combines vars from two different tapes");
    }
  }
  return t;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " +
                     b.value().shape_str());
}

using PayloadPtr = std::shared_ptr<const Tensor>;

}  // namespace

// ---- matmul ----------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 2)
    throw ShapeError("matmul: right operand must be rank 2, got " + bv.shape_str());
  if (av.rank() != 1 && av.rank() != 2)
    throw ShapeError("matmul: left operand must be rank 1 or 2, got " + av.shape_str());
  const std::size_t kdim = av.rank() == 2 ? av.dim(1) : av.dim(0);
  if (kdim != bv.dim(0))
    throw ShapeError("matmul: inner dimensions disagree: " + av.shape_str() + " vs " +
                     bv.shape_str());
  const std::size_t n = bv.dim(1);

  Tensor out;
  if (av.rank() == 2) {
    const std::size_t m = av.dim(0);
    out = Tensor{Shape{m, n}};
    k::matmul(av.data(), bv.data(), out.data(), m, kdim, n);
  } else {
    out = Tensor{Shape{n}};
    k::vecmat(av.data(), bv.data(), out.data(), kdim, n);
  }

  Tape* t = pick_tape({&a, &b});
  if (!t) return Var{std::move(out)};
  PayloadPtr ap = a.payload(), bp = b.payload();
  const int an = a.node(), bn = b.node();
  return t->make(std::move(out), [ap, bp, an, bn, kdim, n](const Tensor& g, Accum& sink) {
    if (ap->rank() == 2) {
      const std::size_t m = ap->dim(0);
      if (an >= 0) {  // dA = g * B^T
        Tensor da{Shape{m, kdim}};
        k::matmul(g.data(), bp->data(), da.data(), m, n, kdim, false, true);
        sink.add(an, std::move(da));
      }
      if (bn >= 0) {  // dB = A^T * g
        Tensor db{Shape{kdim, n}};
        k::matmul(ap->data(), g.data(), db.data(), kdim, m, n, true, false);
        sink.add(bn, std::move(db));
      }
    } else {
      if (an >= 0) {  // dx = B * g
        Tensor da{Shape{kdim}};
        k::matvec(bp->data(), g.data(), da.data(), kdim, n);
        sink.add(an, std::move(da));
      }
      if (bn >= 0) {  // dB = x outer g
        Tensor db{Shape{kdim, n}};
        k::outer(ap->data(), g.data(), db.data(), kdim, n);
        sink.add(bn, std::move(db));
      }
    }
  });
}

// ---- elementwise binary ----------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out{a.value().shape()};
  k::zip(a.value().data(), b.value().data(), out.data(), out.numel(),
         [](double x, double y) { return x + y; });
  Tape* t = pick_tape({&a, &b});
  if (!t) return Var{std::move(out)};
  const int an = a.node(), bn = b.node();
  return t->make(std::move(out), [an, bn](const Tensor& g, Accum& sink) {
    if (an >= 0) sink.add(an, g);
    if (bn >= 0) sink.add(bn, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out{a.value().shape()};
  k::zip(a.value().data(), b.value().data(), out.data(), out.numel(),
         [](double x, double y) { return x - y; });
  Tape* t = pick_tape({&a, &b});
  if (!t) return Var{std::move(out)};
  const int an = a.node(), bn = b.node();
  return t->make(std::move(out), [an, bn](const Tensor& g, Accum& sink) {
    if (an >= 0) sink.add(an, g);
    if (bn >= 0) {
      Tensor ng{g.shape()};
      k::map_serial(g.data(), ng.data(), g.numel(), [](double x) { return -x; });
      sink.add(bn, std::move(ng));
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out{a.value().shape()};
  k::zip(a.value().data(), b.value().data(), out.data(), out.numel(),
         [](double x, double y) { return x * y; });
  Tape* t = pick_tape({&a, &b});
  if (!t) return Var{std::move(out)};
  PayloadPtr ap = a.payload(), bp = b.payload();
  const int an = a.node(), bn = b.node();
  return t->make(std::move(out), [ap, bp, an, bn](const Tensor& g, Accum& sink) {
    if (an >= 0) {
      Tensor da{g.shape()};
      k::zip_serial(g.data(), bp->data(), da.data(), g.numel(),
                    [](double gv, double bv) { return gv * bv; });
      sink.add(an, std::move(da));
    }
    if (bn >= 0) {
      Tensor db{g.shape()};
      k::zip_serial(g.data(), ap->data(), db.data(), g.numel(),
                    [](double gv, double av) { return gv * av; });
      sink.add(bn, std::move(db));
    }
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  Tensor out{a.value().shape()};
  k::zip(a.value().data(), b.value().data(), out.data(), out.numel(),
         [](double x, double y) { return x / y; });
  Tape* t = pick_tape({&a, &b});
  if (!t) return Var{std::move(out)};
  PayloadPtr ap = a.payload(), bp = b.payload();
  const int an = a.node(), bn = b.node();
  return t->make(std::move(out), [ap, bp, an, bn](const Tensor& g, Accum& sink) {
    const std::size_t n = g.numel();
    if (an >= 0) {
      Tensor da{g.shape()};
      k::zip_serial(g.data(), bp->data(), da.data(), n,
                    [](double gv, double bv) { return gv / bv; });
      sink.add(an, std::move(da));
    }
    if (bn >= 0) {
      Tensor db{g.shape()};
      const double* gd = g.data();
      const double* ad = ap->data();
      const double* bd = bp->data();
      double* out_d = db.data();
      for (std::size_t i = 0; i < n; ++i) out_d[i] = -gd[i] * ad[i] / (bd[i] * bd[i]);
      sink.add(bn, std::move(db));
    }
  });
}

Var add_row_bias(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 1)
    throw ShapeError("add_row_bias: bias must be rank 1, got " + bv.shape_str());
  if (av.cols() != bv.dim(0))
    throw ShapeError("add_row_bias: " + av.shape_str() + " vs bias " + bv.shape_str());
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out{av.shape()};
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = av.data() + i * n;
    double* orow = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] = arow[j] + bv[j];
  }
  Tape* t = pick_tape({&a, &b});
  if (!t) return Var{std::move(out)};
  const int an = a.node(), bn = b.node();
  return t->make(std::move(out), [an, bn, m, n](const Tensor& g, Accum& sink) {
    if (an >= 0) sink.add(an, g);
    if (bn >= 0) {
      Tensor db{Shape{n}};
      k::colsum(g.data(), db.data(), m, n);
      sink.add(bn, std::move(db));
    }
  });
}

// ---- scalar-by-constant and unaries ----------------------------------------

Var scale(const Var& a, double c) {
  Tensor out{a.value().shape()};
  k::map(a.value().data(), out.data(), out.numel(), [c](double x) { return c * x; });
  Tape* t = pick_tape({&a});
  if (!t) return Var{std::move(out)};
  const int an = a.node();
  return t->make(std::move(out), [an, c](const Tensor& g, Accum& sink) {
    Tensor da{g.shape()};
    k::map_serial(g.data(), da.data(), g.numel(), [c](double x) { return c * x; });
    sink.add(an, std::move(da));
  });
}

Var shift(const Var& a, double c) {
  Tensor out{a.value().shape()};
  k::map(a.value().data(), out.data(), out.numel(), [c](double x) { return x + c; });
  Tape* t = pick_tape({&a});
  if (!t) return Var{std::move(out)};
  const int an = a.node();
  return t->make(std::move(out),
                 [an](const Tensor& g, Accum& sink) { sink.add(an, g); });
}

namespace {

// Unary op with derivative expressed from saved output y.
template <class F, class DF>
Var unary_from_output(const Var& x, F fwd, DF dydx_from_y) {
  Tensor out{x.value().shape()};
  k::map(x.value().data(), out.data(), out.numel(), fwd);
  Tape* t = pick_tape({&x});
  if (!t) return Var{std::move(out)};
  auto yp = std::make_shared<const Tensor>(out);  // copy kept for backward
  const int xn = x.node();
  return t->make(std::move(out), [xn, yp, dydx_from_y](const Tensor& g, Accum& sink) {
    Tensor dx{g.shape()};
    k::zip_serial(g.data(), yp->data(), dx.data(), g.numel(),
                  [dydx_from_y](double gv, double yv) { return gv * dydx_from_y(yv); });
    sink.add(xn, std::move(dx));
  });
}

}  // namespace

Var tanh(const Var& x) {
  return unary_from_output(
      x, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& x) {
  return unary_from_output(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double y) { return y * (1.0 - y); });
}

Var exp(const Var& x) {
  return unary_from_output(
      x, [](double v) { return std::exp(v); }, [](double y) { return y; });
}

Var log(const Var& x) {
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    if (!(xv[i] > 0.0))
      throw DomainError("log: non-positive value " + std::to_string(xv[i]) + " at index " +
                        std::to_string(i));
  }
  Tensor out{xv.shape()};
  k::map(xv.data(), out.data(), out.numel(), [](double v) { return std::log(v); });
  Tape* t = pick_tape({&x});
  if (!t) return Var{std::move(out)};
  PayloadPtr xp = x.payload();
  const int xn = x.node();
  return t->make(std::move(out), [xn, xp](const Tensor& g, Accum& sink) {
    Tensor dx{g.shape()};
    k::zip_serial(g.data(), xp->data(), dx.data(), g.numel(),
                  [](double gv, double v) { return gv / v; });
    sink.add(xn, std::move(dx));
  });
}

Var neg(const Var& x) { return scale(x, -1.0); }

Var sqrt(const Var& x) {
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    if (xv[i] < 0.0)
      throw DomainError("sqrt: negative value " + std::to_string(xv[i]) + " at index " +
                        std::to_string(i));
  }
  return unary_from_output(
      x, [](double v) { return std::sqrt(v); }, [](double y) { return 0.5 / y; });
}

Var apply_unary(const Var& x, UnaryFn f) {
  switch (f) {
    case UnaryFn::tanh: return tanh(x);
    case UnaryFn::sigmoid: return sigmoid(x);
    case UnaryFn::exp: return exp(x);
    case UnaryFn::log: return log(x);
    case UnaryFn::negate: return neg(x);
    case UnaryFn::sqrt: return sqrt(x);
  }
  throw Error("apply_unary: unknown function");
}

Var clamp_min(const Var& x, double c) {
  Tensor out{x.value().shape()};
  k::map(x.value().data(), out.data(), out.numel(),
         [c](double v) { return v < c ? c : v; });
  Tape* t = pick_tape({&x});
  if (!t) return Var{std::move(out)};
  PayloadPtr xp = x.payload();
  const int xn = x.node();
  return t->make(std::move(out), [xn, xp, c](const Tensor& g, Accum& sink) {
    Tensor dx{g.shape()};
    k::zip_serial(g.data(), xp->data(), dx.data(), g.numel(),
                  [c](double gv, double v) { return v > c ? gv : 0.0; });
    sink.add(xn, std::move(dx));
  });
}

// ---- softmax / log-sum-exp --------------------------------------------------

namespace {

void softmax_values(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    total += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= total;
}

}  // namespace

Var softmax_row(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 || xv.numel() == 0)
    throw ShapeError("softmax_row: expects a non-empty rank-1 tensor, got " + xv.shape_str());
  const std::size_t n = xv.numel();
  Tensor out{xv.shape()};
  softmax_values(xv.data(), out.data(), n);
  Tape* t = pick_tape({&x});
  if (!t) return Var{std::move(out)};
  auto yp = std::make_shared<const Tensor>(out);
  const int xn = x.node();
  return t->make(std::move(out), [xn, yp, n](const Tensor& g, Accum& sink) {
    // dx_i = y_i * (g_i - sum_j g_j y_j)
    const double* y = yp->data();
    const double* gd = g.data();
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += gd[j] * y[j];
    Tensor dx{g.shape()};
    double* d = dx.data();
    for (std::size_t i = 0; i < n; ++i) d[i] = y[i] * (gd[i] - dot);
    sink.add(xn, std::move(dx));
  });
}

Var logsumexp_row(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 || xv.numel() == 0)
    throw ShapeError("logsumexp_row: expects a non-empty rank-1 tensor, got " + xv.shape_str());
  const std::size_t n = xv.numel();
  double mx = xv[0];
  for (std::size_t i = 1; i < n; ++i) mx = xv[i] > mx ? xv[i] : mx;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::exp(xv[i] - mx);
  Tensor out = Tensor::scalar(mx + std::log(total));
  Tape* t = pick_tape({&x});
  if (!t) return Var{std::move(out)};
  Tensor w{xv.shape()};
  softmax_values(xv.data(), w.data(), n);
  auto wp = std::make_shared<const Tensor>(std::move(w));
  const int xn = x.node();
  return t->make(std::move(out), [xn, wp, n](const Tensor& g, Accum& sink) {
    const double gv = g[0];
    Tensor dx{wp->shape()};
    const double* w_d = wp->data();
    double* d = dx.data();
    for (std::size_t i = 0; i < n; ++i) d[i] = gv * w_d[i];
    sink.add(xn, std::move(dx));
  });
}

// ---- reductions -------------------------------------------------------------

Var reduce_all(const Var& x, Reduce kind) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.numel();
  if (n == 0) throw ShapeError("reduce: empty tensor");
  double total = k::sum_serial(xv.data(), n);
  const double denom = kind == Reduce::mean ? static_cast<double>(n) : 1.0;
  Tensor out = Tensor::scalar(total / denom);
  Tape* t = pick_tape({&x});
  if (!t) return Var{std::move(out)};
  const int xn = x.node();
  const Shape xshape = xv.shape();
  return t->make(std::move(out), [xn, xshape, denom](const Tensor& g, Accum& sink) {
    sink.add(xn, Tensor::full(xshape, g[0] / denom));
  });
}

Var reduce_axis(const Var& x, Reduce kind, int axis) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2)
    throw ShapeError("reduce_axis: expects rank-2 tensor, got " + xv.shape_str());
  if (axis != 0 && axis != 1)
    throw ShapeError("reduce_axis: invalid axis " + std::to_string(axis));
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor out;
  double denom = 1.0;
  if (axis == 0) {
    out = Tensor{Shape{n}};
    k::colsum(xv.data(), out.data(), m, n);
    denom = kind == Reduce::mean ? static_cast<double>(m) : 1.0;
  } else {
    out = Tensor{Shape{m}};
    k::rowsum(xv.data(), out.data(), m, n);
    denom = kind == Reduce::mean ? static_cast<double>(n) : 1.0;
  }
  if (kind == Reduce::mean) {
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= denom;
  }
  Tape* t = pick_tape({&x});
  if (!t) return Var{std::move(out)};
  const int xn = x.node();
  return t->make(std::move(out), [xn, m, n, axis, denom](const Tensor& g, Accum& sink) {
    Tensor dx{Shape{m, n}};
    double* d = dx.data();
    const double* gd = g.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        d[i * n + j] = (axis == 0 ? gd[j] : gd[i]) / denom;
    sink.add(xn, std::move(dx));
  });
}

Var sum(const Var& x) { return reduce_all(x, Reduce::sum); }
Var mean(const Var& x) { return reduce_all(x, Reduce::mean); }

// ---- structural ops ----------------------------------------------------------

Var row(const Var& a, std::size_t i) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ShapeError("row: expects rank-2 tensor, got " + av.shape_str());
  const std::size_t m = av.dim(0), n = av.dim(1);
  if (i >= m) throw ShapeError("row: index " + std::to_string(i) + " out of " + std::to_string(m));
  Tensor out{Shape{n}};
  for (std::size_t j = 0; j < n; ++j) out[j] = av.data()[i * n + j];
  Tape* t = pick_tape({&a});
  if (!t) return Var{std::move(out)};
  const int an = a.node();
  return t->make(std::move(out), [an, i, m, n](const Tensor& g, Accum& sink) {
    Tensor da{Shape{m, n}};
    for (std::size_t j = 0; j < n; ++j) da.data()[i * n + j] = g[j];
    sink.add(an, std::move(da));
  });
}

Var segment(const Var& x, std::size_t off, std::size_t len) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1) throw ShapeError("segment: expects rank-1 tensor, got " + xv.shape_str());
  if (off + len > xv.numel())
    throw ShapeError("segment: [" + std::to_string(off) + ", " + std::to_string(off + len) +
                     ") out of " + std::to_string(xv.numel()));
  Tensor out{Shape{len}};
  for (std::size_t j = 0; j < len; ++j) out[j] = xv[off + j];
  Tape* t = pick_tape({&x});
  if (!t) return Var{std::move(out)};
  const int xn = x.node();
  const std::size_t total = xv.numel();
  return t->make(std::move(out), [xn, off, len, total](const Tensor& g, Accum& sink) {
    Tensor dx{Shape{total}};
    for (std::size_t j = 0; j < len; ++j) dx[off + j] = g[j];
    sink.add(xn, std::move(dx));
  });
}

Var index(const Var& x, std::size_t i) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1) throw ShapeError("index: expects rank-1 tensor, got " + xv.shape_str());
  if (i >= xv.numel())
    throw ShapeError("index: " + std::to_string(i) + " out of " + std::to_string(xv.numel()));
  Tensor out = Tensor::scalar(xv[i]);
  Tape* t = pick_tape({&x});
  if (!t) return Var{std::move(out)};
  const int xn = x.node();
  const std::size_t total = xv.numel();
  return t->make(std::move(out), [xn, i, total](const Tensor& g, Accum& sink) {
    Tensor dx{Shape{total}};
    dx[i] = g[0];
    sink.add(xn, std::move(dx));
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rank() > 1)
      throw ShapeError("concat: parts must be scalar or rank 1, got " + p.value().shape_str());
    total += p.value().numel();
  }
  Tensor out{Shape{total}};
  std::size_t off = 0;
  for (const Var& p : parts) {
    for (std::size_t j = 0; j < p.value().numel(); ++j) out[off + j] = p.value()[j];
    off += p.value().numel();
  }
  Tape* t = nullptr;
  for (const Var& p : parts) {
    Tape* pt = pick_tape({&p});
    if (pt && t && pt != t) throw Error("op combines vars from two different tapes");
    if (pt) t = pt;
  }
  if (!t) return Var{std::move(out)};
  struct Piece {
    int node;
    std::size_t off, len;
    bool scalar;
  };
  std::vector<Piece> pieces;
  std::size_t o = 0;
  for (const Var& p : parts) {
    pieces.push_back({p.node(), o, p.value().numel(), p.value().rank() == 0});
    o += p.value().numel();
  }
  return t->make(std::move(out), [pieces](const Tensor& g, Accum& sink) {
    for (const Piece& pc : pieces) {
      if (pc.node < 0) continue;
      Tensor dp = pc.scalar ? Tensor::scalar(g[pc.off]) : Tensor{Shape{pc.len}};
      if (!pc.scalar) {
        for (std::size_t j = 0; j < pc.len; ++j) dp[j] = g[pc.off + j];
      }
      sink.add(pc.node, std::move(dp));
    }
  });
}

Var smul(const Var& s, const Var& t_in) {
  const Tensor& sv = s.value();
  if (sv.numel() != 1)
    throw ShapeError("smul: scalar operand has shape " + sv.shape_str());
  const double sval = sv[0];
  Tensor out{t_in.value().shape()};
  k::map(t_in.value().data(), out.data(), out.numel(), [sval](double v) { return sval * v; });
  Tape* tape = pick_tape({&s, &t_in});
  if (!tape) return Var{std::move(out)};
  PayloadPtr tp = t_in.payload();
  const int sn = s.node(), tn = t_in.node();
  return tape->make(std::move(out), [sn, tn, tp, sval](const Tensor& g, Accum& sink) {
    if (sn >= 0) {
      double acc = 0.0;
      const double* gd = g.data();
      const double* td = tp->data();
      for (std::size_t i = 0; i < g.numel(); ++i) acc += gd[i] * td[i];
      sink.add(sn, Tensor::scalar(acc));
    }
    if (tn >= 0) {
      Tensor dt{g.shape()};
      k::map_serial(g.data(), dt.data(), g.numel(), [sval](double v) { return sval * v; });
      sink.add(tn, std::move(dt));
    }
  });
}

// ---- gradient checking --------------------------------------------------------

GradCheckReport grad_check(const ScalarFn& f, const std::vector<std::pair<std::string, Tensor>>& params,
                           double step, double tol) {
  GradCheckReport report;
  report.step = step;
  report.tol = tol;

  // Reverse-mode gradients.
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& [name, tensor] : params) leaves.push_back(tape.leaf(tensor));
  Var loss = f(leaves);
  GradMap grads = tape.backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Var& leaf : leaves) analytic.push_back(grads.at(leaf));

  // Central differences, flattened over (param, element) and run in parallel;
  // every evaluation builds its own perturbed copy so threads share nothing.
  struct Slot {
    std::size_t param, elem;
  };
  std::vector<Slot> slots;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t e = 0; e < params[p].second.numel(); ++e) slots.push_back({p, e});

  std::vector<double> numeric(slots.size(), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8)
#endif
  for (long long si = 0; si < static_cast<long long>(slots.size()); ++si) {
    const Slot slot = slots[static_cast<std::size_t>(si)];
    auto eval = [&](double delta) {
      std::vector<Var> consts;
      consts.reserve(params.size());
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (p == slot.param) {
          Tensor t = params[p].second;
          t[slot.elem] += delta;
          consts.push_back(Var{std::move(t)});
        } else {
          consts.push_back(Var{params[p].second});
        }
      }
      return f(consts).value()[0];
    };
    numeric[static_cast<std::size_t>(si)] = (eval(step) - eval(-step)) / (2.0 * step);
  }

  std::size_t si = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    GradCheckEntry entry;
    entry.name = params[p].first;
    for (std::size_t e = 0; e < params[p].second.numel(); ++e, ++si) {
      const double a = analytic[p][e];
      const double nu = numeric[si];
      const double denom = std::max({std::abs(a), std::abs(nu), 1e-8});
      const double rel = std::abs(a - nu) / denom;
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = e;
        entry.analytic = a;
        entry.numeric = nu;
      }
    }
    entry.pass = entry.max_rel_err < tol;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace wearfuse::ad
