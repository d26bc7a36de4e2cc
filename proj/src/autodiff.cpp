#include "gpnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gpnn {

// -- Var / Tape ---------------------------------------------------------------

const Tensor& Var::value() const {
  if (!tape_) throw TapeError("use of an unbound Var");
  return tape_->nodes_[id_].value;
}

Tape& Var::tape() const {
  if (!tape_) throw TapeError("use of an unbound Var");
  return *tape_;
}

void Tape::check_owner(Var v) const {
  if (!v.valid()) throw TapeError("use of an unbound Var");
  if (v.tape_ != this || v.id_ >= nodes_.size())
    throw TapeError("tensor is not recorded on this tape");
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, recording(), {}});
  return Var(this, nodes_.size() - 1);
}

bool Tape::requires_grad(Var v) const {
  check_owner(v);
  return nodes_[v.id_].requires_grad;
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool needs = false;
  if (recording()) {
    for (const Var& in : inputs) {
      check_owner(in);
      needs = needs || nodes_[in.id_].requires_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
}

Tensor* Tape::grad_sink(Var v) {
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Tensor::zeros(node.value.shape());
  return &node.grad;
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (differentiated_)
    throw TapeError("backward() called twice on the same recording; clear() and re-record");
  if (!recording()) throw TapeError("backward() on a no_grad tape");
  if (nodes_[loss.id_].value.size() != 1)
    throw TapeError("backward() needs a scalar loss, got shape " +
                    to_string(nodes_[loss.id_].value.shape()));
  differentiated_ = true;
  if (!nodes_[loss.id_].requires_grad) return;
  nodes_[loss.id_].grad = Tensor(nodes_[loss.id_].value.shape(), 1.0);
  // Node ids are assigned in evaluation order, so descending ids are a
  // reverse topological order.
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, node.value, node.grad);
  }
}

Tensor Tape::grad(Var v) const {
  check_owner(v);
  const Node& node = nodes_[v.id_];
  if (node.grad.empty()) return Tensor::zeros(node.value.shape());
  return node.grad;
}

void Tape::clear() {
  nodes_.clear();
  differentiated_ = false;
}

// -- helpers ------------------------------------------------------------------

namespace {

Tape& common_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid()) throw TapeError(std::string(op) + ": unbound operand");
  if (&a.tape() != &b.tape()) throw TapeError(std::string(op) + ": operands on different tapes");
  return a.tape();
}

void accumulate(Tape& tape, Var v, const Tensor& g) {
  if (Tensor* sink = tape.grad_sink(v)) {
    auto dst = sink->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size())
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + to_string(shape));
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <class F, class D>
Var unary(Var a, F f, D dfdx_from_y_x) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape().record(std::move(y), {a},
                         [a, dfdx_from_y_x](Tape& t, const Tensor& out, const Tensor& g) {
                           Tensor* sink = t.grad_sink(a);
                           if (!sink) return;
                           const Tensor& x = a.value();
                           for (std::size_t i = 0; i < g.size(); ++i)
                             (*sink)[i] += g[i] * dfdx_from_y_x(out[i], x[i]);
                         });
}

// c[m×n] += a[m×k] · b[k×n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m×n] += a[m×k] · b[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] += s;
    }
  }
}

// c[k×n] += a[m×k]ᵀ · b[m×n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

// -- linear algebra -----------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& tape = common_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw DimensionError("matmul: cannot multiply " + to_string(av.shape()) + " by " +
                         to_string(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out = Tensor::zeros({m, n});
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* da = t.grad_sink(a))
      gemm_nt(g.data().data(), b.value().data().data(), da->data().data(), m, n, k);
    if (Tensor* db = t.grad_sink(b))
      gemm_tn(a.value().data().data(), g.data().data(), db->data().data(), m, k, n);
  });
}

Var linear(Var x, Var weight, Var bias) {
  Tape& tape = common_tape(x, weight, "linear");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (wv.rank() != 2 || xv.shape().back() != wv.dim(1))
    throw DimensionError("linear: input " + to_string(xv.shape()) +
                         " incompatible with weight " + to_string(wv.shape()));
  const std::size_t in = wv.dim(1), out_dim = wv.dim(0), rows = xv.size() / in;
  if (bias.valid()) {
    common_tape(x, bias, "linear");
    if (bias.value().shape() != Shape{out_dim})
      throw DimensionError("linear: bias " + to_string(bias.value().shape()) +
                           " does not match weight " + to_string(wv.shape()));
  }
  Shape out_shape = xv.shape();
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  if (bias.valid()) {
    const Tensor& bv = bias.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + r * out_dim);
  }
  gemm_nt(xv.data().data(), wv.data().data(), out.data().data(), rows, in, out_dim);
  std::vector<Var> inputs{x, weight};
  if (bias.valid()) inputs.push_back(bias);
  return tape.record(std::move(out), inputs,
                     [x, weight, bias, rows, in, out_dim](Tape& t, const Tensor&, const Tensor& g) {
                       if (Tensor* dx = t.grad_sink(x))
                         gemm_nn(g.data().data(), weight.value().data().data(),
                                 dx->data().data(), rows, out_dim, in);
                       if (Tensor* dw = t.grad_sink(weight))
                         gemm_tn(g.data().data(), x.value().data().data(), dw->data().data(),
                                 rows, out_dim, in);
                       if (bias.valid()) {
                         if (Tensor* db = t.grad_sink(bias))
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < out_dim; ++j)
                               (*db)[j] += g[r * out_dim + j];
                       }
                     });
}

// -- elementwise --------------------------------------------------------------

Var add(Var a, Var b) {
  Tape& tape = common_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& tape = common_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    accumulate(t, a, g);
    if (Tensor* db = t.grad_sink(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& tape = common_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* da = t.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * b.value()[i];
    if (Tensor* db = t.grad_sink(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * a.value()[i];
  });
}

Var scale(Var a, double factor) { return affine(a, factor, 0.0); }

Var affine(Var a, double alpha, double beta) {
  return unary(
      a, [alpha, beta](double x) { return alpha * x + beta; },
      [alpha](double, double) { return alpha; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double y, double) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double y, double) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var log_clamped(Var a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double, double x) { return x >= floor ? 1.0 / x : 0.0; });
}

// -- structural ---------------------------------------------------------------

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  Tape& tape = parts.front().tape();
  const Shape& first = parts.front().shape();
  if (axis >= first.size())
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    common_tape(parts.front(), p, "concat");
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    if (!ok)
      throw DimensionError("concat: shape " + to_string(s) + " incompatible with " +
                           to_string(first) + " along axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  const AxisSplit os = split_axis(out_shape, axis, "concat");
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t chunk = v.dim(axis) * os.inner;
    for (std::size_t o = 0; o < os.outer; ++o)
      std::copy_n(v.data().begin() + o * chunk, chunk,
                  out.data().begin() + o * os.extent * os.inner + offset * os.inner);
    offsets.push_back(offset);
    offset += v.dim(axis);
  }
  return tape.record(std::move(out), parts,
                     [parts, offsets, os, axis](Tape& t, const Tensor&, const Tensor& g) {
                       for (std::size_t i = 0; i < parts.size(); ++i) {
                         Tensor* sink = t.grad_sink(parts[i]);
                         if (!sink) continue;
                         const std::size_t chunk = parts[i].shape()[axis] * os.inner;
                         for (std::size_t o = 0; o < os.outer; ++o) {
                           const double* src =
                               g.data().data() + o * os.extent * os.inner + offsets[i] * os.inner;
                           double* dst = sink->data().data() + o * chunk;
                           for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
                         }
                       }
                     });
}

Var softmax(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  Tensor out(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = x[base];
      for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, x[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(x[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= z;
    }
  return a.tape().record(std::move(out), {a}, [a, s](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor* sink = t.grad_sink(a);
    if (!sink) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k)
          dot += g[base + k * s.inner] * y[base + k * s.inner];
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t i = base + k * s.inner;
          (*sink)[i] += y[i] * (g[i] - dot);
        }
      }
  });
}

Var reduce_sum(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const AxisSplit s = split_axis(x.shape(), axis, "reduce_sum");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.extent; ++k)
      for (std::size_t in = 0; in < s.inner; ++in)
        out[o * s.inner + in] += x[(o * s.extent + k) * s.inner + in];
  return a.tape().record(std::move(out), {a}, [a, s](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* sink = t.grad_sink(a);
    if (!sink) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.extent; ++k)
        for (std::size_t in = 0; in < s.inner; ++in)
          (*sink)[(o * s.extent + k) * s.inner + in] += g[o * s.inner + in];
  });
}

Var sum(Var a) {
  const double total = a.value().sum();
  return a.tape().record(Tensor::scalar(total), {a}, [a](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* sink = t.grad_sink(a))
      for (double& v : sink->data()) v += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var l1(Var a, Var b) {
  Tape& tape = common_tape(a, b, "l1");
  require_same_shape(a.value(), b.value(), "l1");
  const std::size_t n = a.value().size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(a.value()[i] - b.value()[i]);
  return tape.record(Tensor::scalar(total / static_cast<double>(n)), {a, b},
                     [a, b, n](Tape& t, const Tensor&, const Tensor& g) {
                       const double w = g[0] / static_cast<double>(n);
                       Tensor* da = t.grad_sink(a);
                       Tensor* db = t.grad_sink(b);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double d = a.value()[i] - b.value()[i];
                         const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                         if (da) (*da)[i] += w * sgn;
                         if (db) (*db)[i] -= w * sgn;
                       }
                     });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* sink = t.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*sink)[i] += g[i];
  });
}

Var take_rows(Var a, const std::vector<std::size_t>& rows) {
  const Tensor& x = a.value();
  if (rows.empty()) throw DimensionError("take_rows: empty row selection");
  const std::size_t stride = x.size() / x.dim(0);
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.dim(0))
      throw DimensionError("take_rows: row " + std::to_string(rows[r]) + " out of range for " +
                           to_string(x.shape()));
    std::copy_n(x.data().begin() + rows[r] * stride, stride, out.data().begin() + r * stride);
  }
  return a.tape().record(std::move(out), {a}, [a, rows, stride](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* sink = t.grad_sink(a);
    if (!sink) return;
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < stride; ++j) (*sink)[rows[r] * stride + j] += g[r * stride + j];
  });
}

// -- graph primitives ---------------------------------------------------------

Var pair_grid(Var left, Var right, Var edges, std::size_t width) {
  Tape& tape = common_tape(left, right, "pair_grid");
  common_tape(left, edges, "pair_grid");
  const Tensor& l = left.value();
  const Tensor& r = right.value();
  const Tensor& e = edges.value();
  if (l.rank() != 2 || r.rank() != 2 || e.rank() != 3 || l.dim(0) != r.dim(0) ||
      e.dim(0) != l.dim(0) || e.dim(1) != l.dim(0))
    throw DimensionError("pair_grid: incompatible shapes " + to_string(l.shape()) + ", " +
                         to_string(r.shape()) + ", " + to_string(e.shape()));
  const std::size_t n = l.dim(0), a = l.dim(1), b = r.dim(1), c = e.dim(2);
  const std::size_t natural = a + b + c;
  if (width == 0) width = natural;
  if (width < natural)
    throw DimensionError("pair_grid: width " + std::to_string(width) + " smaller than " +
                         std::to_string(natural));
  Tensor out = Tensor::zeros({n, n, width});
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t w = 0; w < n; ++w) {
      double* cell = out.data().data() + (v * n + w) * width;
      std::copy_n(l.data().begin() + v * a, a, cell);
      std::copy_n(r.data().begin() + w * b, b, cell + a);
      std::copy_n(e.data().begin() + (v * n + w) * c, c, cell + a + b);
    }
  return tape.record(std::move(out), {left, right, edges},
                     [left, right, edges, n, a, b, c, width](Tape& t, const Tensor&, const Tensor& g) {
                       Tensor* dl = t.grad_sink(left);
                       Tensor* dr = t.grad_sink(right);
                       Tensor* de = t.grad_sink(edges);
                       for (std::size_t v = 0; v < n; ++v)
                         for (std::size_t w = 0; w < n; ++w) {
                           const double* cell = g.data().data() + (v * n + w) * width;
                           if (dl)
                             for (std::size_t k = 0; k < a; ++k) (*dl)[v * a + k] += cell[k];
                           if (dr)
                             for (std::size_t k = 0; k < b; ++k) (*dr)[w * b + k] += cell[a + k];
                           if (de)
                             for (std::size_t k = 0; k < c; ++k)
                               (*de)[(v * n + w) * c + k] += cell[a + b + k];
                         }
                     });
}

Var edge_weighted_sum(Var weights, Var values) {
  Tape& tape = common_tape(weights, values, "edge_weighted_sum");
  const Tensor& wt = weights.value();
  const Tensor& val = values.value();
  if (wt.rank() != 2 || val.rank() != 3 || wt.dim(0) != wt.dim(1) || val.dim(0) != wt.dim(0) ||
      val.dim(1) != wt.dim(0))
    throw DimensionError("edge_weighted_sum: weights " + to_string(wt.shape()) +
                         " incompatible with values " + to_string(val.shape()));
  const std::size_t n = wt.dim(0), d = val.dim(2);
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t w = 0; w < n; ++w) {
      if (w == v) continue;
      const double a = wt.at(v, w);
      const double* m = val.data().data() + (v * n + w) * d;
      for (std::size_t k = 0; k < d; ++k) out.at(v, k) += a * m[k];
    }
  return tape.record(std::move(out), {weights, values},
                     [weights, values, n, d](Tape& t, const Tensor&, const Tensor& g) {
                       Tensor* dw = t.grad_sink(weights);
                       Tensor* dv = t.grad_sink(values);
                       const Tensor& wt = weights.value();
                       const Tensor& val = values.value();
                       for (std::size_t v = 0; v < n; ++v)
                         for (std::size_t w = 0; w < n; ++w) {
                           if (w == v) continue;
                           const double* gv = g.data().data() + v * d;
                           const std::size_t base = (v * n + w) * d;
                           if (dw) {
                             double s = 0.0;
                             for (std::size_t k = 0; k < d; ++k) s += gv[k] * val[base + k];
                             dw->at(v, w) += s;
                           }
                           if (dv) {
                             const double a = wt.at(v, w);
                             for (std::size_t k = 0; k < d; ++k) (*dv)[base + k] += a * gv[k];
                           }
                         }
                     });
}

}  // namespace gpnn
