#include "graphclip/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "graphclip/kernels.hpp"

namespace graphclip::ad {

namespace {

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_slope(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

Var Tape::push(Matrix value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

bool Tape::any_requires(std::initializer_list<Var> vs) const {
  for (Var v : vs)
    if (node(v).requires_grad) return true;
  return false;
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw Error("tape: variable not recorded on this tape");
  return nodes_[v.id];
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, {}); }

Var Tape::leaf(Matrix value, bool requires_grad) { return push(std::move(value), requires_grad, {}); }

Var Tape::param(const Matrix& value, bool requires_grad) {
  Node n;
  n.ref = &value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const { return node(v).value(); }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.has_grad) return n.grad;
  return Matrix(n.value().rows(), n.value().cols());
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root, const Matrix& seed) {
  if (nodes_.empty()) throw Error("backward called before any forward pass was recorded");
  const Node& r = node(root);
  if (!r.value().same_shape(seed)) {
    throw ShapeError("backward seed " + seed.shape_str() + " does not match root " +
                     r.value().shape_str());
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Matrix();
  }
  accumulate(root, seed);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

void Tape::backward(Var root, double seed) {
  const Matrix& v = value(root);
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar backward on " + v.shape_str() + " root");
  backward(root, Matrix(1, 1, seed));
}

Var Tape::matmul(Var a, Var b) {
  Matrix out = kernels::gemm_nn(value(a), value(b));
  return push(std::move(out), any_requires({a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(a)) t.accumulate(a, kernels::gemm_nt(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, kernels::gemm_tn(t.value(a), g));
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  Matrix out = kernels::gemm_nt(value(a), value(b));
  return push(std::move(out), any_requires({a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(a)) t.accumulate(a, kernels::gemm_nn(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, kernels::gemm_tn(g, t.value(a)));
  });
}

Var Tape::matmul_const_left(const Matrix& m, Var x) {
  Matrix out = kernels::gemm_nn(m, value(x));
  return push(std::move(out), any_requires({x}), [m, x](Tape& t, std::size_t self) {
    t.accumulate(x, kernels::gemm_tn(m, t.upstream(self)));
  });
}

Var Tape::add(Var a, Var b) {
  if (!value(a).same_shape(value(b)))
    throw ShapeError("add: " + value(a).shape_str() + " vs " + value(b).shape_str());
  Matrix out = value(a) + value(b);
  return push(std::move(out), any_requires({a, b}), [a, b](Tape& t, std::size_t self) {
    t.accumulate(a, t.upstream(self));
    t.accumulate(b, t.upstream(self));
  });
}

Var Tape::add_row(Var a, Var row) {
  const Matrix& av = value(a);
  const Matrix& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw ShapeError("add_row: " + av.shape_str() + " + " + rv.shape_str());
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv(0, c);
  return push(std::move(out), any_requires({a, row}), [a, row](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    t.accumulate(a, g);
    if (t.requires_grad(row)) {
      Matrix gr(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr(0, c) += g(r, c);
      t.accumulate(row, gr);
    }
  });
}

Var Tape::scale(Var a, double s) {
  Matrix out = value(a) * s;
  return push(std::move(out), any_requires({a}), [a, s](Tape& t, std::size_t self) {
    t.accumulate(a, t.upstream(self) * s);
  });
}

Var Tape::gelu(Var a) {
  const Matrix& x = value(a);
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu_value(x[i]);
  return push(std::move(out), any_requires({a}), [a](Tape& t, std::size_t self) {
    const Matrix& x = t.value(a);
    Matrix g = t.upstream(self);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= gelu_slope(x[i]);
    t.accumulate(a, g);
  });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& xv = value(x);
  const std::size_t n = xv.rows(), d = xv.cols();
  require_shape(value(gamma), 1, d, "layer_norm gamma");
  require_shape(value(beta), 1, d, "layer_norm beta");
  Matrix xhat(n, d);
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = xv.row_span(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) xhat(r, c) = (row[c] - mu) * inv_std[r];
  }
  const Matrix& gv = value(gamma);
  const Matrix& bv = value(beta);
  Matrix out(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out(r, c) = xhat(r, c) * gv(0, c) + bv(0, c);
  return push(std::move(out), any_requires({x, gamma, beta}),
              [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                  Tape& t, std::size_t self) {
                const Matrix& g = t.upstream(self);
                const Matrix& gv = t.value(gamma);
                const std::size_t n = g.rows(), d = g.cols();
                if (t.requires_grad(gamma) || t.requires_grad(beta)) {
                  Matrix dg(1, d), db(1, d);
                  for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < d; ++c) {
                      dg(0, c) += g(r, c) * xhat(r, c);
                      db(0, c) += g(r, c);
                    }
                  t.accumulate(gamma, dg);
                  t.accumulate(beta, db);
                }
                if (t.requires_grad(x)) {
                  Matrix dx(n, d);
                  for (std::size_t r = 0; r < n; ++r) {
                    double mean_dh = 0.0, mean_dh_xh = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                      const double dh = g(r, c) * gv(0, c);
                      mean_dh += dh;
                      mean_dh_xh += dh * xhat(r, c);
                    }
                    mean_dh /= static_cast<double>(d);
                    mean_dh_xh /= static_cast<double>(d);
                    for (std::size_t c = 0; c < d; ++c) {
                      const double dh = g(r, c) * gv(0, c);
                      dx(r, c) = inv_std[r] * (dh - mean_dh - xhat(r, c) * mean_dh_xh);
                    }
                  }
                  t.accumulate(x, dx);
                }
              });
}

Var Tape::softmax_rows(Var a) {
  Matrix out = kernels::softmax_rows(value(a));
  return push(std::move(out), any_requires({a}), [a](Tape& t, std::size_t self) {
    const Matrix& y = t.nodes_[self].value();
    const Matrix& g = t.upstream(self);
    Matrix dx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) s += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (g(r, c) - s);
    }
    t.accumulate(a, dx);
  });
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = value(a);
  if (begin + count > av.cols())
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of " + av.shape_str());
  Matrix out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  return push(std::move(out), any_requires({a}), [a, begin](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    const Matrix& av = t.value(a);
    Matrix dx(av.rows(), av.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) dx(r, begin + c) = g(r, c);
    t.accumulate(a, dx);
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += value(p).cols();
    req = req || requires_grad(p);
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& pv = value(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, off + c) = pv(r, c);
    off += pv.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(out), req, [ps](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    std::size_t off = 0;
    for (Var p : ps) {
      const std::size_t w = t.value(p).cols();
      if (t.requires_grad(p)) {
        Matrix gp(g.rows(), w);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) = g(r, off + c);
        t.accumulate(p, gp);
      }
      off += w;
    }
  });
}

Var Tape::mean_rows(Var a) {
  const Matrix& av = value(a);
  if (av.rows() == 0) throw ShapeError("mean_rows: empty matrix");
  Matrix out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(0, c) += av(r, c);
  out *= 1.0 / static_cast<double>(av.rows());
  return push(std::move(out), any_requires({a}), [a](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    const std::size_t n = t.value(a).rows();
    Matrix dx(n, g.cols());
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) dx(r, c) = g(0, c) * inv;
    t.accumulate(a, dx);
  });
}

Var Tape::l2_normalize_rows(Var a) {
  const Matrix& av = value(a);
  std::vector<double> norms(av.rows());
  Matrix out = av;
  for (std::size_t r = 0; r < av.rows(); ++r) {
    norms[r] = l2_norm(av.row_span(r));
    if (norms[r] > 0.0)
      for (double& v : out.row_span(r)) v /= norms[r];
  }
  return push(std::move(out), any_requires({a}), [a, norms = std::move(norms)](Tape& t, std::size_t self) {
    const Matrix& y = t.nodes_[self].value();
    const Matrix& g = t.upstream(self);
    Matrix dx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      if (norms[r] == 0.0) continue;
      const double yg = dot(y.row_span(r), g.row_span(r));
      for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = (g(r, c) - y(r, c) * yg) / norms[r];
    }
    t.accumulate(a, dx);
  });
}

Var Tape::sum_all(Var a) {
  double s = 0.0;
  for (double v : value(a).values()) s += v;
  return push(Matrix(1, 1, s), any_requires({a}), [a](Tape& t, std::size_t self) {
    const Matrix& av = t.value(a);
    t.accumulate(a, Matrix(av.rows(), av.cols(), t.upstream(self)(0, 0)));
  });
}

}  // namespace graphclip::ad
