#include "mcl/tensor.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif
#include <cstring>
#include <fstream>
#include <limits>

namespace mcl::ad {

Tensor::Tensor(int r, int c, std::initializer_list<double> values) : Tensor(r, c) {
  if (values.size() != data.size())
    fail(ErrorCode::ShapeMismatch, "initializer size does not match tensor shape");
  std::copy(values.begin(), values.end(), data.begin());
}

Tensor Tensor::full(int r, int c, double v) {
  Tensor t(r, c);
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

bool Tensor::all_finite() const {
  for (double x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

namespace kernel {

static void check_inner(int ak, int bk, const char* op) {
  if (ak != bk)
    fail(ErrorCode::ShapeMismatch,
         std::string(op) + ": inner dimensions " + std::to_string(ak) + " and " +
             std::to_string(bk) + " do not match");
}

// The three product kernels parallelize over output rows when OpenMP is
// enabled. Each output element keeps the serial accumulation order, so
// results are bit-identical for any thread count.

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_inner(a.cols, b.rows, "matmul");
  const int m = a.rows, k = a.cols, n = b.cols;
  Tensor c(m, n);
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  constexpr int kb = 256;  // keeps the active slice of b cache-resident
  const bool big = static_cast<size_t>(m) * k * n > 1u << 18;
  for (int k0 = 0; k0 < k; k0 += kb) {
    const int k1 = std::min(k, k0 + kb);
#pragma omp parallel for schedule(static) if (big)
    for (int i = 0; i < m; ++i) {
      const double* ar = pa + static_cast<size_t>(i) * k;
      double* cr = pc + static_cast<size_t>(i) * n;
      int kk = k0;
      for (; kk + 4 <= k1; kk += 4) {
        const double a0 = ar[kk], a1 = ar[kk + 1], a2 = ar[kk + 2], a3 = ar[kk + 3];
        const double* b0 = pb + static_cast<size_t>(kk) * n;
        const double* b1 = b0 + n;
        const double* b2 = b1 + n;
        const double* b3 = b2 + n;
        for (int j = 0; j < n; ++j)
          cr[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
      }
      for (; kk < k1; ++kk) {
        const double av = ar[kk];
        const double* br = pb + static_cast<size_t>(kk) * n;
        for (int j = 0; j < n; ++j) cr[j] += av * br[j];
      }
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_inner(a.cols, b.cols, "matmul_nt");
  const int m = a.rows, k = a.cols, n = b.rows;
  Tensor c(m, n);
#pragma omp parallel for schedule(static) if (static_cast<size_t>(m) * k * n > 1u << 18)
  for (int i = 0; i < m; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int j = 0; j < n; ++j) {
      const double* br = b.row(j);
      double s0 = 0.0, s1 = 0.0;
      int kk = 0;
      for (; kk + 2 <= k; kk += 2) {
        s0 += ar[kk] * br[kk];
        s1 += ar[kk + 1] * br[kk + 1];
      }
      if (kk < k) s0 += ar[kk] * br[kk];
      cr[j] = s0 + s1;
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  check_inner(a.rows, b.rows, "matmul_tn");
  const int m = a.cols, k = a.rows, n = b.cols;
  Tensor c(m, n);
#ifdef _OPENMP
  // Per-element accumulation order (ascending i) matches the serial loop, so
  // the result is bit-identical whichever branch runs.
  if (omp_get_max_threads() > 1 && static_cast<size_t>(m) * k * n > 1u << 18) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < m; ++r) {
      double* cr = c.row(r);
      for (int i = 0; i < k; ++i) {
        const double av = a.at(i, r);
        if (av == 0.0) continue;
        const double* br = b.row(i);
        for (int j = 0; j < n; ++j) cr[j] += av * br[j];
      }
    }
    return c;
  }
#endif
  for (int i = 0; i < k; ++i) {
    const double* ar = a.row(i);
    const double* br = b.row(i);
    for (int r = 0; r < m; ++r) {
      const double av = ar[r];
      if (av == 0.0) continue;
      double* cr = c.row(r);
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  Tensor t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

void add_inplace(Tensor& dst, const Tensor& src, double scale) {
  if (!dst.same_shape(src)) fail(ErrorCode::ShapeMismatch, "add_inplace: shape mismatch");
  double* d = dst.data.data();
  const double* s = src.data.data();
  const size_t n = dst.size();
  for (size_t i = 0; i < n; ++i) d[i] += scale * s[i];
}

}  // namespace kernel

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Var Tape::param(const Tensor& value) {
  return record_leaf("param", value, nullptr, true);
}

Var Tape::constant(Tensor value) {
  return record_leaf("constant", std::move(value), nullptr, false);
}

Var Tape::constant_ref(const Tensor* value) {
  return record_leaf("constant_ref", Tensor{}, value, false);
}

Var Tape::record_leaf(const char* op, Tensor value, const Tensor* ref, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.ref = ref;
  node.requires_grad = requires_grad;
  node.op = op;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Var v) const { return value(v.id); }

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.value;
}

Tensor& Tape::grad_mut(int id) {
  Node& n = nodes_[id];
  if (!n.grad_live) {
    const Tensor& v = value(id);
    n.grad = Tensor(v.rows, v.cols);
    n.grad_live = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= size())
    fail(ErrorCode::DetachedLoss, "grad: var does not belong to this tape");
  // Leaves that never reached the loss lazily get a zero gradient; node
  // storage is reference-stable, so the returned ref stays valid.
  return const_cast<Tape*>(this)->grad_mut(v.id);
}

void Tape::backward(Var loss) {
  if (loss.tape != this || loss.id < 0 || loss.id >= size())
    fail(ErrorCode::DetachedLoss, "backward: loss is not recorded on this tape");
  if (!value(loss.id).is_scalar())
    fail(ErrorCode::NotScalar, "backward: loss must be a 1x1 tensor");
  grad_mut(loss.id).data[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.grad_live || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Op helpers
// ---------------------------------------------------------------------------

namespace {

const Tensor& val(Var v) { return v.tape->value(v.id); }

Tape& tape_of(Var a, Var b = {}) {
  if (!a.valid()) fail(ErrorCode::DetachedLoss, "op input is not on a tape");
  if (b.valid() && b.tape != a.tape)
    fail(ErrorCode::DetachedLoss, "op inputs live on different tapes");
  return *a.tape;
}

bool rg(Var v) { return v.valid() && v.tape->requires_grad(v.id); }

void accum(Tape& t, Var v, const Tensor& g) {
  if (!t.requires_grad(v.id)) return;
  kernel::add_inplace(t.grad_mut(v.id), g);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Tensor out = kernel::matmul(val(a), val(b));
  const bool needs = rg(a) || rg(b);
  return t.record("matmul", std::move(out), needs, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a.id))
      kernel::add_inplace(t.grad_mut(a.id), kernel::matmul_nt(g, t.value(b.id)));
    if (t.requires_grad(b.id))
      kernel::add_inplace(t.grad_mut(b.id), kernel::matmul_tn(t.value(a.id), g));
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  return t.record("transpose", kernel::transpose(val(a)), rg(a),
                  [a](Tape& t, const Tensor& g) { accum(t, a, kernel::transpose(g)); });
}

static void check_same_shape(const Tensor& x, const Tensor& y, const char* op) {
  if (!x.same_shape(y))
    fail(ErrorCode::ShapeMismatch, std::string(op) + ": shapes " + std::to_string(x.rows) +
                                       "x" + std::to_string(x.cols) + " vs " +
                                       std::to_string(y.rows) + "x" + std::to_string(y.cols));
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = val(a);
  const Tensor& y = val(b);
  check_same_shape(x, y, "add");
  Tensor out = x;
  kernel::add_inplace(out, y);
  return t.record("add", std::move(out), rg(a) || rg(b), [a, b](Tape& t, const Tensor& g) {
    accum(t, a, g);
    accum(t, b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = val(a);
  const Tensor& y = val(b);
  check_same_shape(x, y, "sub");
  Tensor out = x;
  kernel::add_inplace(out, y, -1.0);
  return t.record("sub", std::move(out), rg(a) || rg(b), [a, b](Tape& t, const Tensor& g) {
    accum(t, a, g);
    if (t.requires_grad(b.id)) kernel::add_inplace(t.grad_mut(b.id), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = val(a);
  const Tensor& y = val(b);
  check_same_shape(x, y, "mul");
  Tensor out(x.rows, x.cols);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] = x.data[i] * y.data[i];
  return t.record("mul", std::move(out), rg(a) || rg(b), [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a.id)) {
      Tensor& ga = t.grad_mut(a.id);
      const Tensor& y = t.value(b.id);
      for (size_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
    }
    if (t.requires_grad(b.id)) {
      Tensor& gb = t.grad_mut(b.id);
      const Tensor& x = t.value(a.id);
      for (size_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[i] * x.data[i];
    }
  });
}

Var scalar_mul(Var a, double s) {
  Tape& t = tape_of(a);
  Tensor out = val(a);
  for (double& x : out.data) x *= s;
  return t.record("scalar_mul", std::move(out), rg(a), [a, s](Tape& t, const Tensor& g) {
    if (t.requires_grad(a.id)) kernel::add_inplace(t.grad_mut(a.id), g, s);
  });
}

Var add_rowvec(Var a, Var v) {
  Tape& t = tape_of(a, v);
  const Tensor& x = val(a);
  const Tensor& b = val(v);
  if (b.rows != 1 || b.cols != x.cols)
    fail(ErrorCode::ShapeMismatch, "add_rowvec: vector must be 1 x cols(a)");
  Tensor out = x;
  for (int i = 0; i < out.rows; ++i) {
    double* r = out.row(i);
    for (int j = 0; j < out.cols; ++j) r[j] += b.data[j];
  }
  return t.record("add_rowvec", std::move(out), rg(a) || rg(v), [a, v](Tape& t, const Tensor& g) {
    accum(t, a, g);
    if (t.requires_grad(v.id)) {
      Tensor& gv = t.grad_mut(v.id);
      for (int i = 0; i < g.rows; ++i) {
        const double* r = g.row(i);
        for (int j = 0; j < g.cols; ++j) gv.data[j] += r[j];
      }
    }
  });
}

Var outer_add(Var u, Var v) {
  Tape& t = tape_of(u, v);
  const Tensor& x = val(u);
  const Tensor& y = val(v);
  if (x.cols != 1 || y.cols != 1)
    fail(ErrorCode::ShapeMismatch, "outer_add: both inputs must be column vectors");
  Tensor out(x.rows, y.rows);
  for (int i = 0; i < x.rows; ++i) {
    const double ui = x.data[i];
    double* r = out.row(i);
    for (int j = 0; j < y.rows; ++j) r[j] = ui + y.data[j];
  }
  return t.record("outer_add", std::move(out), rg(u) || rg(v), [u, v](Tape& t, const Tensor& g) {
    if (t.requires_grad(u.id)) {
      Tensor& gu = t.grad_mut(u.id);
      for (int i = 0; i < g.rows; ++i) {
        const double* r = g.row(i);
        double s = 0.0;
        for (int j = 0; j < g.cols; ++j) s += r[j];
        gu.data[i] += s;
      }
    }
    if (t.requires_grad(v.id)) {
      Tensor& gv = t.grad_mut(v.id);
      for (int i = 0; i < g.rows; ++i) {
        const double* r = g.row(i);
        for (int j = 0; j < g.cols; ++j) gv.data[j] += r[j];
      }
    }
  });
}

Var broadcast_scalar(Var s, int rows, int cols) {
  Tape& t = tape_of(s);
  const Tensor& x = val(s);
  if (!x.is_scalar()) fail(ErrorCode::NotScalar, "broadcast_scalar: input must be 1x1");
  if (rows <= 0 || cols <= 0) fail(ErrorCode::ZeroDim, "broadcast_scalar: empty target shape");
  Tensor out = Tensor::full(rows, cols, x.data[0]);
  return t.record("broadcast_scalar", std::move(out), rg(s), [s](Tape& t, const Tensor& g) {
    if (!t.requires_grad(s.id)) return;
    double total = 0.0;
    for (double x : g.data) total += x;
    t.grad_mut(s.id).data[0] += total;
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorCode::ShapeMismatch, "concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const int rows = val(parts[0]).rows;
  int cols = 0;
  bool needs = false;
  for (Var p : parts) {
    if (p.tape != &t) fail(ErrorCode::DetachedLoss, "concat_cols: mixed tapes");
    if (val(p).rows != rows) fail(ErrorCode::ShapeMismatch, "concat_cols: row counts differ");
    cols += val(p).cols;
    needs = needs || rg(p);
  }
  Tensor out(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Tensor& x = val(p);
    for (int i = 0; i < rows; ++i)
      std::memcpy(out.row(i) + off, x.row(i), sizeof(double) * x.cols);
    off += x.cols;
  }
  std::vector<Var> saved = parts;
  return t.record("concat_cols", std::move(out), needs, [saved](Tape& t, const Tensor& g) {
    int off = 0;
    for (Var p : saved) {
      const Tensor& x = t.value(p.id);
      if (t.requires_grad(p.id)) {
        Tensor& gp = t.grad_mut(p.id);
        for (int i = 0; i < g.rows; ++i) {
          const double* src = g.row(i) + off;
          double* dst = gp.row(i);
          for (int j = 0; j < x.cols; ++j) dst[j] += src[j];
        }
      }
      off += x.cols;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorCode::ShapeMismatch, "concat_rows: no inputs");
  Tape& t = tape_of(parts[0]);
  const int cols = val(parts[0]).cols;
  int rows = 0;
  bool needs = false;
  for (Var p : parts) {
    if (p.tape != &t) fail(ErrorCode::DetachedLoss, "concat_rows: mixed tapes");
    if (val(p).cols != cols) fail(ErrorCode::ShapeMismatch, "concat_rows: column counts differ");
    rows += val(p).rows;
    needs = needs || rg(p);
  }
  Tensor out(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Tensor& x = val(p);
    std::memcpy(out.row(off), x.data.data(), sizeof(double) * x.size());
    off += x.rows;
  }
  std::vector<Var> saved = parts;
  return t.record("concat_rows", std::move(out), needs, [saved](Tape& t, const Tensor& g) {
    int off = 0;
    for (Var p : saved) {
      const Tensor& x = t.value(p.id);
      if (t.requires_grad(p.id)) {
        Tensor& gp = t.grad_mut(p.id);
        for (size_t i = 0; i < gp.size(); ++i)
          gp.data[i] += g.data[static_cast<size_t>(off) * g.cols + i];
      }
      off += x.rows;
    }
  });
}

Var gather_rows(Var a, std::vector<int> index) {
  Tape& t = tape_of(a);
  const Tensor& x = val(a);
  Tensor out(static_cast<int>(index.size()), x.cols);
  for (size_t i = 0; i < index.size(); ++i) {
    const int r = index[i];
    if (r < 0 || r >= x.rows) fail(ErrorCode::ShapeMismatch, "gather_rows: index out of range");
    std::memcpy(out.row(static_cast<int>(i)), x.row(r), sizeof(double) * x.cols);
  }
  return t.record("gather_rows", std::move(out), rg(a),
                  [a, index = std::move(index)](Tape& t, const Tensor& g) {
                    if (!t.requires_grad(a.id)) return;
                    Tensor& ga = t.grad_mut(a.id);
                    for (size_t i = 0; i < index.size(); ++i) {
                      double* dst = ga.row(index[i]);
                      const double* src = g.row(static_cast<int>(i));
                      for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
                    }
                  });
}

// Shared softmax forward; mask == nullptr means unmasked. Masked entries are
// exactly zero and all-masked rows come back as all zeros.
static Tensor softmax_forward(const Tensor& x, const Tensor* mask) {
  Tensor out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* xr = x.row(i);
    const double* mr = mask ? mask->row(i) : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < x.cols; ++j)
      if (!mr || mr[j] != 0.0) mx = std::max(mx, xr[j]);
    double* outr = out.row(i);
    if (mx == -std::numeric_limits<double>::infinity()) continue;  // all masked
    double sum = 0.0;
    for (int j = 0; j < x.cols; ++j) {
      if (mr && mr[j] == 0.0) continue;
      const double e = std::exp(xr[j] - mx);
      outr[j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < x.cols; ++j) outr[j] *= inv;
  }
  return out;
}

// dL/dx_j = y_j * (g_j - sum_k g_k y_k), rowwise. Masked entries have y = 0
// so the same expression covers both variants.
static void softmax_backward(const Tensor& y, const Tensor& g, Tensor& gx) {
  for (int i = 0; i < y.rows; ++i) {
    const double* yr = y.row(i);
    const double* gr = g.row(i);
    double dot = 0.0;
    for (int j = 0; j < y.cols; ++j) dot += gr[j] * yr[j];
    double* gxr = gx.row(i);
    for (int j = 0; j < y.cols; ++j) gxr[j] += yr[j] * (gr[j] - dot);
  }
}

Var row_softmax(Var a) {
  Tape& t = tape_of(a);
  Tensor out = softmax_forward(val(a), nullptr);
  const int out_id = t.size();
  return t.record("row_softmax", std::move(out), rg(a),
                  [a, out_id](Tape& t, const Tensor& g) {
                    if (!t.requires_grad(a.id)) return;
                    softmax_backward(t.value(out_id), g, t.grad_mut(a.id));
                  });
}

Var masked_row_softmax(Var a, Var mask) {
  Tape& t = tape_of(a, mask);
  const Tensor& x = val(a);
  const Tensor& m = val(mask);
  check_same_shape(x, m, "masked_row_softmax");
  Tensor out = softmax_forward(x, &m);
  const int out_id = t.size();
  return t.record("masked_row_softmax", std::move(out), rg(a),
                  [a, out_id](Tape& t, const Tensor& g) {
                    if (!t.requires_grad(a.id)) return;
                    softmax_backward(t.value(out_id), g, t.grad_mut(a.id));
                  });
}

// Unary op plumbing: forward maps x -> f(x), backward uses saved output
// (and input where needed).
template <class Fwd, class Bwd>
static Var unary(const char* name, Var a, Fwd&& f, Bwd&& dfdx_from) {
  Tape& t = tape_of(a);
  const Tensor& x = val(a);
  Tensor out(x.rows, x.cols);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] = f(x.data[i]);
  const int out_id = t.size();
  return t.record(name, std::move(out), rg(a),
                  [a, out_id, dfdx_from](Tape& t, const Tensor& g) {
                    if (!t.requires_grad(a.id)) return;
                    Tensor& ga = t.grad_mut(a.id);
                    const Tensor& x = t.value(a.id);
                    const Tensor& y = t.value(out_id);
                    for (size_t i = 0; i < ga.size(); ++i)
                      ga.data[i] += g.data[i] * dfdx_from(x.data[i], y.data[i]);
                  });
}

Var elu(Var a) {
  return unary("elu", a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
               [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var tanh_op(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var leaky_relu(Var a, double slope) {
  return unary("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a,
               [](double x) {
                 return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                 : std::exp(x) / (1.0 + std::exp(x));
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var exp_op(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var log_eps(Var a, double eps) {
  return unary("log_eps", a, [eps](double x) { return std::log(x + eps); },
               [eps](double x, double) { return 1.0 / (x + eps); });
}

static Var row_reduce(const char* name, Var a, double denom_from_cols) {
  Tape& t = tape_of(a);
  const Tensor& x = val(a);
  const double inv = denom_from_cols != 0.0 ? 1.0 / denom_from_cols : 1.0;
  Tensor out(x.rows, 1);
  for (int i = 0; i < x.rows; ++i) {
    const double* r = x.row(i);
    double s = 0.0;
    for (int j = 0; j < x.cols; ++j) s += r[j];
    out.data[i] = s * inv;
  }
  return t.record(name, std::move(out), rg(a), [a, inv](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a.id)) return;
    Tensor& ga = t.grad_mut(a.id);
    for (int i = 0; i < ga.rows; ++i) {
      const double gi = g.data[i] * inv;
      double* r = ga.row(i);
      for (int j = 0; j < ga.cols; ++j) r[j] += gi;
    }
  });
}

Var row_mean(Var a) { return row_reduce("row_mean", a, static_cast<double>(val(a).cols)); }
Var row_sum(Var a) { return row_reduce("row_sum", a, 0.0); }

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = val(a);
  double s = 0.0;
  for (double v : x.data) s += v;
  Tensor out(1, 1);
  out.data[0] = s;
  return t.record("sum", std::move(out), rg(a), [a](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a.id)) return;
    Tensor& ga = t.grad_mut(a.id);
    const double gv = g.data[0];
    for (double& v : ga.data) v += gv;
  });
}

Var row_l2_normalize(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = val(a);
  Tensor out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* xr = x.row(i);
    double sq = 0.0;
    for (int j = 0; j < x.cols; ++j) sq += xr[j] * xr[j];
    double* outr = out.row(i);
    if (sq == 0.0) continue;  // zero rows stay zero
    const double inv = 1.0 / std::sqrt(sq);
    for (int j = 0; j < x.cols; ++j) outr[j] = xr[j] * inv;
  }
  const int out_id = t.size();
  return t.record("row_l2_normalize", std::move(out), rg(a),
                  [a, out_id](Tape& t, const Tensor& g) {
                    if (!t.requires_grad(a.id)) return;
                    Tensor& ga = t.grad_mut(a.id);
                    const Tensor& x = t.value(a.id);
                    const Tensor& y = t.value(out_id);
                    for (int i = 0; i < x.rows; ++i) {
                      const double* xr = x.row(i);
                      const double* yr = y.row(i);
                      const double* gr = g.row(i);
                      double sq = 0.0, dot = 0.0;
                      for (int j = 0; j < x.cols; ++j) {
                        sq += xr[j] * xr[j];
                        dot += gr[j] * yr[j];
                      }
                      if (sq == 0.0) continue;
                      const double inv = 1.0 / std::sqrt(sq);
                      double* gar = ga.row(i);
                      for (int j = 0; j < x.cols; ++j)
                        gar[j] += (gr[j] - yr[j] * dot) * inv;
                    }
                  });
}

Var cosine_similarity_matrix(Var a, Var b) {
  Var na = row_l2_normalize(a);
  Var nb = row_l2_normalize(b);
  return matmul(na, transpose(nb));
}

Var scale_rows(Var a, std::vector<double> factors) {
  Tape& t = tape_of(a);
  const Tensor& x = val(a);
  if (static_cast<int>(factors.size()) != x.rows)
    fail(ErrorCode::LengthMismatch, "scale_rows: one factor per row required");
  Tensor out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double f = factors[i];
    const double* xr = x.row(i);
    double* outr = out.row(i);
    for (int j = 0; j < x.cols; ++j) outr[j] = f * xr[j];
  }
  return t.record("scale_rows", std::move(out), rg(a),
                  [a, factors = std::move(factors)](Tape& t, const Tensor& g) {
                    if (!t.requires_grad(a.id)) return;
                    Tensor& ga = t.grad_mut(a.id);
                    for (int i = 0; i < g.rows; ++i) {
                      const double f = factors[i];
                      const double* gr = g.row(i);
                      double* gar = ga.row(i);
                      for (int j = 0; j < g.cols; ++j) gar[j] += f * gr[j];
                    }
                  });
}

Var detach(Var a) {
  Tape& t = tape_of(a);
  return t.constant_ref(&t.value(a.id));
}

// ---------------------------------------------------------------------------
// Init, optimizer, checkpoints
// ---------------------------------------------------------------------------

Tensor xavier_init(int rows, int cols, Rng& rng) {
  if (rows <= 0 || cols <= 0)
    fail(ErrorCode::ZeroDim, "xavier_init: dimensions must be positive");
  const double bound = std::sqrt(6.0 / (rows + cols));
  Tensor t(rows, cols);
  for (double& x : t.data) x = rng.uniform(-bound, bound);
  return t;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state) {
  if (params.size() != grads.size())
    fail(ErrorCode::ShapeMismatch, "adam_step: param/grad count mismatch");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->rows, p->cols);
      state.v.emplace_back(p->rows, p->cols);
    }
  }
  if (state.m.size() != params.size())
    fail(ErrorCode::ShapeMismatch, "adam_step: state tracks a different param list");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    const Tensor& g = *grads[p];
    if (!w.same_shape(g) || !w.same_shape(state.m[p]))
      fail(ErrorCode::ShapeMismatch, "adam_step: shape mismatch for param " + std::to_string(p));
    double* wd = w.data.data();
    const double* gd = g.data.data();
    double* md = state.m[p].data.data();
    double* vd = state.v[p].data.data();
    const size_t n = w.size();
    for (size_t i = 0; i < n; ++i) {
      md[i] = state.beta1 * md[i] + (1.0 - state.beta1) * gd[i];
      vd[i] = state.beta2 * vd[i] + (1.0 - state.beta2) * gd[i] * gd[i];
      const double mhat = md[i] / bc1;
      const double vhat = vd[i] / bc2;
      wd[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

namespace {

template <class T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_raw(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::MissingFile, "cannot open checkpoint for writing: " + path);
  out.write("MCL1", 4);
  write_raw(out, static_cast<uint32_t>(1));
  write_raw(out, static_cast<uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    write_raw(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw(out, static_cast<uint64_t>(tensor->rows));
    write_raw(out, static_cast<uint64_t>(tensor->cols));
    out.write(reinterpret_cast<const char*>(tensor->data.data()),
              static_cast<std::streamsize>(tensor->size() * sizeof(double)));
  }
  if (!out) fail(ErrorCode::MissingFile, "short write while saving checkpoint: " + path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::MissingFile, "cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MCL1", 4) != 0)
    fail(ErrorCode::MalformedRow, "bad checkpoint magic in " + path);
  uint32_t version = 0, count = 0;
  read_raw(in, version);
  read_raw(in, count);
  if (version != 1) fail(ErrorCode::MalformedRow, "unsupported checkpoint version");
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (uint32_t p = 0; p < count; ++p) {
    uint32_t name_len = 0;
    read_raw(in, name_len);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint64_t rows = 0, cols = 0;
    read_raw(in, rows);
    read_raw(in, cols);
    Tensor t(static_cast<int>(rows), static_cast<int>(cols));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) fail(ErrorCode::MalformedRow, "truncated checkpoint: " + path);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace mcl::ad
