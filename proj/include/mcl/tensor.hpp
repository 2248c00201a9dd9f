#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcl/common.hpp"

namespace mcl::ad {

// Dense 2-D array of f64, row-major. The only numeric container in the
// learned path; graph sparsity is materialized into mask tensors before it
// reaches the tape.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Tensor(int r, int c, std::initializer_list<double> values);

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double v);
  static Tensor identity(int n);

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  double scalar() const { return data[0]; }
  bool all_finite() const;
};

// ---------------------------------------------------------------------------
// Raw kernels (no tape). Shared by the tape ops and the no-grad paths.
// ---------------------------------------------------------------------------
namespace kernel {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b
Tensor transpose(const Tensor& a);
void add_inplace(Tensor& dst, const Tensor& src, double scale = 1.0);
}  // namespace kernel

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape over dense tensors. Recording order is the topological
// order; backward walks it once in reverse. A tape is single-threaded; run
// independent tapes in parallel instead of sharing one.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable leaf. Gradient is available after backward(), zeros if the
  // leaf never reaches the loss.
  Var param(const Tensor& value);
  // Non-trainable input, stored by value.
  Var constant(Tensor value);
  // Non-trainable input referenced in place; caller keeps it alive and
  // unchanged for the tape's lifetime (used for big adjacency/mask tensors).
  Var constant_ref(const Tensor* value);

  const Tensor& value(Var v) const;
  const Tensor& value(int id) const;
  const Tensor& grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // requires-grad node. `loss` must be a 1x1 tensor on this tape.
  void backward(Var loss);

  int size() const { return static_cast<int>(nodes_.size()); }

  // -- used by op implementations ------------------------------------------
  template <class F>
  Var record(const char* op, Tensor value, bool requires_grad, F&& fn);
  Var record_leaf(const char* op, Tensor value, const Tensor* ref, bool requires_grad);
  Tensor& grad_mut(int id);
  bool grad_live(int id) const { return nodes_[id].grad_live; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    bool grad_live = false;
    std::function<void(Tape&, const Tensor&)> backward;
    const char* op = "";
  };
  // Deque keeps value()/grad() references stable while new ops are recorded.
  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable ops. Every op validates shapes, checks the output for
// non-finite values, and records a backward closure when any input requires
// grad.
// ---------------------------------------------------------------------------
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scalar_mul(Var a, double s);
Var add_rowvec(Var a, Var v);              // a[r x c] + v[1 x c] per row
Var outer_add(Var u, Var v);               // u[r x 1] (+) v[c x 1] -> [r x c]
Var broadcast_scalar(Var s, int rows, int cols);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(Var a, std::vector<int> index);
Var row_softmax(Var a);
Var masked_row_softmax(Var a, Var mask);   // mask is 0/1, not differentiated
Var elu(Var a);
Var tanh_op(Var a);
Var leaky_relu(Var a, double slope = 0.2);
Var sigmoid(Var a);
Var exp_op(Var a);
Var log_eps(Var a, double eps = 1e-10);
Var row_mean(Var a);   // [r x c] -> [r x 1]
Var row_sum(Var a);    // [r x c] -> [r x 1]
Var sum_all(Var a);    // [r x c] -> [1 x 1]
Var row_l2_normalize(Var a);
// cos(a_i, b_j) for all row pairs; zero rows score 0 against everything.
Var cosine_similarity_matrix(Var a, Var b);
Var scale_rows(Var a, std::vector<double> factors);  // row i *= factors[i]
// Re-enters the value as a fresh constant: gradients stop here.
Var detach(Var a);

// ---------------------------------------------------------------------------
// Initialization and optimization.
// ---------------------------------------------------------------------------

// Uniform in +/- sqrt(6 / (rows + cols)); bit-reproducible for a fixed rng.
Tensor xavier_init(int rows, int cols, Rng& rng);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::vector<Tensor> m;  // first moments, parallel to the param list
  std::vector<Tensor> v;  // second moments

  explicit AdamState(double learning_rate = 1e-3) : lr(learning_rate) {}
};

// Bias-corrected Adam update over a fixed param list. Moment buffers are
// allocated on the first call and must keep matching shapes afterwards.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state);

// ---------------------------------------------------------------------------
// Checkpoint format: little-endian, magic "MCL1", version u32, param count
// u32, then per param (name length u32 + bytes, rows u64, cols u64, f64 data).
// ---------------------------------------------------------------------------
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& params);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

// -- template definition -----------------------------------------------------
template <class F>
Var Tape::record(const char* op, Tensor value, bool requires_grad, F&& fn) {
  if (!value.all_finite())
    fail(ErrorCode::NumericError, std::string("non-finite values produced by op ") + op);
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.op = op;
  if (requires_grad) node.backward = std::forward<F>(fn);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

}  // namespace mcl::ad
