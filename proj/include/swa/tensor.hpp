#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "swa/errors.hpp"

namespace swa {

class Tape;

// Dense row-major tensor of doubles. Values are immutable once an op has
// consumed the tensor; parameters are mutated only between tapes (by the
// optimizer) through data().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const;
  bool defined() const { return static_cast<bool>(data_); }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  const std::vector<double>& vec() const { return *data_; }

  double at(int i) const { return (*data_)[static_cast<size_t>(i)]; }
  double at(int i, int j) const { return (*data_)[static_cast<size_t>(i) * shape_[1] + j]; }
  double& at(int i) { return (*data_)[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return (*data_)[static_cast<size_t>(i) * shape_[1] + j]; }

  bool tracked() const { return !tape_.expired(); }
  int node() const { return node_; }
  std::shared_ptr<Tape> tape() const { return tape_.lock(); }

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::weak_ptr<Tape> tape_;
  int node_ = -1;

  friend class Tape;
};

// Reverse-mode tape. Nodes are recorded in execution order, which is a
// topological order, so the backward sweep is a single reverse pass.
// Gradients accumulate additively at fan-out points.
class Tape : public std::enable_shared_from_this<Tape> {
 public:
  using BackFn = std::function<void(const std::vector<double>& out_grad, Tape&)>;

  // Registers a leaf whose gradient should be tracked.
  void watch(Tensor& t);

  // Records an op result. `back` receives the output gradient and must
  // accumulate into grad_buf() of the captured parent nodes.
  Tensor emit(Tensor value, BackFn back);

  // Runs the reverse sweep from a scalar loss. A second call without
  // reset() is an error.
  void backward(const Tensor& loss);

  void reset();

  // Gradient of a watched/recorded tensor; zeros if it never received one.
  std::vector<double> grad(const Tensor& t) const;

  std::vector<double>& grad_buf(int node);

  int size() const { return static_cast<int>(nodes_.size()); }
  bool backward_run() const { return backward_run_; }

 private:
  struct Node {
    BackFn back;
    int64_t numel;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool backward_run_ = false;
};

// Returns the common live tape of the inputs (nullptr if none tracked).
// Two different live tapes in one op is an error.
std::shared_ptr<Tape> common_tape(std::initializer_list<const Tensor*> inputs);

// ---- primitive ops (all differentiable) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// y = s * x + c, elementwise with scalar constants
Tensor affine(const Tensor& x, double s, double c);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);

// Row-wise softmax over the last dimension. Entries equal to -infinity are
// masked and never exponentiated; a fully masked row throws.
Tensor softmax_lastdim(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor softplus(const Tensor& x);
Tensor tanh_op(const Tensor& x);

// x[N x C] + b[C] broadcast over rows
Tensor add_rowvec(const Tensor& x, const Tensor& b);
// x[N x C] * g[C] broadcast over rows
Tensor scale_channels(const Tensor& x, const Tensor& g);
// linear layer: x[N x K] * w[K x M] + b[M]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor sum(const Tensor& x);  // -> scalar

// out[m] = x[idx[m]] rows; idx entry -1 yields a zero row
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Per-element Gaussian interval coding cost in bits:
//   -log2( Phi((s+0.5-mu)/sigma) - Phi((s-0.5-mu)/sigma) )
// with the tails folded into the support edges (lower edge integrates from
// -inf, upper edge to +inf). Differentiable w.r.t. mu and sigma.
Tensor gaussian_bits(const Tensor& mu, const Tensor& sigma,
                     const std::vector<double>& symbols, int support_min, int support_max);

// Standard normal CDF / PDF used by the coder and the rate estimate.
double norm_cdf(double z);
double norm_pdf(double z);

// Mass of the symbol's quantization interval under N(mu, sigma^2), with the
// tails folded into the support edges. Evaluated through complementary
// error functions on the near side so far-tail masses keep full relative
// precision instead of cancelling to zero.
double gaussian_interval_mass(double symbol, double mu, double sigma,
                              int support_min, int support_max);

// Round-half-even in the forward pass, identity gradient in the backward
// pass (straight-through estimator).
Tensor quantize_ste(const Tensor& x);
double round_half_even(double v);

}  // namespace swa
