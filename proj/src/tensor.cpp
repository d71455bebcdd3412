#include "swa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace swa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ShapeError("tensor dimension must be >= 1");
    n *= d;
  }
  return n;
}

void require(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(static_cast<size_t>(shape_numel(shape_)), 0.0)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != static_cast<int64_t>(data.size()))
    throw ShapeError("tensor: data length does not match shape");
  data_ = std::make_shared<std::vector<double>>(std::move(data));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), v);
  return t;
}

int64_t Tensor::numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

void Tape::watch(Tensor& t) {
  if (!t.defined()) throw ShapeError("watch: undefined tensor");
  nodes_.push_back(Node{BackFn{}, t.numel()});
  t.tape_ = weak_from_this();
  t.node_ = static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::emit(Tensor value, BackFn back) {
  nodes_.push_back(Node{std::move(back), value.numel()});
  value.tape_ = weak_from_this();
  value.node_ = static_cast<int>(nodes_.size()) - 1;
  return value;
}

std::vector<double>& Tape::grad_buf(int node) {
  auto& g = grads_[static_cast<size_t>(node)];
  if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].numel), 0.0);
  return g;
}

void Tape::backward(const Tensor& loss) {
  if (backward_run_) throw ContractError("backward: tape already swept; call reset() first");
  if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar");
  auto owner = loss.tape();
  if (!owner || owner.get() != this) throw ContractError("backward: loss is not on this tape");
  grads_.assign(nodes_.size(), {});
  grad_buf(loss.node())[0] = 1.0;
  for (int i = loss.node(); i >= 0; --i) {
    auto& g = grads_[static_cast<size_t>(i)];
    if (g.empty()) continue;  // disconnected: implicit zero gradient
    if (nodes_[static_cast<size_t>(i)].back) nodes_[static_cast<size_t>(i)].back(g, *this);
  }
  backward_run_ = true;
}

void Tape::reset() {
  grads_.clear();
  backward_run_ = false;
}

std::vector<double> Tape::grad(const Tensor& t) const {
  auto owner = t.tape();
  if (!owner || owner.get() != this) throw ContractError("grad: tensor is not on this tape");
  if (t.node() < static_cast<int>(grads_.size())) {
    const auto& g = grads_[static_cast<size_t>(t.node())];
    if (!g.empty()) return g;
  }
  return std::vector<double>(static_cast<size_t>(t.numel()), 0.0);
}

std::shared_ptr<Tape> common_tape(std::initializer_list<const Tensor*> inputs) {
  std::shared_ptr<Tape> tape;
  for (const Tensor* t : inputs) {
    auto owner = t->tape();
    if (!owner) continue;
    if (tape && tape != owner) throw ContractError("op: inputs belong to different tapes");
    tape = owner;
  }
  return tape;
}

namespace {

// Accumulates `src` into the grad buffer of `node` when that input is tracked.
void accum(Tape& tape, int node, const std::vector<double>& src) {
  auto& dst = tape.grad_buf(node);
  for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

struct In {
  bool tracked;
  int node;
  explicit In(const Tensor& t, const std::shared_ptr<Tape>& tape)
      : tracked(tape && t.tape() == tape), node(t.node()) {}
};

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto tape = common_tape({&a, &b});
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] + pb[i];
  if (!tape) return out;
  In ia(a, tape), ib(b, tape);
  return tape->emit(std::move(out), [ia, ib](const std::vector<double>& og, Tape& t) {
    if (ia.tracked) accum(t, ia.node, og);
    if (ib.tracked) accum(t, ib.node, og);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto tape = common_tape({&a, &b});
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (!tape) return out;
  In ia(a, tape), ib(b, tape);
  return tape->emit(std::move(out), [ia, ib](const std::vector<double>& og, Tape& t) {
    if (ia.tracked) accum(t, ia.node, og);
    if (ib.tracked) {
      auto& dst = t.grad_buf(ib.node);
      for (size_t i = 0; i < og.size(); ++i) dst[i] -= og[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto tape = common_tape({&a, &b});
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (!tape) return out;
  In ia(a, tape), ib(b, tape);
  auto da = a.vec();
  auto db = b.vec();
  return tape->emit(std::move(out), [ia, ib, da, db](const std::vector<double>& og, Tape& t) {
    if (ia.tracked) {
      auto& dst = t.grad_buf(ia.node);
      for (size_t i = 0; i < og.size(); ++i) dst[i] += og[i] * db[i];
    }
    if (ib.tracked) {
      auto& dst = t.grad_buf(ib.node);
      for (size_t i = 0; i < og.size(); ++i) dst[i] += og[i] * da[i];
    }
  });
}

Tensor affine(const Tensor& x, double s, double c) {
  auto tape = common_tape({&x});
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = s * x.data()[i] + c;
  if (!tape) return out;
  In ix(x, tape);
  return tape->emit(std::move(out), [ix, s](const std::vector<double>& og, Tape& t) {
    if (!ix.tracked) return;
    auto& dst = t.grad_buf(ix.node);
    for (size_t i = 0; i < og.size(); ++i) dst[i] += s * og[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 operands required");
  if (a.dim(1) != b.dim(0)) throw ShapeError("matmul: inner dimensions do not match");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto tape = common_tape({&a, &b});
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    double* orow = po + static_cast<int64_t>(i) * n;
    const double* arow = pa + static_cast<int64_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = pb + static_cast<int64_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (!tape) return out;
  In ia(a, tape), ib(b, tape);
  auto da = a.vec();
  auto db = b.vec();
  return tape->emit(std::move(out), [ia, ib, da, db, m, k, n](const std::vector<double>& og, Tape& t) {
    if (ia.tracked) {  // dA = dC * B^T
      auto& dst = t.grad_buf(ia.node);
      for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += og[static_cast<size_t>(i) * n + j] * db[static_cast<size_t>(kk) * n + j];
          dst[static_cast<size_t>(i) * k + kk] += s;
        }
    }
    if (ib.tracked) {  // dB = A^T * dC
      auto& dst = t.grad_buf(ib.node);
      for (int kk = 0; kk < k; ++kk)
        for (int i = 0; i < m; ++i) {
          const double av = da[static_cast<size_t>(i) * k + kk];
          for (int j = 0; j < n; ++j) dst[static_cast<size_t>(kk) * n + j] += av * og[static_cast<size_t>(i) * n + j];
        }
    }
  });
}

Tensor transpose2d(const Tensor& a) {
  require(a.rank() == 2, "transpose2d: rank-2 operand required");
  const int m = a.dim(0), n = a.dim(1);
  auto tape = common_tape({&a});
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data()[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * n + j];
  if (!tape) return out;
  In ia(a, tape);
  return tape->emit(std::move(out), [ia, m, n](const std::vector<double>& og, Tape& t) {
    if (!ia.tracked) return;
    auto& dst = t.grad_buf(ia.node);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) dst[static_cast<size_t>(i) * n + j] += og[static_cast<size_t>(j) * m + i];
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  require(x.rank() >= 1, "softmax: rank >= 1 required");
  const int c = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / c;
  auto tape = common_tape({&x});
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = px + r * c;
    double* orow = po + r * c;
    double mx = -kInf;
    for (int j = 0; j < c; ++j)
      if (row[j] > mx) mx = row[j];
    if (mx == -kInf) throw DegenerateRowError("softmax: fully masked row");
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      orow[j] = (row[j] == -kInf) ? 0.0 : std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (int j = 0; j < c; ++j) orow[j] /= denom;
  }
  if (!tape) return out;
  In ix(x, tape);
  auto dy = out.vec();
  return tape->emit(std::move(out), [ix, dy, rows, c](const std::vector<double>& og, Tape& t) {
    if (!ix.tracked) return;
    auto& dst = t.grad_buf(ix.node);
    for (int64_t r = 0; r < rows; ++r) {
      const size_t base = static_cast<size_t>(r) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += og[base + j] * dy[base + j];
      for (int j = 0; j < c; ++j) dst[base + j] += dy[base + j] * (og[base + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(x.rank() >= 1 && gain.rank() == 1 && bias.rank() == 1, "layer_norm: bad ranks");
  const int c = x.dim(x.rank() - 1);
  require(gain.dim(0) == c && bias.dim(0) == c, "layer_norm: gain/bias length must equal channels");
  if (eps <= 0.0) throw ContractError("layer_norm: eps must be > 0");
  const int64_t rows = x.numel() / c;
  auto tape = common_tape({&x, &gain, &bias});
  Tensor out(x.shape());
  std::vector<double> xhat(static_cast<size_t>(x.numel()));
  std::vector<double> inv_sd(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += row[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= c;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sd[static_cast<size_t>(r)] = inv;
    for (int j = 0; j < c; ++j) {
      const size_t idx = static_cast<size_t>(r) * c + j;
      xhat[idx] = (row[j] - mean) * inv;
      out.data()[idx] = xhat[idx] * gain.data()[j] + bias.data()[j];
    }
  }
  if (!tape) return out;
  In ix(x, tape), ig(gain, tape), ib(bias, tape);
  auto g = gain.vec();
  return tape->emit(std::move(out), [ix, ig, ib, g, xhat, inv_sd, rows, c](const std::vector<double>& og, Tape& t) {
    if (ig.tracked) {
      auto& dst = t.grad_buf(ig.node);
      for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) dst[static_cast<size_t>(j)] += og[static_cast<size_t>(r) * c + j] * xhat[static_cast<size_t>(r) * c + j];
    }
    if (ib.tracked) {
      auto& dst = t.grad_buf(ib.node);
      for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) dst[static_cast<size_t>(j)] += og[static_cast<size_t>(r) * c + j];
    }
    if (ix.tracked) {
      auto& dst = t.grad_buf(ix.node);
      for (int64_t r = 0; r < rows; ++r) {
        const size_t base = static_cast<size_t>(r) * c;
        double mean_u = 0.0, mean_ux = 0.0;
        for (int j = 0; j < c; ++j) {
          const double u = og[base + j] * g[static_cast<size_t>(j)];
          mean_u += u;
          mean_ux += u * xhat[base + j];
        }
        mean_u /= c;
        mean_ux /= c;
        for (int j = 0; j < c; ++j) {
          const double u = og[base + j] * g[static_cast<size_t>(j)];
          dst[base + j] += inv_sd[static_cast<size_t>(r)] * (u - mean_u - xhat[base + j] * mean_ux);
        }
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  auto tape = common_tape({&x});
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  if (!tape) return out;
  In ix(x, tape);
  auto dx = x.vec();
  return tape->emit(std::move(out), [ix, dx](const std::vector<double>& og, Tape& t) {
    if (!ix.tracked) return;
    auto& dst = t.grad_buf(ix.node);
    for (size_t i = 0; i < og.size(); ++i) {
      const double v = dx[i];
      const double d = 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      dst[i] += og[i] * d;
    }
  });
}

Tensor softplus(const Tensor& x) {
  auto tape = common_tape({&x});
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  if (!tape) return out;
  In ix(x, tape);
  auto dx = x.vec();
  return tape->emit(std::move(out), [ix, dx](const std::vector<double>& og, Tape& t) {
    if (!ix.tracked) return;
    auto& dst = t.grad_buf(ix.node);
    for (size_t i = 0; i < og.size(); ++i) {
      const double v = dx[i];
      const double sig = v > 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      dst[i] += og[i] * sig;
    }
  });
}

Tensor tanh_op(const Tensor& x) {
  auto tape = common_tape({&x});
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = std::tanh(x.data()[i]);
  if (!tape) return out;
  In ix(x, tape);
  auto dy = out.vec();
  return tape->emit(std::move(out), [ix, dy](const std::vector<double>& og, Tape& t) {
    if (!ix.tracked) return;
    auto& dst = t.grad_buf(ix.node);
    for (size_t i = 0; i < og.size(); ++i) dst[i] += og[i] * (1.0 - dy[i] * dy[i]);
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  require(x.rank() == 2 && b.rank() == 1, "add_rowvec: bad ranks");
  const int n = x.dim(0), c = x.dim(1);
  require(b.dim(0) == c, "add_rowvec: vector length must equal columns");
  auto tape = common_tape({&x, &b});
  Tensor out(x.shape());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) = x.at(i, j) + b.at(j);
  if (!tape) return out;
  In ix(x, tape), ib(b, tape);
  return tape->emit(std::move(out), [ix, ib, n, c](const std::vector<double>& og, Tape& t) {
    if (ix.tracked) accum(t, ix.node, og);
    if (ib.tracked) {
      auto& dst = t.grad_buf(ib.node);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) dst[static_cast<size_t>(j)] += og[static_cast<size_t>(i) * c + j];
    }
  });
}

Tensor scale_channels(const Tensor& x, const Tensor& g) {
  require(x.rank() == 2, "scale_channels: rank-2 input required");
  const int n = x.dim(0), c = x.dim(1);
  // Accepts a [C] vector or a [1 x C] row (e.g. one row of a gain matrix).
  require(g.numel() == c, "scale_channels: gain length must equal channels");
  auto tape = common_tape({&x, &g});
  Tensor out(x.shape());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) = x.at(i, j) * g.at(j);
  if (!tape) return out;
  In ix(x, tape), ig(g, tape);
  auto dx = x.vec();
  auto dg = g.vec();
  return tape->emit(std::move(out), [ix, ig, dx, dg, n, c](const std::vector<double>& og, Tape& t) {
    if (ix.tracked) {
      auto& dst = t.grad_buf(ix.node);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) dst[static_cast<size_t>(i) * c + j] += og[static_cast<size_t>(i) * c + j] * dg[static_cast<size_t>(j)];
    }
    if (ig.tracked) {
      auto& dst = t.grad_buf(ig.node);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) dst[static_cast<size_t>(j)] += og[static_cast<size_t>(i) * c + j] * dx[static_cast<size_t>(i) * c + j];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_rowvec(matmul(x, w), b); }

Tensor sum(const Tensor& x) {
  auto tape = common_tape({&x});
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) s += x.data()[i];
  Tensor out = Tensor::scalar(s);
  if (!tape) return out;
  In ix(x, tape);
  const int64_t n = x.numel();
  return tape->emit(std::move(out), [ix, n](const std::vector<double>& og, Tape& t) {
    if (!ix.tracked) return;
    auto& dst = t.grad_buf(ix.node);
    for (int64_t i = 0; i < n; ++i) dst[static_cast<size_t>(i)] += og[0];
  });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  require(x.rank() == 2, "gather_rows: rank-2 operand required");
  const int n = x.dim(0), c = x.dim(1);
  const int m = static_cast<int>(idx.size());
  auto tape = common_tape({&x});
  Tensor out({m, c});
  for (int i = 0; i < m; ++i) {
    const int src = idx[static_cast<size_t>(i)];
    if (src >= n || src < -1) throw ShapeError("gather_rows: index out of range");
    if (src < 0) continue;  // zero row
    for (int j = 0; j < c; ++j) out.at(i, j) = x.at(src, j);
  }
  if (!tape) return out;
  In ix(x, tape);
  return tape->emit(std::move(out), [ix, idx, c](const std::vector<double>& og, Tape& t) {
    if (!ix.tracked) return;
    auto& dst = t.grad_buf(ix.node);
    for (size_t i = 0; i < idx.size(); ++i) {
      const int src = idx[i];
      if (src < 0) continue;
      for (int j = 0; j < c; ++j) dst[static_cast<size_t>(src) * c + j] += og[i * c + j];
    }
  });
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  require(x.rank() == 2, "slice_cols: rank-2 operand required");
  const int n = x.dim(0), c = x.dim(1);
  require(0 <= c0 && c0 < c1 && c1 <= c, "slice_cols: bad column range");
  auto tape = common_tape({&x});
  const int w = c1 - c0;
  Tensor out({n, w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = x.at(i, c0 + j);
  if (!tape) return out;
  In ix(x, tape);
  return tape->emit(std::move(out), [ix, n, c, c0, w](const std::vector<double>& og, Tape& t) {
    if (!ix.tracked) return;
    auto& dst = t.grad_buf(ix.node);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j) dst[static_cast<size_t>(i) * c + c0 + j] += og[static_cast<size_t>(i) * w + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: empty input");
  const int n = parts[0].dim(0);
  int total = 0;
  for (const auto& p : parts) {
    require(p.rank() == 2 && p.dim(0) == n, "concat_cols: row counts differ");
    total += p.dim(1);
  }
  std::vector<const Tensor*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  std::shared_ptr<Tape> tape;
  for (const auto& p : parts) {
    auto owner = p.tape();
    if (!owner) continue;
    if (tape && tape != owner) throw ContractError("concat_cols: inputs belong to different tapes");
    tape = owner;
  }
  Tensor out({n, total});
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.dim(1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j) out.at(i, off + j) = p.at(i, j);
    off += w;
  }
  if (!tape) return out;
  struct Piece {
    bool tracked;
    int node;
    int off, w;
  };
  std::vector<Piece> pieces;
  off = 0;
  for (const auto& p : parts) {
    pieces.push_back(Piece{tape && p.tape() == tape, p.node(), off, p.dim(1)});
    off += p.dim(1);
  }
  return tape->emit(std::move(out), [pieces, n, total](const std::vector<double>& og, Tape& t) {
    for (const auto& pc : pieces) {
      if (!pc.tracked) continue;
      auto& dst = t.grad_buf(pc.node);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < pc.w; ++j) dst[static_cast<size_t>(i) * pc.w + j] += og[static_cast<size_t>(i) * total + pc.off + j];
    }
  });
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }
double norm_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double gaussian_interval_mass(double symbol, double mu, double sigma,
                              int support_min, int support_max) {
  const double a = (symbol - 0.5 - mu) / sigma;
  const double b = (symbol + 0.5 - mu) / sigma;
  if (symbol <= support_min) return norm_cdf(b);
  if (symbol >= support_max) return 0.5 * std::erfc(a * kInvSqrt2);
  if (a + b > 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
}

Tensor gaussian_bits(const Tensor& mu, const Tensor& sigma,
                     const std::vector<double>& symbols, int support_min, int support_max) {
  require_same_shape(mu, sigma, "gaussian_bits");
  require(static_cast<int64_t>(symbols.size()) == mu.numel(), "gaussian_bits: symbol count mismatch");
  auto tape = common_tape({&mu, &sigma});
  const int64_t n = mu.numel();
  constexpr double kLn2 = 0.69314718055994530942;
  constexpr double kPFloor = 1e-300;
  Tensor out(mu.shape());
  // Saved forward state for the backward closure.
  std::vector<double> ps(static_cast<size_t>(n)), as(static_cast<size_t>(n)), bs(static_cast<size_t>(n)), sg(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double m = mu.data()[i];
    const double s = sigma.data()[i];
    if (s <= 0.0) throw ContractError("gaussian_bits: sigma must be positive");
    const double sym = symbols[static_cast<size_t>(i)];
    const double a = (sym - 0.5 - m) / s;
    const double b = (sym + 0.5 - m) / s;
    double p = gaussian_interval_mass(sym, m, s, support_min, support_max);
    if (p < kPFloor) p = kPFloor;
    ps[static_cast<size_t>(i)] = p;
    as[static_cast<size_t>(i)] = a;
    bs[static_cast<size_t>(i)] = b;
    sg[static_cast<size_t>(i)] = s;
    out.data()[i] = -std::log(p) / kLn2;
  }
  if (!tape) return out;
  In im(mu, tape), is(sigma, tape);
  std::vector<char> edge_lo(static_cast<size_t>(n)), edge_hi(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    edge_lo[static_cast<size_t>(i)] = symbols[static_cast<size_t>(i)] <= support_min;
    edge_hi[static_cast<size_t>(i)] = symbols[static_cast<size_t>(i)] >= support_max;
  }
  return tape->emit(std::move(out), [im, is, ps, as, bs, sg, edge_lo, edge_hi, n](const std::vector<double>& og, Tape& t) {
    constexpr double kLn2b = 0.69314718055994530942;
    for (int64_t i = 0; i < n; ++i) {
      const size_t u = static_cast<size_t>(i);
      const double pa = edge_lo[u] ? 0.0 : norm_pdf(as[u]);
      const double pb = edge_hi[u] ? 0.0 : norm_pdf(bs[u]);
      // dp/dmu and dp/dsigma of the interval mass
      const double dp_dmu = (pa - pb) / sg[u];
      const double dp_dsg = (edge_lo[u] ? 0.0 : as[u] * pa) / sg[u] - (edge_hi[u] ? 0.0 : bs[u] * pb) / sg[u];
      const double scale = -og[u] / (ps[u] * kLn2b);
      if (im.tracked) t.grad_buf(im.node)[u] += scale * dp_dmu;
      if (is.tracked) t.grad_buf(is.node)[u] += scale * dp_dsg;
    }
  });
}

double round_half_even(double v) {
  const double f = std::floor(v);
  const double d = v - f;
  if (d < 0.5) return f;
  if (d > 0.5) return f + 1.0;
  return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
}

Tensor quantize_ste(const Tensor& x) {
  auto tape = common_tape({&x});
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = round_half_even(x.data()[i]);
  if (!tape) return out;
  In ix(x, tape);
  return tape->emit(std::move(out), [ix](const std::vector<double>& og, Tape& t) {
    if (ix.tracked) accum(t, ix.node, og);
  });
}

}  // namespace swa
