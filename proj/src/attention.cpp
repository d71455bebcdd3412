#include "swa/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace swa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct BlockBox {
  int lmin, lmax, ymin, ymax, xmin, xmax;
  int64_t order_min, order_max;
  int self_min, self_max;  // range of self_key entries (queries only)
};

BlockBox scan_block(const std::vector<Coord3>& coords, const std::vector<int64_t>& orders,
                    const std::vector<int>* self_key, int begin, int end) {
  BlockBox b{coords[begin].l, coords[begin].l, coords[begin].y, coords[begin].y,
             coords[begin].x, coords[begin].x, orders[begin], orders[begin],
             0, -1};
  for (int i = begin; i < end; ++i) {
    b.lmin = std::min(b.lmin, coords[i].l);
    b.lmax = std::max(b.lmax, coords[i].l);
    b.ymin = std::min(b.ymin, coords[i].y);
    b.ymax = std::max(b.ymax, coords[i].y);
    b.xmin = std::min(b.xmin, coords[i].x);
    b.xmax = std::max(b.xmax, coords[i].x);
    b.order_min = std::min(b.order_min, orders[i]);
    b.order_max = std::max(b.order_max, orders[i]);
  }
  if (self_key) {
    b.self_min = std::numeric_limits<int>::max();
    b.self_max = -1;
    for (int i = begin; i < end; ++i) {
      const int s = (*self_key)[static_cast<size_t>(i)];
      if (s < 0) continue;
      b.self_min = std::min(b.self_min, s);
      b.self_max = std::max(b.self_max, s);
    }
  }
  return b;
}

bool axis_overlap(int kmin, int kmax, int qmin, int qmax, int reach) {
  // Some (q, k) pair can satisfy |coord_k - coord_q| <= reach.
  return kmax - qmin >= -reach && kmin - qmax <= reach;
}

// Conservative test: may a visited block contain any visible pair?
bool block_may_be_visible(const AttendGeometry& g, const BlockBox& qb, const BlockBox& kb,
                          int kb_begin, int kb_end) {
  if (!axis_overlap(kb.lmin, kb.lmax, qb.lmin, qb.lmax, g.window.lw)) return false;
  if (!axis_overlap(kb.ymin, kb.ymax, qb.ymin, qb.ymax, g.window.hw)) return false;
  if (!axis_overlap(kb.xmin, kb.xmax, qb.xmin, qb.xmax, g.window.ww)) return false;
  if (!g.causal) return true;
  if (kb.order_min < qb.order_max) return true;
  if (g.diag_visible && qb.self_max >= kb_begin && qb.self_min < kb_end) return true;
  return false;
}

struct HeadState {
  std::vector<double> row_max;  // per query
  std::vector<double> row_sum;
};

}  // namespace

bool pair_visible(const AttendGeometry& g, int q, int k) {
  const Coord3& cq = g.q_coords[static_cast<size_t>(q)];
  const Coord3& ck = g.k_coords[static_cast<size_t>(k)];
  if (!g.window.contains(ck.l - cq.l, ck.y - cq.y, ck.x - cq.x)) return false;
  if (!g.self_key.empty() && g.self_key[static_cast<size_t>(q)] == k) return g.diag_visible;
  if (g.causal && g.k_orders[static_cast<size_t>(k)] >= g.q_orders[static_cast<size_t>(q)]) return false;
  return true;
}

double window_bias(const Coord3& m, const Coord3& n, const WindowSpec& w,
                   const Tensor& tables, int head) {
  const int dl = n.l - m.l, dy = n.y - m.y, dx = n.x - m.x;
  if (!w.contains(dl, dy, dx)) return -kInf;
  return tables.at(head, w.table_index(dl, dy, dx));
}

AttendGeometry volume_geometry(const Dims3& dims, const WindowSpec& window,
                               bool causal, bool diag_visible, int block) {
  AttendGeometry g;
  g.window = window;
  g.causal = causal;
  g.diag_visible = diag_visible;
  g.block_q = block;
  g.block_k = block;
  const int64_t t = dims.tokens();
  g.q_coords.resize(static_cast<size_t>(t));
  g.q_orders.resize(static_cast<size_t>(t));
  g.self_key.resize(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i) {
    g.q_coords[static_cast<size_t>(i)] = coord_of(i, dims);
    g.q_orders[static_cast<size_t>(i)] = i;
    g.self_key[static_cast<size_t>(i)] = static_cast<int>(i);
  }
  g.k_coords = g.q_coords;
  g.k_orders = g.q_orders;
  return g;
}

Tensor assemble_bias_matrix(const Tensor& tables, int head, const AttendGeometry& g) {
  const int tq = static_cast<int>(g.q_coords.size());
  const int tk = static_cast<int>(g.k_coords.size());
  Tensor b = Tensor::full({tq, tk}, -kInf);
  for (int q = 0; q < tq; ++q)
    for (int k = 0; k < tk; ++k)
      if (pair_visible(g, q, k)) {
        const Coord3& cq = g.q_coords[static_cast<size_t>(q)];
        const Coord3& ck = g.k_coords[static_cast<size_t>(k)];
        b.at(q, k) = tables.at(head, g.window.table_index(ck.l - cq.l, ck.y - cq.y, ck.x - cq.x));
      }
  return b;
}

Tensor bias_matrix_from_table(const Tensor& tables, int head, const AttendGeometry& g) {
  const int tq = static_cast<int>(g.q_coords.size());
  const int tk = static_cast<int>(g.k_coords.size());
  const int tab_cols = tables.dim(1);
  auto tape = common_tape({&tables});
  Tensor b = Tensor::full({tq, tk}, -kInf);
  std::vector<int> entry(static_cast<size_t>(tq) * tk, -1);
  for (int q = 0; q < tq; ++q)
    for (int k = 0; k < tk; ++k)
      if (pair_visible(g, q, k)) {
        const Coord3& cq = g.q_coords[static_cast<size_t>(q)];
        const Coord3& ck = g.k_coords[static_cast<size_t>(k)];
        const int idx = g.window.table_index(ck.l - cq.l, ck.y - cq.y, ck.x - cq.x);
        entry[static_cast<size_t>(q) * tk + k] = idx;
        b.at(q, k) = tables.at(head, idx);
      }
  if (!tape || tables.tape() != tape) return b;
  const int node = tables.node();
  return tape->emit(std::move(b), [node, entry, head, tab_cols](const std::vector<double>& og, Tape& t) {
    auto& dst = t.grad_buf(node);
    for (size_t i = 0; i < entry.size(); ++i)
      if (entry[i] >= 0) dst[static_cast<size_t>(head) * tab_cols + entry[i]] += og[i];
  });
}

Tensor dense_masked_attention(const Tensor& y, const AttentionWeights& w,
                              const std::vector<Tensor>& bias) {
  if (static_cast<int>(bias.size()) != w.heads)
    throw ShapeError("dense_masked_attention: one bias matrix per head required");
  const int dk = w.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(w.heads));
  for (int h = 0; h < w.heads; ++h) {
    Tensor qh = matmul(y, slice_cols(w.wq, h * dk, (h + 1) * dk));
    Tensor kh = matmul(y, slice_cols(w.wk, h * dk, (h + 1) * dk));
    Tensor vh = matmul(y, slice_cols(w.wv, h * dk, (h + 1) * dk));
    Tensor scores = affine(add(matmul(qh, transpose2d(kh)), bias[static_cast<size_t>(h)]), scale, 0.0);
    heads.push_back(matmul(softmax_lastdim(scores), vh));
  }
  return matmul(concat_cols(heads), w.wo);
}

Tensor swa_attend(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& tables,
                  const AttendGeometry& geom, int heads, int head_dim, SwaStats* stats) {
  const int tq = q.dim(0);
  const int tk = k.dim(0);
  const int width = heads * head_dim;
  if (q.dim(1) != width || k.dim(1) != width || v.dim(1) != width)
    throw ShapeError("swa_attend: operand width must equal heads*head_dim");
  if (static_cast<int>(geom.q_coords.size()) != tq || static_cast<int>(geom.k_coords.size()) != tk)
    throw ShapeError("swa_attend: geometry size mismatch");
  if (tables.dim(0) != heads || tables.dim(1) != geom.window.table_size())
    throw ShapeError("swa_attend: bias table shape mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const int bq = std::max(1, geom.block_q);
  const int bk = std::max(1, geom.block_k);
  const int n_qb = (tq + bq - 1) / bq;
  const int n_kb = (tk + bk - 1) / bk;

  std::vector<BlockBox> kboxes(static_cast<size_t>(n_kb));
  for (int j = 0; j < n_kb; ++j)
    kboxes[static_cast<size_t>(j)] = scan_block(geom.k_coords, geom.k_orders, nullptr, j * bk, std::min(tk, (j + 1) * bk));

  auto tape = common_tape({&q, &k, &v, &tables});
  Tensor out({tq, width});
  // Saved softmax statistics, needed to rebuild probabilities in backward.
  std::vector<double> row_max(static_cast<size_t>(heads) * tq, -kInf);
  std::vector<double> row_sum(static_cast<size_t>(heads) * tq, 0.0);

  const double* pq = q.data();
  const double* pk = k.data();
  const double* pv = v.data();
  double* po = out.data();

  std::vector<double> acc(static_cast<size_t>(head_dim));
  for (int qb = 0; qb < n_qb; ++qb) {
    const int q0 = qb * bq, q1 = std::min(tq, (qb + 1) * bq);
    const BlockBox qbox = scan_block(geom.q_coords, geom.q_orders,
                                     geom.self_key.empty() ? nullptr : &geom.self_key, q0, q1);
    for (int kb = 0; kb < n_kb; ++kb) {
      const int k0 = kb * bk, k1 = std::min(tk, (kb + 1) * bk);
      if (stats) stats->key_blocks_total++;
      if (!block_may_be_visible(geom, qbox, kboxes[static_cast<size_t>(kb)], k0, k1)) continue;
      if (stats) stats->key_blocks_visited++;
      for (int qi = q0; qi < q1; ++qi) {
        const Coord3& cq = geom.q_coords[static_cast<size_t>(qi)];
        for (int ki = k0; ki < k1; ++ki) {
          if (!pair_visible(geom, qi, ki)) continue;
          const Coord3& ck = geom.k_coords[static_cast<size_t>(ki)];
          const int tidx = geom.window.table_index(ck.l - cq.l, ck.y - cq.y, ck.x - cq.x);
          if (stats) {
            stats->visible_pairs++;
            stats->macs_scores += static_cast<int64_t>(heads) * head_dim;
            stats->macs_values += static_cast<int64_t>(heads) * head_dim;
          }
          for (int h = 0; h < heads; ++h) {
            const double* qrow = pq + (static_cast<int64_t>(qi) * width + h * head_dim);
            const double* krow = pk + (static_cast<int64_t>(ki) * width + h * head_dim);
            const double* vrow = pv + (static_cast<int64_t>(ki) * width + h * head_dim);
            double dot = 0.0;
            for (int d = 0; d < head_dim; ++d) dot += qrow[d] * krow[d];
            const double score = (dot + tables.at(h, tidx)) * scale;
            double& m = row_max[static_cast<size_t>(h) * tq + qi];
            double& l = row_sum[static_cast<size_t>(h) * tq + qi];
            double* orow = po + (static_cast<int64_t>(qi) * width + h * head_dim);
            if (score <= m) {
              const double p = std::exp(score - m);
              l += p;
              for (int d = 0; d < head_dim; ++d) orow[d] += p * vrow[d];
            } else {
              // New running max: rescale the accumulated state.
              const double r = (m == -kInf) ? 0.0 : std::exp(m - score);
              l = l * r + 1.0;
              for (int d = 0; d < head_dim; ++d) orow[d] = orow[d] * r + vrow[d];
              m = score;
            }
          }
        }
      }
    }
  }
  for (int qi = 0; qi < tq; ++qi)
    for (int h = 0; h < heads; ++h) {
      const double l = row_sum[static_cast<size_t>(h) * tq + qi];
      if (row_max[static_cast<size_t>(h) * tq + qi] == -kInf)
        throw DegenerateRowError("swa_attend: query with no visible keys");
      double* orow = po + (static_cast<int64_t>(qi) * width + h * head_dim);
      for (int d = 0; d < head_dim; ++d) orow[d] /= l;
    }

  if (!tape) return out;

  struct Tracked {
    bool on;
    int node;
  };
  const Tracked tr_q{q.tape() == tape, q.node()};
  const Tracked tr_k{k.tape() == tape, k.node()};
  const Tracked tr_v{v.tape() == tape, v.node()};
  const Tracked tr_t{tables.tape() == tape, tables.node()};
  auto dq = q.vec();
  auto dkv = k.vec();
  auto dvv = v.vec();
  auto dt = tables.vec();
  auto dout = out.vec();
  AttendGeometry g = geom;  // geometry snapshot for the backward pass
  const int tab_cols = tables.dim(1);

  return tape->emit(std::move(out), [=](const std::vector<double>& og, Tape& t) {
    std::vector<double>* gq = tr_q.on ? &t.grad_buf(tr_q.node) : nullptr;
    std::vector<double>* gk = tr_k.on ? &t.grad_buf(tr_k.node) : nullptr;
    std::vector<double>* gv = tr_v.on ? &t.grad_buf(tr_v.node) : nullptr;
    std::vector<double>* gt = tr_t.on ? &t.grad_buf(tr_t.node) : nullptr;
    // D_q = sum_d dO * O per head, the softmax-normalizer term.
    std::vector<double> dterm(static_cast<size_t>(heads) * tq, 0.0);
    for (int qi = 0; qi < tq; ++qi)
      for (int h = 0; h < heads; ++h) {
        double s = 0.0;
        for (int d = 0; d < head_dim; ++d) {
          const size_t idx = static_cast<size_t>(qi) * width + h * head_dim + d;
          s += og[idx] * dout[idx];
        }
        dterm[static_cast<size_t>(h) * tq + qi] = s;
      }
    const int nqb = (tq + bq - 1) / bq;
    const int nkb = (tk + bk - 1) / bk;
    std::vector<BlockBox> kbx(static_cast<size_t>(nkb));
    for (int j = 0; j < nkb; ++j)
      kbx[static_cast<size_t>(j)] = scan_block(g.k_coords, g.k_orders, nullptr, j * bk, std::min(tk, (j + 1) * bk));
    for (int qb2 = 0; qb2 < nqb; ++qb2) {
      const int q0 = qb2 * bq, q1 = std::min(tq, (qb2 + 1) * bq);
      const BlockBox qbox = scan_block(g.q_coords, g.q_orders,
                                       g.self_key.empty() ? nullptr : &g.self_key, q0, q1);
      for (int kb2 = 0; kb2 < nkb; ++kb2) {
        const int k0 = kb2 * bk, k1 = std::min(tk, (kb2 + 1) * bk);
        if (!block_may_be_visible(g, qbox, kbx[static_cast<size_t>(kb2)], k0, k1)) continue;
        for (int qi = q0; qi < q1; ++qi) {
          const Coord3& cq = g.q_coords[static_cast<size_t>(qi)];
          for (int ki = k0; ki < k1; ++ki) {
            if (!pair_visible(g, qi, ki)) continue;
            const Coord3& ck = g.k_coords[static_cast<size_t>(ki)];
            const int tidx = g.window.table_index(ck.l - cq.l, ck.y - cq.y, ck.x - cq.x);
            for (int h = 0; h < heads; ++h) {
              const size_t qoff = static_cast<size_t>(qi) * width + h * head_dim;
              const size_t koff = static_cast<size_t>(ki) * width + h * head_dim;
              double dot = 0.0;
              for (int d = 0; d < head_dim; ++d) dot += dq[qoff + d] * dkv[koff + d];
              const double score = (dot + dt[static_cast<size_t>(h) * tab_cols + tidx]) * scale;
              const double p = std::exp(score - row_max[static_cast<size_t>(h) * tq + qi]) /
                               row_sum[static_cast<size_t>(h) * tq + qi];
              double dp = 0.0;
              for (int d = 0; d < head_dim; ++d) dp += og[qoff + d] * dvv[koff + d];
              const double ds = p * (dp - dterm[static_cast<size_t>(h) * tq + qi]);
              if (gv)
                for (int d = 0; d < head_dim; ++d) (*gv)[koff + d] += p * og[qoff + d];
              if (gq)
                for (int d = 0; d < head_dim; ++d) (*gq)[qoff + d] += ds * scale * dkv[koff + d];
              if (gk)
                for (int d = 0; d < head_dim; ++d) (*gk)[koff + d] += ds * scale * dq[qoff + d];
              if (gt) (*gt)[static_cast<size_t>(h) * tab_cols + tidx] += ds * scale;
            }
          }
        }
      }
    }
  });
}

Tensor blocked_swa(const Tensor& y, const Dims3& dims, const WindowSpec& window,
                   const Tensor& tables, const AttentionWeights& w, bool causal,
                   bool diag_visible, int block, SwaStats* stats) {
  if (y.dim(0) != dims.tokens()) throw ShapeError("blocked_swa: volume token count mismatch");
  AttendGeometry geom = volume_geometry(dims, window, causal, diag_visible, block);
  Tensor q = matmul(y, w.wq);
  Tensor k = matmul(y, w.wk);
  Tensor v = matmul(y, w.wv);
  if (stats) {
    const int64_t t = dims.tokens();
    const int64_t c = y.dim(1);
    const int64_t hd = static_cast<int64_t>(w.heads) * w.head_dim;
    stats->macs_projections += 3 * t * c * hd;  // q, k, v
  }
  Tensor ctx = swa_attend(q, k, v, tables, geom, w.heads, w.head_dim, stats);
  if (stats)
    stats->macs_projections += dims.tokens() * static_cast<int64_t>(w.heads) * w.head_dim * w.wo.dim(1);
  return matmul(ctx, w.wo);
}

}  // namespace swa
