#pragma once

#include <cstdint>
#include <vector>

#include "swa/geometry.hpp"
#include "swa/tensor.hpp"

namespace swa {

// Packed per-head projections: columns [i*head_dim, (i+1)*head_dim) of
// wq/wk/wv belong to head i; wo maps the concatenated heads back to C.
struct AttentionWeights {
  Tensor wq;  // C x (h*dk)
  Tensor wk;  // C x (h*dk)
  Tensor wv;  // C x (h*dk)
  Tensor wo;  // (h*dk) x C
  int heads = 1;
  int head_dim = 1;
};

// Execution counters for the block-skipping kernel. MAC counts cover the
// matmul-equivalent work only: projections, score dots, and weighted value
// sums (softmax normalization and exp are not MACs).
struct SwaStats {
  int64_t key_blocks_total = 0;
  int64_t key_blocks_visited = 0;
  int64_t visible_pairs = 0;  // geometry-level, counted once across heads
  int64_t macs_projections = 0;
  int64_t macs_scores = 0;
  int64_t macs_values = 0;

  int64_t macs_attention() const { return macs_projections + macs_scores + macs_values; }
  void reset() { *this = SwaStats{}; }
};

// Eq.-level bias lookup: the per-head table entry at the relative offset
// coord(n) - coord(m) when in-window, else -infinity. `tables` is rank-2
// [heads x table_size].
double window_bias(const Coord3& m, const Coord3& n, const WindowSpec& w,
                   const Tensor& tables, int head);

// Slot-level attention geometry. Each slot carries the coordinate of the
// token it holds plus a causal order index; a key is visible to a query iff
// the offset is in-window and (when causal) its order is strictly lower, or
// it is the query's own slot and diag_visible is set.
struct AttendGeometry {
  WindowSpec window;
  std::vector<Coord3> q_coords;
  std::vector<Coord3> k_coords;
  std::vector<int64_t> q_orders;
  std::vector<int64_t> k_orders;
  std::vector<int> self_key;  // per query: key index of its own slot, or -1
  bool causal = true;
  bool diag_visible = true;
  int block_q = 16;
  int block_k = 16;
};

bool pair_visible(const AttendGeometry& g, int q, int k);

// Self-attention geometry over a flat latent volume in scan order.
AttendGeometry volume_geometry(const Dims3& dims, const WindowSpec& window,
                               bool causal, bool diag_visible, int block);

// Per-head T_q x T_k bias+mask matrix as a plain constant tensor
// (oracle/test use; entries are table values or -infinity).
Tensor assemble_bias_matrix(const Tensor& tables, int head, const AttendGeometry& g);

// Differentiable variant: gradients flow back into the bias table.
Tensor bias_matrix_from_table(const Tensor& tables, int head, const AttendGeometry& g);

// Reference implementation of windowed multi-head attention, built from
// generic tape primitives. Materializes the full score matrix; O(T^2).
// `bias` holds one T x T matrix per head.
Tensor dense_masked_attention(const Tensor& y, const AttentionWeights& w,
                              const std::vector<Tensor>& bias);

// Block-skipping attention core on projected Q/K/V (all heads packed as
// [T x h*dk]). Never materializes T_q x T_k scores; key blocks whose every
// (query, key) pair is masked are skipped. Differentiable via a custom
// vector-Jacobian product that recomputes probabilities blockwise.
Tensor swa_attend(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& tables,
                  const AttendGeometry& geom, int heads, int head_dim, SwaStats* stats = nullptr);

// Full windowed multi-head attention over a flat volume: projections,
// block-skipping core, output projection.
Tensor blocked_swa(const Tensor& y, const Dims3& dims, const WindowSpec& window,
                   const Tensor& tables, const AttentionWeights& w, bool causal,
                   bool diag_visible = true, int block = 16, SwaStats* stats = nullptr);

}  // namespace swa
