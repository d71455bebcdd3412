#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "swa/attention.hpp"
#include "swa/rng.hpp"
#include "swa/tensor.hpp"

using namespace swa;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Tensor random_tensor(Rng& rng, std::vector<int> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal(0.0, scale);
  return t;
}

AttentionWeights random_weights(Rng& rng, int c, int heads, int head_dim) {
  AttentionWeights w;
  w.heads = heads;
  w.head_dim = head_dim;
  w.wq = random_tensor(rng, {c, heads * head_dim}, 0.3);
  w.wk = random_tensor(rng, {c, heads * head_dim}, 0.3);
  w.wv = random_tensor(rng, {c, heads * head_dim}, 0.3);
  w.wo = random_tensor(rng, {heads * head_dim, c}, 0.3);
  return w;
}

std::vector<Tensor> bias_for(const Tensor& tables, int heads, const AttendGeometry& g) {
  std::vector<Tensor> out;
  for (int h = 0; h < heads; ++h) out.push_back(assemble_bias_matrix(tables, h, g));
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("window_bias offsets and truncation to -inf") {
  WindowSpec w{2, 3, 3};
  Tensor tables({1, w.table_size()});
  for (int i = 0; i < w.table_size(); ++i) tables.data()[i] = i;

  const Coord3 m{5, 10, 10};
  CHECK(window_bias(m, m, w, tables, 0) == tables.at(0, w.table_index(0, 0, 0)));
  CHECK(window_bias(m, Coord3{5, 10, 14}, w, tables, 0) == -kInf);   // |dx| = ww+1
  CHECK(window_bias(m, Coord3{3, 13, 7}, w, tables, 0) ==
        tables.at(0, w.table_index(-2, 3, -3)));                     // corner of the 5x7x7 window
  CHECK(window_bias(m, Coord3{2, 10, 10}, w, tables, 0) == -kInf);   // |dl| = lw+1
}

TEST_CASE("window_bias is translation invariant") {
  WindowSpec w{1, 2, 2};
  Rng rng(3);
  Tensor tables = random_tensor(rng, {2, w.table_size()});
  for (int rep = 0; rep < 100; ++rep) {
    const Coord3 m{rng.uniform_int(0, 5), rng.uniform_int(0, 9), rng.uniform_int(0, 9)};
    const int dl = rng.uniform_int(-2, 2), dy = rng.uniform_int(-3, 3), dx = rng.uniform_int(-3, 3);
    const Coord3 n{m.l + dl, m.y + dy, m.x + dx};
    const Coord3 m2{m.l + 7, m.y + 11, m.x + 13};
    const Coord3 n2{n.l + 7, n.y + 11, n.x + 13};
    CHECK(window_bias(m, n, w, tables, 1) == window_bias(m2, n2, w, tables, 1));
  }
}

TEST_CASE("causal_mask follows scan order") {
  Dims3 d{3, 4, 5};
  const Coord3 m{1, 2, 3};
  CHECK(!causal_mask(m, Coord3{1, 2, 4}, d));  // directly after m
  CHECK(!causal_mask(m, m, d));                // self is not a key
  CHECK(causal_mask(m, Coord3{0, 3, 4}, d));   // previous frame, any offset
  CHECK(causal_mask(m, Coord3{1, 2, 2}, d));
  CHECK(!causal_mask(m, Coord3{2, 0, 0}, d));
}

TEST_CASE("visible_count border truncation and uniformity") {
  Dims3 d{3, 8, 8};
  WindowSpec w{1, 2, 2};

  CHECK(visible_count(Coord3{0, 0, 0}, d, w, true) == 0);

  // Equal border distance -> equal counts within one frame.
  CHECK(visible_count(Coord3{1, 3, 3}, d, w, true) == visible_count(Coord3{1, 4, 4}, d, w, true));

  CHECK(visible_count(Coord3{1, 0, 0}, d, w, true) < visible_count(Coord3{1, 4, 4}, d, w, true));

  // All full-window interior queries with complete causal history agree.
  int expected = -1;
  for (int y = w.hw; y < d.height - w.hw; ++y)
    for (int x = w.ww; x < d.width - w.ww; ++x) {
      const int c = visible_count(Coord3{w.lw, y, x}, d, w, true);
      if (expected < 0) expected = c;
      CHECK(c == expected);
    }
  // Non-causal interior count is the full kernel minus the center.
  CHECK(visible_count(Coord3{1, 4, 4}, d, w, false) == w.table_size() - 1);
}

TEST_CASE("dense attention, single token") {
  Rng rng(5);
  const int c = 4;
  AttentionWeights w = random_weights(rng, c, 1, c);
  Tensor y = random_tensor(rng, {1, c});
  Tensor b({1, 1}, {0.0});
  Tensor out = dense_masked_attention(y, w, {b});
  // Softmax over a singleton is 1, so out = (y Wv) Wo.
  Tensor ref = matmul(matmul(y, w.wv), w.wo);
  CHECK(max_abs_diff(out, ref) <= 1e-14);
}

TEST_CASE("dense attention matches hand computation at T=2") {
  AttentionWeights w;
  w.heads = 1;
  w.head_dim = 2;
  w.wq = Tensor({2, 2}, {1, 0, 0, 1});
  w.wk = Tensor({2, 2}, {1, 0, 0, 1});
  w.wv = Tensor({2, 2}, {2, 0, 0, 2});
  w.wo = Tensor({2, 2}, {1, 0, 0, 1});
  Tensor y({2, 2}, {1.0, 0.0, 0.0, 1.0});
  // Token 0 sees only itself; token 1 sees both with bias 0.
  Tensor b({2, 2}, {0.0, -kInf, 0.0, 0.0});
  Tensor out = dense_masked_attention(y, w, {b});

  CHECK(out.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(out.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  // Scores for token 1: q=(0,1); k0=(1,0) -> 0, k1=(0,1) -> 1, scale 1/sqrt(2).
  const double s = 1.0 / std::sqrt(2.0);
  const double p1 = std::exp(s) / (1.0 + std::exp(s));
  CHECK(out.at(1, 0) == doctest::Approx(2.0 * (1.0 - p1)).epsilon(1e-12));
  CHECK(out.at(1, 1) == doctest::Approx(2.0 * p1).epsilon(1e-12));
}

TEST_CASE("dense attention rejects fully masked query rows") {
  Rng rng(6);
  AttentionWeights w = random_weights(rng, 4, 1, 4);
  Tensor y = random_tensor(rng, {2, 4});
  Tensor b = Tensor::full({2, 2}, -kInf);
  b.at(1, 0) = 0.0;
  CHECK_THROWS_AS(dense_masked_attention(y, w, {b}), DegenerateRowError);
}

TEST_CASE("blocked_swa equals dense oracle across randomized configurations") {
  Rng rng(7);
  const int block_sizes[] = {4, 16, 64};
  for (int rep = 0; rep < 40; ++rep) {
    Dims3 dims{rng.uniform_int(1, 3), rng.uniform_int(2, 6), rng.uniform_int(2, 6)};
    const int c = rng.uniform_int(0, 1) ? 4 : 8;
    const int heads = rng.uniform_int(1, 2);
    const int dk = c / heads;
    WindowSpec win{rng.uniform_int(0, 2), rng.uniform_int(1, 3), rng.uniform_int(1, 3)};
    const bool causal = rng.uniform_int(0, 1) == 1;
    const bool diag = causal ? true : (dims.tokens() > 1 && rng.uniform_int(0, 1) == 1 ? false : true);
    const int block = block_sizes[rep % 3];

    AttentionWeights w = random_weights(rng, c, heads, dk);
    Tensor tables = random_tensor(rng, {heads, win.table_size()});
    Tensor y = random_tensor(rng, {static_cast<int>(dims.tokens()), c});

    AttendGeometry g = volume_geometry(dims, win, causal, diag, block);
    Tensor dense = dense_masked_attention(y, w, bias_for(tables, heads, g));
    Tensor fast = blocked_swa(y, dims, win, tables, w, causal, diag, block);
    CHECK(max_abs_diff(dense, fast) <= 1e-10);
  }
}

TEST_CASE("blocked_swa skips key blocks when the window is small") {
  Rng rng(8);
  Dims3 dims{3, 6, 6};
  WindowSpec win{1, 1, 1};
  const int c = 8, heads = 2, dk = 4;
  AttentionWeights w = random_weights(rng, c, heads, dk);
  Tensor tables = random_tensor(rng, {heads, win.table_size()});
  Tensor y = random_tensor(rng, {static_cast<int>(dims.tokens()), c});

  SwaStats stats;
  Tensor out = blocked_swa(y, dims, win, tables, w, true, true, 16, &stats);
  CHECK(stats.key_blocks_visited < stats.key_blocks_total);
  CHECK(stats.key_blocks_visited > 0);

  AttendGeometry g = volume_geometry(dims, win, true, true, 16);
  Tensor dense = dense_masked_attention(y, w, bias_for(tables, heads, g));
  CHECK(max_abs_diff(dense, out) <= 1e-10);
}

TEST_CASE("causality: future value perturbations change nothing, bit exact") {
  Rng rng(9);
  Dims3 dims{2, 3, 4};
  WindowSpec win{1, 2, 2};
  const int c = 4, heads = 1, dk = 4;
  AttentionWeights w = random_weights(rng, c, heads, dk);
  Tensor tables = random_tensor(rng, {heads, win.table_size()});
  Tensor y = random_tensor(rng, {static_cast<int>(dims.tokens()), c});

  Tensor base = blocked_swa(y, dims, win, tables, w, true, true);
  const int64_t t = dims.tokens();
  for (int64_t p = 0; p < t; ++p) {
    Tensor y2(y.shape(), y.vec());
    for (int j = 0; j < c; ++j) y2.at(static_cast<int>(p), j) += 10.0;
    Tensor out = blocked_swa(y2, dims, win, tables, w, true, true);
    for (int64_t m = 0; m < p; ++m)
      for (int j = 0; j < c; ++j)
        CHECK(out.at(static_cast<int>(m), j) == base.at(static_cast<int>(m), j));
  }
}

TEST_CASE("blocked_swa gradients match finite differences and the dense path") {
  Rng rng(10);
  Dims3 dims{2, 3, 3};
  WindowSpec win{1, 1, 1};
  const int c = 4, heads = 2, dk = 2;
  AttentionWeights w = random_weights(rng, c, heads, dk);
  Tensor tables = random_tensor(rng, {heads, win.table_size()});
  Tensor y = random_tensor(rng, {static_cast<int>(dims.tokens()), c});
  Tensor target = random_tensor(rng, {static_cast<int>(dims.tokens()), c});

  auto loss_blocked = [&](const Tensor& yy, const Tensor& tab, const AttentionWeights& ww) {
    Tensor d = sub(blocked_swa(yy, dims, win, tab, ww, true, true, 4), target);
    return affine(sum(mul(d, d)), 0.5, 0.0);
  };
  auto loss_dense = [&](const Tensor& yy, const Tensor& tab, const AttentionWeights& ww) {
    AttendGeometry g = volume_geometry(dims, win, true, true, 4);
    std::vector<Tensor> bias;
    for (int h = 0; h < heads; ++h) bias.push_back(bias_matrix_from_table(tab, h, g));
    Tensor d = sub(dense_masked_attention(yy, ww, bias), target);
    return affine(sum(mul(d, d)), 0.5, 0.0);
  };

  auto tape = std::make_shared<Tape>();
  tape->watch(y);
  tape->watch(tables);
  tape->watch(w.wq);
  tape->watch(w.wk);
  tape->watch(w.wv);
  tape->watch(w.wo);
  tape->backward(loss_blocked(y, tables, w));
  auto gy = tape->grad(y);
  auto gt = tape->grad(tables);
  auto gq = tape->grad(w.wq);
  auto go = tape->grad(w.wo);

  auto tape2 = std::make_shared<Tape>();
  tape2->watch(y);
  tape2->watch(tables);
  tape2->watch(w.wq);
  tape2->watch(w.wk);
  tape2->watch(w.wv);
  tape2->watch(w.wo);
  tape2->backward(loss_dense(y, tables, w));
  auto gy2 = tape2->grad(y);
  auto gt2 = tape2->grad(tables);
  auto gq2 = tape2->grad(w.wq);
  auto go2 = tape2->grad(w.wo);

  for (size_t i = 0; i < gy.size(); ++i) CHECK(std::fabs(gy[i] - gy2[i]) <= 1e-9);
  for (size_t i = 0; i < gt.size(); ++i) CHECK(std::fabs(gt[i] - gt2[i]) <= 1e-9);
  for (size_t i = 0; i < gq.size(); ++i) CHECK(std::fabs(gq[i] - gq2[i]) <= 1e-9);
  for (size_t i = 0; i < go.size(); ++i) CHECK(std::fabs(go[i] - go2[i]) <= 1e-9);

  // Finite differences on a few coordinates of each input.
  auto fd_check = [&](Tensor& probe, const std::vector<double>& analytic, int count) {
    const double h = 1e-6;
    for (int i = 0; i < count; ++i) {
      const int64_t idx = (probe.numel() * i) / count;
      const double keep = probe.data()[idx];
      probe.data()[idx] = keep + h;
      const double up = loss_blocked(y, tables, w).at(0);
      probe.data()[idx] = keep - h;
      const double dn = loss_blocked(y, tables, w).at(0);
      probe.data()[idx] = keep;
      const double num = (up - dn) / (2.0 * h);
      CHECK(std::fabs(analytic[static_cast<size_t>(idx)] - num) <=
            1e-7 + 1e-4 * std::max(std::fabs(num), std::fabs(analytic[static_cast<size_t>(idx)])));
    }
  };
  fd_check(y, gy, 8);
  fd_check(tables, gt, 8);
  fd_check(w.wq, gq, 6);
  fd_check(w.wo, go, 6);
}

TEST_CASE("swa_attend output is independent of block size") {
  Rng rng(12);
  Dims3 dims{2, 5, 5};
  WindowSpec win{1, 2, 2};
  const int c = 8, heads = 2, dk = 4;
  AttentionWeights w = random_weights(rng, c, heads, dk);
  Tensor tables = random_tensor(rng, {heads, win.table_size()});
  Tensor y = random_tensor(rng, {static_cast<int>(dims.tokens()), c});

  Tensor a = blocked_swa(y, dims, win, tables, w, true, true, 4);
  Tensor b = blocked_swa(y, dims, win, tables, w, true, true, 16);
  Tensor d = blocked_swa(y, dims, win, tables, w, true, true, 64);
  CHECK(max_abs_diff(a, b) <= 1e-10);
  CHECK(max_abs_diff(a, d) <= 1e-10);
}
