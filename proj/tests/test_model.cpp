#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "swa/model.hpp"
#include "swa/rng.hpp"
#include "swa/synth.hpp"

using namespace swa;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  cfg.head_dim = 4;
  cfg.layers = 2;
  cfg.window = WindowSpec{1, 1, 1};
  cfg.mlp_ratio = 2;
  cfg.num_rate_points = 2;
  cfg.scale_min = 0.02;
  return cfg;
}

std::vector<double> random_volume(uint64_t seed, const Dims3& dims, int c, double scale = 2.0) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(dims.tokens()) * c);
  for (auto& x : v) x = round_half_even(rng.normal(0.0, scale));
  return v;
}

// Incremental full-GOP decode through a session chain, restart-free
// (full history), committing the given latents.
std::vector<FrameFields> incremental_fields(const EntropyModel& m, const std::vector<double>& vol,
                                            const Dims3& dims, int rate_idx, bool trim_cache = true) {
  const int c = m.config.channels;
  const int hw = dims.height * dims.width;
  DecodeSession session(m, dims, rate_idx, trim_cache);
  std::vector<FrameFields> out;
  for (int l = 0; l < dims.frames; ++l) {
    session.begin_frame(l);
    Tensor mu({hw, c}), sg({hw, c}), lr({hw, c});
    for (int y = 0; y < dims.height; ++y)
      for (int x = 0; x < dims.width; ++x) {
        const Coord3 pos{l, y, x};
        const auto step = session.decode_step(pos);
        const int row = y * dims.width + x;
        for (int ch = 0; ch < c; ++ch) {
          mu.at(row, ch) = step.mu[static_cast<size_t>(ch)];
          sg.at(row, ch) = step.sigma[static_cast<size_t>(ch)];
          lr.at(row, ch) = step.lrp[static_cast<size_t>(ch)];
        }
        session.commit(pos, vol.data() + (static_cast<int64_t>(l) * hw + row) * c);
      }
    out.push_back(FrameFields{mu, sg, lr});
  }
  return out;
}

double max_field_diff(const std::vector<FrameFields>& a, const std::vector<FrameFields>& b) {
  double m = 0.0;
  for (size_t l = 0; l < a.size(); ++l) {
    for (int64_t i = 0; i < a[l].mu.numel(); ++i) {
      m = std::max(m, std::fabs(a[l].mu.data()[i] - b[l].mu.data()[i]));
      m = std::max(m, std::fabs(a[l].sigma.data()[i] - b[l].sigma.data()[i]));
      m = std::max(m, std::fabs(a[l].lrp.data()[i] - b[l].lrp.data()[i]));
    }
  }
  return m;
}

}  // namespace

TEST_CASE("slot plan: prepend replaces the row-end token") {
  Dims3 dims{1, 3, 4};
  SlotPlan plan = build_slot_plan(0, 1, dims);
  REQUIRE(plan.input_rows.size() == 12);

  // Row 0 starts from the zero vector with virtual coordinate (0, -1, 0).
  CHECK(plan.input_rows[0] == -1);
  CHECK(plan.coords[0] == Coord3{0, -1, 0});
  // Row r >= 1 starts from the hyperpixel directly above.
  CHECK(plan.input_rows[4] == static_cast<int>(scan_index(Coord3{0, 0, 0}, dims)));
  CHECK(plan.coords[4] == Coord3{0, 0, 0});
  // In-row slots carry the scan predecessor.
  CHECK(plan.input_rows[5] == static_cast<int>(scan_index(Coord3{0, 1, 0}, dims)));

  // The last latent of each row never appears as an input.
  for (int r = 0; r < 3; ++r) {
    const int row_end = static_cast<int>(scan_index(Coord3{0, r, 3}, dims));
    for (int in : plan.input_rows) CHECK(in != row_end);
  }
}

TEST_CASE("model init, parameter order, and serialization round trip") {
  ModelConfig cfg = tiny_config();
  EntropyModel m = EntropyModel::init(cfg, 42);
  CHECK(m.param_count() > 0);

  std::vector<std::string> names;
  m.for_each_param([&](const std::string& n, Tensor&) { names.push_back(n); });
  CHECK(names.front() == "embed.w");
  CHECK(names.back() == "rate.gain_lrp");

  const auto bytes = serialize_model(m);
  EntropyModel m2 = deserialize_model(bytes);
  CHECK(m2.config == cfg);
  CHECK(model_hash(m) == model_hash(m2));

  // Any parameter change must change the hash.
  m2.layers[0].attn.wq.data()[3] += 1e-9;
  CHECK(model_hash(m) != model_hash(m2));

  CHECK_THROWS_AS(deserialize_model(std::vector<uint8_t>(bytes.begin(), bytes.end() - 1)), DecodeError);
}

TEST_CASE("teacher-forced pass: shapes, sigma floor, rate-scaling identity") {
  ModelConfig cfg = tiny_config();
  EntropyModel m = EntropyModel::init(cfg, 7);
  Dims3 dims{2, 4, 4};
  const auto vol = random_volume(1, dims, cfg.channels);
  Tensor lat({static_cast<int>(dims.tokens()), cfg.channels}, vol);

  auto fields = forward_teacher_forced(m, lat, dims, 0);
  REQUIRE(fields.size() == 2);
  for (const auto& f : fields) {
    CHECK(f.mu.shape() == std::vector<int>{16, 8});
    for (int64_t i = 0; i < f.sigma.numel(); ++i) {
      CHECK(f.sigma.data()[i] >= cfg.scale_min);
      CHECK(std::fabs(f.lrp.data()[i]) <= 0.5);
    }
  }

  // All gains are 1 at init, so both rate points match the unscaled model.
  auto fields_r1 = forward_teacher_forced(m, lat, dims, 1);
  CHECK(max_field_diff(fields, fields_r1) == 0.0);

  // Perturbed gains at rate 1 must change outputs (and leave rate 0 alone).
  EntropyModel m2 = m;
  for (int j = 0; j < cfg.channels; ++j) m2.gain_in.at(1, j) = 1.3;
  auto fields2_r0 = forward_teacher_forced(m2, lat, dims, 0);
  auto fields2_r1 = forward_teacher_forced(m2, lat, dims, 1);
  CHECK(max_field_diff(fields, fields2_r0) == 0.0);
  CHECK(max_field_diff(fields, fields2_r1) > 0.0);
}

TEST_CASE("teacher-forced equals incremental KV-cached decode") {
  ModelConfig cfg = tiny_config();
  cfg.window = WindowSpec{1, 2, 2};
  EntropyModel m = EntropyModel::init(cfg, 19);
  Dims3 dims{3, 4, 5};
  const auto vol = random_volume(3, dims, cfg.channels);
  Tensor lat({static_cast<int>(dims.tokens()), cfg.channels}, vol);

  auto teacher = forward_teacher_forced(m, lat, dims, 0);
  auto incremental = incremental_fields(m, vol, dims, 0);
  CHECK(max_field_diff(teacher, incremental) <= 1e-10);
}

TEST_CASE("cache trimming is a bitwise no-op") {
  ModelConfig cfg = tiny_config();
  EntropyModel m = EntropyModel::init(cfg, 23);
  Dims3 dims{4, 3, 3};
  const auto vol = random_volume(5, dims, cfg.channels);

  auto trimmed = incremental_fields(m, vol, dims, 0, true);
  auto untrimmed = incremental_fields(m, vol, dims, 0, false);
  CHECK(max_field_diff(trimmed, untrimmed) == 0.0);
}

TEST_CASE("decode session rejects out-of-order requests") {
  ModelConfig cfg = tiny_config();
  EntropyModel m = EntropyModel::init(cfg, 29);
  Dims3 dims{1, 2, 2};
  DecodeSession session(m, dims, 0);
  session.begin_frame(0);
  CHECK_THROWS_AS(session.decode_step(Coord3{0, 1, 0}), SequencingError);
  auto step = session.decode_step(Coord3{0, 0, 0});
  (void)step;
  // Must commit before stepping again.
  CHECK_THROWS_AS(session.decode_step(Coord3{0, 0, 1}), SequencingError);
}

TEST_CASE("causality: future perturbations leave outputs bit-identical") {
  ModelConfig cfg = tiny_config();
  EntropyModel m = EntropyModel::init(cfg, 31);
  Dims3 dims{1, 4, 4};
  const auto vol = random_volume(7, dims, cfg.channels);
  Tensor lat({static_cast<int>(dims.tokens()), cfg.channels}, vol);
  auto base = forward_teacher_forced(m, lat, dims, 0);

  const int c = cfg.channels;
  for (int64_t p = 0; p < dims.tokens(); ++p) {
    auto mod = vol;
    for (int ch = 0; ch < c; ++ch) mod[static_cast<size_t>(p * c + ch)] += 5.0;
    Tensor lat2({static_cast<int>(dims.tokens()), c}, mod);
    auto out = forward_teacher_forced(m, lat2, dims, 0);
    for (int64_t q = 0; q < p; ++q)  // strictly earlier positions
      for (int ch = 0; ch < c; ++ch) {
        const int64_t i = q * c + ch;
        CHECK(out[0].mu.data()[i] == base[0].mu.data()[i]);
        CHECK(out[0].sigma.data()[i] == base[0].sigma.data()[i]);
        CHECK(out[0].lrp.data()[i] == base[0].lrp.data()[i]);
      }
  }
}

TEST_CASE("prepend correctness") {
  ModelConfig cfg = tiny_config();
  EntropyModel m = EntropyModel::init(cfg, 37);
  Dims3 dims{1, 3, 3};
  const auto vol = random_volume(11, dims, cfg.channels);
  Tensor lat({static_cast<int>(dims.tokens()), cfg.channels}, vol);
  auto base = forward_teacher_forced(m, lat, dims, 0);
  const int c = cfg.channels;

  // Changing (r-1, 0) changes the first prediction of row r.
  for (int r = 1; r < 3; ++r) {
    auto mod = vol;
    const int64_t above = scan_index(Coord3{0, r - 1, 0}, dims);
    for (int ch = 0; ch < c; ++ch) mod[static_cast<size_t>(above * c + ch)] += 3.0;
    Tensor lat2({static_cast<int>(dims.tokens()), c}, mod);
    auto out = forward_teacher_forced(m, lat2, dims, 0);
    const int64_t target = scan_index(Coord3{0, r, 0}, dims);
    double diff = 0.0;
    for (int ch = 0; ch < c; ++ch)
      diff = std::max(diff, std::fabs(out[0].mu.data()[target * c + ch] - base[0].mu.data()[target * c + ch]));
    CHECK(diff > 0.0);
  }

  // The first prediction of the volume is constant across inputs.
  const auto vol2 = random_volume(12, dims, cfg.channels);
  Tensor lat3({static_cast<int>(dims.tokens()), c}, vol2);
  auto out2 = forward_teacher_forced(m, lat3, dims, 0);
  for (int ch = 0; ch < c; ++ch) {
    CHECK(out2[0].mu.data()[ch] == base[0].mu.data()[ch]);
    CHECK(out2[0].sigma.data()[ch] == base[0].sigma.data()[ch]);
  }
}

TEST_CASE("receptive field bound in frames and pixels") {
  // lw = 0: no temporal reach at any depth.
  ModelConfig cfg = tiny_config();
  cfg.window = WindowSpec{0, 1, 1};
  EntropyModel m = EntropyModel::init(cfg, 41);
  Dims3 dims{2, 4, 4};
  const auto vol = random_volume(13, dims, cfg.channels);
  Tensor lat({static_cast<int>(dims.tokens()), cfg.channels}, vol);
  auto base = forward_teacher_forced(m, lat, dims, 0);
  const int c = cfg.channels;
  const int hw = 16;

  auto mod = vol;
  for (int i = 0; i < hw * c; ++i) mod[static_cast<size_t>(i)] += 4.0;  // whole frame 0
  Tensor lat2({static_cast<int>(dims.tokens()), c}, mod);
  auto out = forward_teacher_forced(m, lat2, dims, 0);
  for (int64_t i = 0; i < base[1].mu.numel(); ++i) {
    CHECK(out[1].mu.data()[i] == base[1].mu.data()[i]);
    CHECK(out[1].sigma.data()[i] == base[1].sigma.data()[i]);
    CHECK(out[1].lrp.data()[i] == base[1].lrp.data()[i]);
  }
}

TEST_CASE("k=0 restart context is frame-independent") {
  ModelConfig cfg = tiny_config();
  EntropyModel m = EntropyModel::init(cfg, 43);
  Dims3 dims{1, 3, 3};
  const auto frame_a = random_volume(17, dims, cfg.channels);
  const auto frame_b = random_volume(18, dims, cfg.channels);

  // Decoding a frame with no references matches decoding it as frame 5
  // after unrelated history, when the session is rebuilt (k = 0 restart).
  DecodeSession s1(m, dims, 0);
  s1.begin_frame(0);
  DecodeSession s2(m, dims, 0);
  s2.push_reference_frame(frame_b, 4);
  // k = 0 restart: fresh session, no references pushed.
  DecodeSession s3(m, dims, 0);
  s3.begin_frame(5);

  const int c = cfg.channels;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      const auto a = s1.decode_step(Coord3{0, y, x});
      const auto b = s3.decode_step(Coord3{5, y, x});
      for (int ch = 0; ch < c; ++ch) {
        CHECK(a.mu[static_cast<size_t>(ch)] == b.mu[static_cast<size_t>(ch)]);
        CHECK(a.sigma[static_cast<size_t>(ch)] == b.sigma[static_cast<size_t>(ch)]);
      }
      const int row = (y * 3 + x) * c;
      s1.commit(Coord3{0, y, x}, frame_a.data() + row);
      s3.commit(Coord3{5, y, x}, frame_a.data() + row);
    }
}

TEST_CASE("apply_lrp saturates and is exact at zero") {
  Tensor y({1, 2}, {3.0, -1.0});
  Tensor r({1, 2}, {0.0, 0.4999});
  Tensor refined = apply_lrp(y, r);
  CHECK(refined.at(0, 0) == 3.0);
  CHECK(refined.at(0, 1) == doctest::Approx(-0.5001));
}
