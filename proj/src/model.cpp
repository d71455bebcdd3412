#include "swa/model.hpp"

#include <cmath>
#include <cstring>

#include "swa/rng.hpp"
#include "swa/wire.hpp"

namespace swa {

void ModelConfig::validate() const {
  if (channels < 1 || heads < 1 || head_dim < 1 || layers < 1)
    throw ContractError("model config: channels/heads/head_dim/layers must be >= 1");
  if (heads * head_dim != channels)
    throw ContractError("model config: heads * head_dim must equal channels");
  if (mlp_ratio < 1) throw ContractError("model config: mlp_ratio must be >= 1");
  if (num_rate_points < 1) throw ContractError("model config: num_rate_points must be >= 1");
  if (scale_min <= 0.0) throw ContractError("model config: scale_min must be positive");
  if (window.lw < 0 || window.hw < 0 || window.ww < 0)
    throw ContractError("model config: window offsets must be non-negative");
}

namespace {

Tensor randn(Rng& rng, std::vector<int> shape, double stddev) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

EntropyModel EntropyModel::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const int c = cfg.channels;
  const int width = cfg.heads * cfg.head_dim;
  const int hidden = cfg.mlp_ratio * c;
  const double proj_std = 0.02;
  // Residual-branch output projections shrink with depth for stable sums.
  const double out_std = proj_std / std::sqrt(2.0 * cfg.layers);

  EntropyModel m;
  m.config = cfg;
  m.embed_w = randn(rng, {c, c}, proj_std);
  m.embed_b = Tensor::zeros({c});
  for (int i = 0; i < cfg.layers; ++i) {
    LayerParams lp;
    lp.ln1_gain = Tensor::full({c}, 1.0);
    lp.ln1_bias = Tensor::zeros({c});
    lp.attn.heads = cfg.heads;
    lp.attn.head_dim = cfg.head_dim;
    lp.attn.wq = randn(rng, {c, width}, proj_std);
    lp.attn.wk = randn(rng, {c, width}, proj_std);
    lp.attn.wv = randn(rng, {c, width}, proj_std);
    lp.attn.wo = randn(rng, {width, c}, out_std);
    lp.bias_tables = Tensor::zeros({cfg.heads, cfg.window.table_size()});
    lp.ln2_gain = Tensor::full({c}, 1.0);
    lp.ln2_bias = Tensor::zeros({c});
    lp.mlp_w1 = randn(rng, {c, hidden}, proj_std);
    lp.mlp_b1 = Tensor::zeros({hidden});
    lp.mlp_w2 = randn(rng, {hidden, c}, out_std);
    lp.mlp_b2 = Tensor::zeros({c});
    m.layers.push_back(std::move(lp));
  }
  m.final_gain = Tensor::full({c}, 1.0);
  m.final_bias = Tensor::zeros({c});
  m.head_w = randn(rng, {c, 3 * c}, proj_std);
  m.head_b = Tensor::zeros({3 * c});
  m.gain_in = Tensor::full({cfg.num_rate_points, c}, 1.0);
  m.gain_mu = Tensor::full({cfg.num_rate_points, c}, 1.0);
  m.gain_sigma = Tensor::full({cfg.num_rate_points, c}, 1.0);
  m.gain_lrp = Tensor::full({cfg.num_rate_points, c}, 1.0);
  return m;
}

void EntropyModel::for_each_param(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("embed.w", embed_w);
  fn("embed.b", embed_b);
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    LayerParams& lp = layers[i];
    fn(p + "ln1.gain", lp.ln1_gain);
    fn(p + "ln1.bias", lp.ln1_bias);
    fn(p + "attn.wq", lp.attn.wq);
    fn(p + "attn.wk", lp.attn.wk);
    fn(p + "attn.wv", lp.attn.wv);
    fn(p + "attn.wo", lp.attn.wo);
    fn(p + "attn.bias_tables", lp.bias_tables);
    fn(p + "ln2.gain", lp.ln2_gain);
    fn(p + "ln2.bias", lp.ln2_bias);
    fn(p + "mlp.w1", lp.mlp_w1);
    fn(p + "mlp.b1", lp.mlp_b1);
    fn(p + "mlp.w2", lp.mlp_w2);
    fn(p + "mlp.b2", lp.mlp_b2);
  }
  fn("final_ln.gain", final_gain);
  fn("final_ln.bias", final_bias);
  fn("head.w", head_w);
  fn("head.b", head_b);
  fn("rate.gain_in", gain_in);
  fn("rate.gain_mu", gain_mu);
  fn("rate.gain_sigma", gain_sigma);
  fn("rate.gain_lrp", gain_lrp);
}

void EntropyModel::for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<EntropyModel*>(this)->for_each_param(
      [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

void EntropyModel::watch_all(Tape& tape) {
  for_each_param([&tape](const std::string&, Tensor& t) { tape.watch(t); });
}

int64_t EntropyModel::param_count() const {
  int64_t n = 0;
  for_each_param([&n](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

SlotPlan build_slot_plan(int frame_begin, int frame_end, const Dims3& dims) {
  SlotPlan plan;
  const int hw = dims.height * dims.width;
  const int64_t count = static_cast<int64_t>(frame_end - frame_begin) * hw;
  plan.input_rows.reserve(static_cast<size_t>(count));
  plan.coords.reserve(static_cast<size_t>(count));
  plan.orders.reserve(static_cast<size_t>(count));
  for (int l = frame_begin; l < frame_end; ++l)
    for (int r = 0; r < dims.height; ++r)
      for (int j = 0; j < dims.width; ++j) {
        // The input token is the scan predecessor within the row; at row
        // starts it is the hyperpixel directly above (zero vector on row 0).
        Coord3 in;
        int in_row;
        if (j == 0) {
          in = Coord3{l, r - 1, 0};
          in_row = (r == 0) ? -1 : static_cast<int>(scan_index(in, dims));
        } else {
          in = Coord3{l, r, j - 1};
          in_row = static_cast<int>(scan_index(in, dims));
        }
        plan.input_rows.push_back(in_row);
        plan.coords.push_back(in);
        plan.orders.push_back(scan_index(Coord3{l, r, j}, dims));
      }
  return plan;
}

namespace {

// Rank-1 view of one row of a [rate_points x C] gain tensor. Plain copy:
// gains are leaves, so gather_rows keeps the gradient path.
Tensor gain_row(const Tensor& gains, int rate_idx) {
  if (rate_idx < 0 || rate_idx >= gains.dim(0))
    throw ContractError("rate_idx out of range");
  return gather_rows(gains, {rate_idx});
}

struct HeadOutputs {
  Tensor mu, sigma, lrp;
};

HeadOutputs apply_heads(const EntropyModel& m, const Tensor& x, int rate_idx) {
  const int c = m.config.channels;
  Tensor raw = linear(x, m.head_w, m.head_b);
  Tensor mu = scale_channels(slice_cols(raw, 0, c), gain_row(m.gain_mu, rate_idx));
  Tensor sigma = affine(softplus(scale_channels(slice_cols(raw, c, 2 * c), gain_row(m.gain_sigma, rate_idx))),
                        1.0, m.config.scale_min);
  Tensor lrp = affine(tanh_op(scale_channels(slice_cols(raw, 2 * c, 3 * c), gain_row(m.gain_lrp, rate_idx))),
                      0.5, 0.0);
  return {std::move(mu), std::move(sigma), std::move(lrp)};
}

}  // namespace

std::vector<FrameFields> forward_teacher_forced(const EntropyModel& m, const Tensor& latents,
                                                const Dims3& dims, int rate_idx,
                                                int block, SwaStats* stats) {
  m.config.validate();
  if (latents.rank() != 2 || latents.dim(0) != dims.tokens() || latents.dim(1) != m.config.channels)
    throw ShapeError("forward_teacher_forced: latent matrix must be [L*H*W x C]");

  const SlotPlan plan = build_slot_plan(0, dims.frames, dims);
  const int t = static_cast<int>(plan.orders.size());

  AttendGeometry geom;
  geom.window = m.config.window;
  geom.q_coords = plan.coords;
  geom.k_coords = plan.coords;
  geom.q_orders = plan.orders;
  geom.k_orders = plan.orders;
  geom.self_key.resize(static_cast<size_t>(t));
  for (int i = 0; i < t; ++i) geom.self_key[static_cast<size_t>(i)] = i;
  geom.causal = true;
  geom.diag_visible = true;
  geom.block_q = block;
  geom.block_k = block;

  Tensor x = scale_channels(gather_rows(latents, plan.input_rows), gain_row(m.gain_in, rate_idx));
  x = linear(x, m.embed_w, m.embed_b);
  if (stats) {
    const int64_t c = m.config.channels;
    stats->macs_projections += static_cast<int64_t>(t) * c * c;
  }
  for (const LayerParams& lp : m.layers) {
    Tensor xn = layer_norm(x, lp.ln1_gain, lp.ln1_bias, kLayerNormEps);
    Tensor q = matmul(xn, lp.attn.wq);
    Tensor k = matmul(xn, lp.attn.wk);
    Tensor v = matmul(xn, lp.attn.wv);
    if (stats) {
      const int64_t c = m.config.channels;
      stats->macs_projections += 3 * static_cast<int64_t>(t) * c * c;
    }
    Tensor ctx = swa_attend(q, k, v, lp.bias_tables, geom, m.config.heads, m.config.head_dim, stats);
    if (stats) {
      const int64_t c = m.config.channels;
      stats->macs_projections += static_cast<int64_t>(t) * c * c;
    }
    x = add(x, matmul(ctx, lp.attn.wo));
    Tensor xm = layer_norm(x, lp.ln2_gain, lp.ln2_bias, kLayerNormEps);
    Tensor h = gelu(linear(xm, lp.mlp_w1, lp.mlp_b1));
    x = add(x, linear(h, lp.mlp_w2, lp.mlp_b2));
    if (stats) {
      const int64_t c = m.config.channels;
      stats->macs_projections += 2 * static_cast<int64_t>(t) * c * (static_cast<int64_t>(m.config.mlp_ratio) * c);
    }
  }
  x = layer_norm(x, m.final_gain, m.final_bias, kLayerNormEps);
  HeadOutputs out = apply_heads(m, x, rate_idx);
  if (stats) {
    const int64_t c = m.config.channels;
    stats->macs_projections += static_cast<int64_t>(t) * c * 3 * c;
  }

  const int hw = dims.height * dims.width;
  std::vector<FrameFields> fields;
  fields.reserve(static_cast<size_t>(dims.frames));
  for (int l = 0; l < dims.frames; ++l) {
    std::vector<int> rows(static_cast<size_t>(hw));
    for (int i = 0; i < hw; ++i) rows[static_cast<size_t>(i)] = l * hw + i;
    fields.push_back(FrameFields{gather_rows(out.mu, rows), gather_rows(out.sigma, rows),
                                 gather_rows(out.lrp, rows)});
  }
  return fields;
}

Tensor apply_lrp(const Tensor& y_hat, const Tensor& lrp) { return add(y_hat, lrp); }

DecodeSession::DecodeSession(const EntropyModel& m, const Dims3& dims, int rate_idx, bool trim_cache)
    : model_(m), dims_(dims), rate_idx_(rate_idx), trim_cache_(trim_cache) {
  m.config.validate();
  if (rate_idx < 0 || rate_idx >= m.config.num_rate_points)
    throw ContractError("decode session: rate_idx out of range");
  caches_.resize(static_cast<size_t>(m.config.layers));
  committed_.assign(static_cast<size_t>(dims.height) * dims.width * m.config.channels, 0.0);
}

void DecodeSession::trim(int active_frame) {
  if (!trim_cache_) return;
  const int keep_from = active_frame - model_.config.window.lw;
  for (auto& cache : caches_) {
    int first = 0;
    while (first < cache.rows && cache.frame_of[static_cast<size_t>(first)] < keep_from) ++first;
    if (first == 0) continue;
    const int width = model_.config.heads * model_.config.head_dim;
    cache.k.erase(cache.k.begin(), cache.k.begin() + static_cast<int64_t>(first) * width);
    cache.v.erase(cache.v.begin(), cache.v.begin() + static_cast<int64_t>(first) * width);
    cache.coords.erase(cache.coords.begin(), cache.coords.begin() + first);
    cache.orders.erase(cache.orders.begin(), cache.orders.begin() + first);
    cache.frame_of.erase(cache.frame_of.begin(), cache.frame_of.begin() + first);
    cache.rows -= first;
  }
}

void DecodeSession::append_cache(int layer, const double* k, const double* v, int rows,
                                 const Coord3* coords, const int64_t* orders, int frame_index) {
  LayerCache& cache = caches_[static_cast<size_t>(layer)];
  const int width = model_.config.heads * model_.config.head_dim;
  cache.k.insert(cache.k.end(), k, k + static_cast<int64_t>(rows) * width);
  cache.v.insert(cache.v.end(), v, v + static_cast<int64_t>(rows) * width);
  cache.coords.insert(cache.coords.end(), coords, coords + rows);
  cache.orders.insert(cache.orders.end(), orders, orders + rows);
  cache.frame_of.insert(cache.frame_of.end(), static_cast<size_t>(rows), frame_index);
  cache.rows += rows;
}

void DecodeSession::push_reference_frame(const std::vector<double>& latents, int frame_index) {
  const int hw = dims_.height * dims_.width;
  const int c = model_.config.channels;
  if (static_cast<int64_t>(latents.size()) != static_cast<int64_t>(hw) * c)
    throw ShapeError("push_reference_frame: latent size mismatch");
  if (frame_index <= last_pushed_frame_)
    throw SequencingError("push_reference_frame: frames must arrive in increasing order");
  if (current_frame_ >= 0)
    throw SequencingError("push_reference_frame: current frame already started");
  last_pushed_frame_ = frame_index;
  trim(frame_index);

  // Single-frame slot plan, shifted to the absolute frame index.
  Dims3 one{1, dims_.height, dims_.width};
  SlotPlan plan = build_slot_plan(0, 1, one);
  const int64_t frame_order_base = static_cast<int64_t>(frame_index) * hw;
  for (int i = 0; i < hw; ++i) {
    plan.coords[static_cast<size_t>(i)].l = frame_index;
    plan.orders[static_cast<size_t>(i)] += frame_order_base;
  }

  Tensor lat({hw, c}, latents);
  Tensor x = scale_channels(gather_rows(lat, plan.input_rows), gather_rows(model_.gain_in, {rate_idx_}));
  x = linear(x, model_.embed_w, model_.embed_b);
  for (int li = 0; li < model_.config.layers; ++li) {
    const LayerParams& lp = model_.layers[static_cast<size_t>(li)];
    Tensor xn = layer_norm(x, lp.ln1_gain, lp.ln1_bias, kLayerNormEps);
    Tensor q = matmul(xn, lp.attn.wq);
    Tensor k = matmul(xn, lp.attn.wk);
    Tensor v = matmul(xn, lp.attn.wv);

    const LayerCache& cache = caches_[static_cast<size_t>(li)];
    const int width = model_.config.heads * model_.config.head_dim;
    const int total = cache.rows + hw;
    Tensor k_all({total, width});
    Tensor v_all({total, width});
    std::memcpy(k_all.data(), cache.k.data(), cache.k.size() * sizeof(double));
    std::memcpy(v_all.data(), cache.v.data(), cache.v.size() * sizeof(double));
    std::memcpy(k_all.data() + cache.k.size(), k.data(), static_cast<size_t>(hw) * width * sizeof(double));
    std::memcpy(v_all.data() + cache.v.size(), v.data(), static_cast<size_t>(hw) * width * sizeof(double));

    AttendGeometry geom;
    geom.window = model_.config.window;
    geom.q_coords = plan.coords;
    geom.q_orders = plan.orders;
    geom.k_coords = cache.coords;
    geom.k_coords.insert(geom.k_coords.end(), plan.coords.begin(), plan.coords.end());
    geom.k_orders = cache.orders;
    geom.k_orders.insert(geom.k_orders.end(), plan.orders.begin(), plan.orders.end());
    geom.self_key.resize(static_cast<size_t>(hw));
    for (int i = 0; i < hw; ++i) geom.self_key[static_cast<size_t>(i)] = cache.rows + i;
    geom.causal = true;
    geom.diag_visible = true;

    Tensor ctx = swa_attend(q, k_all, v_all, lp.bias_tables, geom, model_.config.heads,
                            model_.config.head_dim);
    append_cache(li, k.data(), v.data(), hw, plan.coords.data(), plan.orders.data(), frame_index);

    x = add(x, matmul(ctx, lp.attn.wo));
    Tensor xm = layer_norm(x, lp.ln2_gain, lp.ln2_bias, kLayerNormEps);
    x = add(x, linear(gelu(linear(xm, lp.mlp_w1, lp.mlp_b1)), lp.mlp_w2, lp.mlp_b2));
  }
  // Reference predictions are discarded; only the cached K/V matter.
}

void DecodeSession::begin_frame(int frame_index) {
  if (current_frame_ >= 0) throw SequencingError("begin_frame: frame already active");
  if (frame_index <= last_pushed_frame_)
    throw SequencingError("begin_frame: frame index must exceed pushed references");
  current_frame_ = frame_index;
  next_in_frame_ = 0;
  awaiting_commit_ = false;
  std::fill(committed_.begin(), committed_.end(), 0.0);
  trim(frame_index);
}

DecodeSession::StepOut DecodeSession::decode_step(const Coord3& pos) {
  if (current_frame_ < 0) throw SequencingError("decode_step: begin_frame() first");
  if (awaiting_commit_) throw SequencingError("decode_step: previous position not committed");
  const Dims3 one{1, dims_.height, dims_.width};
  const int64_t within = scan_index(Coord3{0, pos.y, pos.x}, one);
  if (pos.l != current_frame_ || within != next_in_frame_)
    throw SequencingError("decode_step: out-of-order position request");

  const int c = model_.config.channels;
  const int width = model_.config.heads * model_.config.head_dim;
  const int hw = dims_.height * dims_.width;

  // Input token: scan predecessor, or the hyperpixel directly above at row
  // starts (zero vector on the first row).
  Coord3 in_coord;
  Tensor x({1, c});
  if (pos.x == 0) {
    in_coord = Coord3{pos.l, pos.y - 1, 0};
    if (pos.y > 0) {
      const int64_t row = scan_index(Coord3{0, pos.y - 1, 0}, one);
      std::memcpy(x.data(), committed_.data() + row * c, static_cast<size_t>(c) * sizeof(double));
    }
  } else {
    in_coord = Coord3{pos.l, pos.y, pos.x - 1};
    const int64_t row = scan_index(Coord3{0, pos.y, pos.x - 1}, one);
    std::memcpy(x.data(), committed_.data() + row * c, static_cast<size_t>(c) * sizeof(double));
  }
  const int64_t order = static_cast<int64_t>(pos.l) * hw + within;

  x = scale_channels(x, gather_rows(model_.gain_in, {rate_idx_}));
  x = linear(x, model_.embed_w, model_.embed_b);
  for (int li = 0; li < model_.config.layers; ++li) {
    const LayerParams& lp = model_.layers[static_cast<size_t>(li)];
    Tensor xn = layer_norm(x, lp.ln1_gain, lp.ln1_bias, kLayerNormEps);
    Tensor q = matmul(xn, lp.attn.wq);
    Tensor k = matmul(xn, lp.attn.wk);
    Tensor v = matmul(xn, lp.attn.wv);
    append_cache(li, k.data(), v.data(), 1, &in_coord, &order, current_frame_);

    const LayerCache& cache = caches_[static_cast<size_t>(li)];
    Tensor k_all({cache.rows, width}, cache.k);
    Tensor v_all({cache.rows, width}, cache.v);

    AttendGeometry geom;
    geom.window = model_.config.window;
    geom.q_coords = {in_coord};
    geom.q_orders = {order};
    geom.k_coords = cache.coords;
    geom.k_orders = cache.orders;
    geom.self_key = {cache.rows - 1};
    geom.causal = true;
    geom.diag_visible = true;

    Tensor ctx = swa_attend(q, k_all, v_all, lp.bias_tables, geom, model_.config.heads,
                            model_.config.head_dim);
    x = add(x, matmul(ctx, lp.attn.wo));
    Tensor xm = layer_norm(x, lp.ln2_gain, lp.ln2_bias, kLayerNormEps);
    x = add(x, linear(gelu(linear(xm, lp.mlp_w1, lp.mlp_b1)), lp.mlp_w2, lp.mlp_b2));
  }
  x = layer_norm(x, model_.final_gain, model_.final_bias, kLayerNormEps);

  Tensor raw = linear(x, model_.head_w, model_.head_b);
  Tensor mu = scale_channels(slice_cols(raw, 0, c), gather_rows(model_.gain_mu, {rate_idx_}));
  Tensor sg = affine(softplus(scale_channels(slice_cols(raw, c, 2 * c), gather_rows(model_.gain_sigma, {rate_idx_}))),
                     1.0, model_.config.scale_min);
  Tensor lr = affine(tanh_op(scale_channels(slice_cols(raw, 2 * c, 3 * c), gather_rows(model_.gain_lrp, {rate_idx_}))),
                     0.5, 0.0);

  awaiting_commit_ = true;
  StepOut out;
  out.mu.assign(mu.data(), mu.data() + c);
  out.sigma.assign(sg.data(), sg.data() + c);
  out.lrp.assign(lr.data(), lr.data() + c);
  return out;
}

void DecodeSession::commit(const Coord3& pos, const double* values) {
  if (!awaiting_commit_) throw SequencingError("commit: no pending position");
  const Dims3 one{1, dims_.height, dims_.width};
  const int64_t within = scan_index(Coord3{0, pos.y, pos.x}, one);
  if (pos.l != current_frame_ || within != next_in_frame_)
    throw SequencingError("commit: position mismatch");
  const int c = model_.config.channels;
  std::memcpy(committed_.data() + within * c, values, static_cast<size_t>(c) * sizeof(double));
  next_in_frame_++;
  awaiting_commit_ = false;
  if (next_in_frame_ == static_cast<int64_t>(dims_.height) * dims_.width) {
    // Frame complete; its K/V rows stay cached so it can serve as reference.
    last_pushed_frame_ = current_frame_;
    current_frame_ = -1;
  }
}

// ---- serialization ----

namespace {

constexpr uint32_t kModelVersion = 1;

void put_tensor(std::vector<uint8_t>& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u32(out, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32(out, static_cast<uint32_t>(t.dim(i)));
  for (int64_t i = 0; i < t.numel(); ++i) put_f64(out, t.data()[i]);
}

}  // namespace

std::vector<uint8_t> serialize_model(const EntropyModel& m) {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'S', 'W', 'A', 'M'});
  put_u32(out, kModelVersion);
  put_u32(out, static_cast<uint32_t>(m.config.channels));
  put_u32(out, static_cast<uint32_t>(m.config.heads));
  put_u32(out, static_cast<uint32_t>(m.config.head_dim));
  put_u32(out, static_cast<uint32_t>(m.config.layers));
  put_u32(out, static_cast<uint32_t>(m.config.window.lw));
  put_u32(out, static_cast<uint32_t>(m.config.window.hw));
  put_u32(out, static_cast<uint32_t>(m.config.window.ww));
  put_u32(out, static_cast<uint32_t>(m.config.mlp_ratio));
  put_u32(out, static_cast<uint32_t>(m.config.num_rate_points));
  put_f64(out, m.config.scale_min);

  uint32_t count = 0;
  m.for_each_param([&count](const std::string&, const Tensor&) { ++count; });
  put_u32(out, count);
  m.for_each_param([&out](const std::string& name, const Tensor& t) { put_tensor(out, name, t); });
  return out;
}

EntropyModel deserialize_model(const std::vector<uint8_t>& bytes) {
  WireReader r(bytes);
  if (r.str(4) != "SWAM") throw DecodeError("model file: bad magic");
  if (r.u32() != kModelVersion) throw DecodeError("model file: unsupported version");
  ModelConfig cfg;
  cfg.channels = static_cast<int>(r.u32());
  cfg.heads = static_cast<int>(r.u32());
  cfg.head_dim = static_cast<int>(r.u32());
  cfg.layers = static_cast<int>(r.u32());
  cfg.window.lw = static_cast<int>(r.u32());
  cfg.window.hw = static_cast<int>(r.u32());
  cfg.window.ww = static_cast<int>(r.u32());
  cfg.mlp_ratio = static_cast<int>(r.u32());
  cfg.num_rate_points = static_cast<int>(r.u32());
  cfg.scale_min = r.f64();
  cfg.validate();

  EntropyModel m = EntropyModel::init(cfg, 0);
  const uint32_t count = r.u32();
  uint32_t expected = 0;
  m.for_each_param([&expected](const std::string&, const Tensor&) { ++expected; });
  if (count != expected) throw DecodeError("model file: tensor count mismatch");

  m.for_each_param([&r](const std::string& name, Tensor& t) {
    const uint32_t len = r.u32();
    if (r.str(len) != name) throw DecodeError("model file: tensor order mismatch at " + name);
    const uint32_t rank = r.u32();
    if (rank != static_cast<uint32_t>(t.rank())) throw DecodeError("model file: rank mismatch at " + name);
    for (int i = 0; i < t.rank(); ++i)
      if (r.u32() != static_cast<uint32_t>(t.dim(i)))
        throw DecodeError("model file: shape mismatch at " + name);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = r.f64();
  });
  if (r.remaining() != 0) throw DecodeError("model file: trailing bytes");
  return m;
}

void save_model(const EntropyModel& m, const std::string& path) {
  write_file_atomic(path, serialize_model(m));
}

EntropyModel load_model(const std::string& path) { return deserialize_model(read_file_bytes(path)); }

uint64_t model_hash(const EntropyModel& m) {
  const std::vector<uint8_t> bytes = serialize_model(m);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace swa
