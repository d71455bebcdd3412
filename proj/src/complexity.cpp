#include "swa/complexity.hpp"

#include <sstream>

namespace swa {

MacBreakdown patchless_kernel_macs(const Dims3& dims, const WindowSpec& window, int channels,
                                   int heads, int head_dim, bool causal, bool diag_visible) {
  const int64_t t = dims.tokens();
  const int64_t width = static_cast<int64_t>(heads) * head_dim;
  int64_t pairs = diag_visible ? t : 0;
  for (int64_t i = 0; i < t; ++i)
    pairs += visible_count(coord_of(i, dims), dims, window, causal);

  MacBreakdown b;
  b.projections = 3 * t * channels * width + t * width * channels;
  b.attention_scores = pairs * width;
  b.attention_values = pairs * width;
  return b;
}

MacBreakdown patchless_model_macs(const ModelConfig& config, const Dims3& dims) {
  config.validate();
  const SlotPlan plan = build_slot_plan(0, dims.frames, dims);
  const int64_t t = static_cast<int64_t>(plan.orders.size());
  const int64_t c = config.channels;

  // Slot-level pair count: window on input coordinates, inclusive causal
  // order (a slot always sees its own token).
  int64_t pairs = 0;
  for (int64_t q = 0; q < t; ++q)
    for (int64_t k = 0; k < t; ++k) {
      const Coord3& cq = plan.coords[static_cast<size_t>(q)];
      const Coord3& ck = plan.coords[static_cast<size_t>(k)];
      if (!config.window.contains(ck.l - cq.l, ck.y - cq.y, ck.x - cq.x)) continue;
      if (k == q || plan.orders[static_cast<size_t>(k)] < plan.orders[static_cast<size_t>(q)]) pairs++;
    }

  MacBreakdown b;
  b.projections = t * c * c;                       // embed
  b.projections += config.layers * 4 * t * c * c;  // per-layer q/k/v/o
  b.projections += t * c * 3 * c;                  // three-field head
  b.attention_scores = static_cast<int64_t>(config.layers) * pairs * c;
  b.attention_values = b.attention_scores;
  b.mlp = static_cast<int64_t>(config.layers) * 2 * t * c * (static_cast<int64_t>(config.mlp_ratio) * c);
  return b;
}

namespace {

// Interior visible-key count for one patchless query with complete causal
// history: full windows in the lw reference frames plus the causal half of
// the current frame's window, self included.
int64_t patchless_interior_visible(const WindowSpec& w) {
  const int64_t plane = static_cast<int64_t>(2 * w.hw + 1) * (2 * w.ww + 1);
  return static_cast<int64_t>(w.lw) * plane + static_cast<int64_t>(w.hw) * (2 * w.ww + 1) + w.ww + 1;
}

}  // namespace

ComponentCosts count_macs(const SchemeSpec& scheme, const ModelConfig& config,
                          int height, int width, int downsample) {
  config.validate();
  const double c = static_cast<double>(config.channels);
  const double hw = static_cast<double>(height) * width;
  const double pixels = hw * downsample * downsample;
  ComponentCosts out;

  if (scheme.kind == SchemeSpec::Kind::kPatchless) {
    // One new frame of tokens per coded frame; reference K/V are cached.
    const double tokens = hw;
    const double vis = static_cast<double>(patchless_interior_visible(config.window));
    out.projections = tokens * (c * c /*embed*/ + config.layers * 4.0 * c * c + 3.0 * c * c /*head*/);
    out.attention_scores = tokens * config.layers * vis * c;
    out.attention_values = out.attention_scores;
    out.mlp = tokens * config.layers * 2.0 * config.mlp_ratio * c * c;
  } else {
    const PatchSchemeSpec& p = scheme.patch;
    const double win_tokens = static_cast<double>(p.context_window) * p.context_window;
    const double joint_window = p.ref_frames * win_tokens;  // both refs in one sequence
    const double enc_instances = p.ref_frames * hw * p.overlap_factor();
    // Bi-directional encoder: full attention over the joint window.
    out.projections = enc_instances * p.encoder_layers * 4.0 * c * c;
    out.attention_scores = enc_instances * p.encoder_layers * joint_window * c;
    out.attention_values = out.attention_scores;
    out.mlp = enc_instances * p.encoder_layers * 2.0 * config.mlp_ratio * c * c;

    // Autoregressive decoder over patch x patch patches: causal
    // self-attention plus cross-attention into the patch's window memory.
    const double dec_tokens = hw;
    const double self_vis = (static_cast<double>(p.patch) * p.patch + 1.0) / 2.0;  // causal average, self included
    out.projections += dec_tokens * p.decoder_layers * 4.0 * c * c;
    out.attention_scores += dec_tokens * p.decoder_layers * self_vis * c;
    out.attention_values += dec_tokens * p.decoder_layers * self_vis * c;
    out.mlp += dec_tokens * p.decoder_layers * 2.0 * config.mlp_ratio * c * c;

    const double patches = hw / (static_cast<double>(p.patch) * p.patch);
    const double memory_tokens = patches * joint_window;
    out.projections += p.decoder_layers * (dec_tokens * 2.0 * c * c /*q, out*/ +
                                           memory_tokens * 2.0 * c * c /*k, v*/);
    out.attention_scores += dec_tokens * p.decoder_layers * joint_window * c;
    out.attention_values += dec_tokens * p.decoder_layers * joint_window * c;

    out.projections += dec_tokens * 4.0 * c * c;  // embed + head
  }

  out.projections /= pixels;
  out.attention_scores /= pixels;
  out.attention_values /= pixels;
  out.mlp /= pixels;
  return out;
}

int64_t reference_tokens_processed(const SchemeSpec& scheme, int height, int width) {
  const int64_t hw = static_cast<int64_t>(height) * width;
  if (scheme.kind == SchemeSpec::Kind::kPatchless) {
    // Each reference hyperpixel's K/V are computed once and cached.
    return 2 * hw;
  }
  return static_cast<int64_t>(scheme.patch.ref_frames) * hw * scheme.patch.overlap_factor();
}

CompareReport compare_schemes(const ModelConfig& config, const PatchSchemeSpec& patch,
                              int height, int width, int downsample) {
  SchemeSpec patchless{SchemeSpec::Kind::kPatchless, patch};
  SchemeSpec patch_based{SchemeSpec::Kind::kPatchBased, patch};

  const ComponentCosts a = count_macs(patchless, config, height, width, downsample);
  const ComponentCosts b = count_macs(patch_based, config, height, width, downsample);

  CompareReport report;
  auto push = [&report](const std::string& scheme, const std::string& comp, double macs,
                        double base) {
    CompareRow row;
    row.scheme = scheme;
    row.component = comp;
    row.macs_per_px = macs;
    row.ratio_vs_patchless = base > 0.0 ? macs / base : 1.0;
    report.rows.push_back(row);
  };
  push("patchless", "projections", a.projections, a.projections);
  push("patchless", "attention_scores", a.attention_scores, a.attention_scores);
  push("patchless", "attention_values", a.attention_values, a.attention_values);
  push("patchless", "mlp", a.mlp, a.mlp);
  push("patchless", "total", a.total(), a.total());
  push("patch_based", "projections", b.projections, a.projections);
  push("patch_based", "attention_scores", b.attention_scores, a.attention_scores);
  push("patch_based", "attention_values", b.attention_values, a.attention_values);
  push("patch_based", "mlp", b.mlp, a.mlp);
  push("patch_based", "total", b.total(), a.total());

  const double refs_patchless = static_cast<double>(
      static_cast<int64_t>(patch.ref_frames) * height * width);
  const double refs_patch = static_cast<double>(reference_tokens_processed(patch_based, height, width));
  CompareRow ref_row;
  ref_row.scheme = "patch_based";
  ref_row.component = "reference_token_processing";
  ref_row.has_macs = false;
  ref_row.ratio_vs_patchless = refs_patch / refs_patchless;
  report.rows.push_back(ref_row);

  report.ref_token_ratio = ref_row.ratio_vs_patchless;
  report.total_ratio = b.total() / a.total();
  return report;
}

std::string compare_csv(const CompareReport& report) {
  std::ostringstream out;
  out << "scheme,component,macs_per_px,ratio_vs_patchless\n";
  out.precision(10);
  for (const CompareRow& row : report.rows) {
    out << row.scheme << "," << row.component << ",";
    if (row.has_macs) out << row.macs_per_px;
    out << "," << row.ratio_vs_patchless << "\n";
  }
  return out.str();
}

ModelConfig comparison_model_config() {
  ModelConfig cfg;
  cfg.channels = 768;
  cfg.heads = 12;
  cfg.head_dim = 64;
  cfg.layers = 20;
  cfg.window = WindowSpec{2, 3, 3};
  cfg.mlp_ratio = 4;
  cfg.num_rate_points = 4;
  cfg.scale_min = 0.02;
  return cfg;
}

}  // namespace swa
