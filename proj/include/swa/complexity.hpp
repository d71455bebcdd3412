#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swa/model.hpp"

namespace swa {

// MAC counts split by component. Only matmul-equivalent work is counted
// (projections including embed/head, score dots, weighted value sums, MLP);
// softmax, normalization and elementwise work are excluded on both the
// analytic and the instrumented side.
struct MacBreakdown {
  int64_t projections = 0;
  int64_t attention_scores = 0;
  int64_t attention_values = 0;
  int64_t mlp = 0;

  int64_t total() const { return projections + attention_scores + attention_values + mlp; }
};

// Exact counts for one blocked_swa call on a volume; equals the kernel's
// instrumented counters integer-for-integer (border-exact).
MacBreakdown patchless_kernel_macs(const Dims3& dims, const WindowSpec& window, int channels,
                                   int heads, int head_dim, bool causal, bool diag_visible);

// Exact counts for one teacher-forced model pass over a volume, slot
// geometry included; equals forward_teacher_forced's instrumentation.
MacBreakdown patchless_model_macs(const ModelConfig& config, const Dims3& dims);

// Overlapping-window patch baseline: a bi-directional temporal encoder over
// context_window x context_window windows (stride `stride`) drawn from
// `ref_frames` reference frames, plus an autoregressive decoder over
// patch x patch patches with cross-attention into its window's encoder
// output. Layer split and widths follow the comparison config; every
// modeling assumption is a named field so the numbers can be re-derived.
struct PatchSchemeSpec {
  int patch = 8;
  int context_window = 16;
  int stride = 8;
  int ref_frames = 2;
  int encoder_layers = 6;
  int decoder_layers = 12;

  // Interior hyperpixels fall into (context_window/stride)^2 windows.
  int overlap_factor() const {
    return (context_window / stride) * (context_window / stride);
  }
};

struct SchemeSpec {
  enum class Kind { kPatchless, kPatchBased };
  Kind kind = Kind::kPatchless;
  PatchSchemeSpec patch;  // used when kind == kPatchBased
};

// Steady-state per-frame cost of coding one H x W latent frame, interior
// accounting (border effects ignored), expressed in MACs per source pixel
// given the transform's spatial downsampling factor.
struct ComponentCosts {
  double projections = 0.0;
  double attention_scores = 0.0;
  double attention_values = 0.0;
  double mlp = 0.0;

  double total() const { return projections + attention_scores + attention_values + mlp; }
};

ComponentCosts count_macs(const SchemeSpec& scheme, const ModelConfig& config,
                          int height, int width, int downsample);

// Reference-token processing per coded frame (token instances through the
// temporal context path). The overlapping-window scheme touches each
// interior reference hyperpixel overlap_factor() times; the patchless
// scheme touches it once.
int64_t reference_tokens_processed(const SchemeSpec& scheme, int height, int width);

struct CompareRow {
  std::string scheme;
  std::string component;
  double macs_per_px = 0.0;
  bool has_macs = true;
  double ratio_vs_patchless = 0.0;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  double ref_token_ratio = 0.0;
  double total_ratio = 0.0;  // patch-based total / patchless total
};

CompareReport compare_schemes(const ModelConfig& config, const PatchSchemeSpec& patch,
                              int height, int width, int downsample);

// RFC-4180 CSV: scheme,component,macs_per_px,ratio_vs_patchless
std::string compare_csv(const CompareReport& report);

// The paper-scale comparison configuration: 20 layers at width 768 with the
// masked 5x7x7 window against the overlapping-window baseline above, with a
// x16 spatial downsampling between latent and pixel domains.
ModelConfig comparison_model_config();
inline constexpr int kComparisonDownsample = 16;

}  // namespace swa
