#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "swa/attention.hpp"
#include "swa/geometry.hpp"
#include "swa/tensor.hpp"

namespace swa {

// Epsilon used by every normalization layer in the model.
inline constexpr double kLayerNormEps = 1e-6;

struct ModelConfig {
  int channels = 64;
  int heads = 4;
  int head_dim = 16;
  int layers = 4;
  WindowSpec window{2, 3, 3};
  int mlp_ratio = 4;
  int num_rate_points = 4;
  double scale_min = 0.02;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  AttentionWeights attn;
  Tensor bias_tables;  // [heads x window.table_size()]
  Tensor ln2_gain, ln2_bias;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Decoder-only transformer predicting per-hyperpixel Gaussian parameters
// (mu, sigma) and a latent residual correction, with channel-wise gains per
// rate point at the input and at each of the three outputs.
struct EntropyModel {
  ModelConfig config;
  Tensor embed_w, embed_b;
  std::vector<LayerParams> layers;
  Tensor final_gain, final_bias;
  Tensor head_w, head_b;  // C x 3C: [mu | sigma_raw | lrp_raw]
  Tensor gain_in, gain_mu, gain_sigma, gain_lrp;  // each [rate_points x C]

  static EntropyModel init(const ModelConfig& cfg, uint64_t seed);

  // Fixed enumeration order; also the serialization order.
  void for_each_param(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  void watch_all(Tape& tape);
  int64_t param_count() const;
};

// One token slot per hyperpixel of the covered frames, in scan order.
// Slot t predicts position `orders[t]`; its input token is the committed
// latent at `input_rows[t]` (-1 for the zero vector at row starts of row 0)
// and carries coordinate `coords[t]` for bias lookup and masking.
struct SlotPlan {
  std::vector<int> input_rows;
  std::vector<Coord3> coords;
  std::vector<int64_t> orders;
};

SlotPlan build_slot_plan(int frame_begin, int frame_end, const Dims3& dims);

// Per-frame predicted fields, each [H*W x C] in row scan order.
struct FrameFields {
  Tensor mu;
  Tensor sigma;  // >= scale_min everywhere
  Tensor lrp;    // in (-0.5, 0.5)
};

// Teacher-forced pass over every frame of `latents` ([L*H*W x C], committed
// values) with full causal masking. Reference-frame slots act as keys and
// values only; each frame's fields are returned. Differentiable end-to-end
// when inputs or parameters are on a tape.
std::vector<FrameFields> forward_teacher_forced(const EntropyModel& m, const Tensor& latents,
                                                const Dims3& dims, int rate_idx,
                                                int block = 16, SwaStats* stats = nullptr);

// refined = y_hat + r. The correction never re-enters the coding loop.
Tensor apply_lrp(const Tensor& y_hat, const Tensor& lrp);

// Incremental decoding state: per-layer key/value rows for reference frames
// inside the temporal window plus the current frame's committed prefix.
// Cache-assisted decoding is bit-identical to recomputation because keys
// outside the window are skipped exactly, never down-weighted.
class DecodeSession {
 public:
  struct StepOut {
    std::vector<double> mu, sigma, lrp;
  };

  // `trim_cache` keeps only frames within window.lw of the frame being
  // processed; disabling it is for the cache-trim parity test.
  DecodeSession(const EntropyModel& m, const Dims3& dims, int rate_idx, bool trim_cache = true);

  // Feeds one committed reference frame ([H*W x C] row scan order) through
  // the model, caching its per-layer keys/values. Frames must arrive in
  // increasing order.
  void push_reference_frame(const std::vector<double>& latents, int frame_index);

  void begin_frame(int frame_index);

  // Distribution for exactly the next position in scan order.
  StepOut decode_step(const Coord3& pos);

  // Commits the coded latent for the position returned by the last step.
  void commit(const Coord3& pos, const double* values);

  const EntropyModel& model() const { return model_; }

 private:
  struct LayerCache {
    std::vector<double> k, v;  // rows of width heads*head_dim
    std::vector<Coord3> coords;
    std::vector<int64_t> orders;
    std::vector<int> frame_of;
    int rows = 0;
  };

  void trim(int active_frame);
  void append_cache(int layer, const double* k, const double* v, int rows,
                    const Coord3* coords, const int64_t* orders, int frame_index);

  const EntropyModel& model_;
  Dims3 dims_;
  int rate_idx_;
  bool trim_cache_;
  std::vector<LayerCache> caches_;
  std::vector<double> committed_;  // current frame, H*W*C
  int current_frame_ = -1;
  int last_pushed_frame_ = -1;
  int64_t next_in_frame_ = 0;  // next scan position within the current frame
  bool awaiting_commit_ = false;
};

// ---- model file (".swam") ----

std::vector<uint8_t> serialize_model(const EntropyModel& m);
EntropyModel deserialize_model(const std::vector<uint8_t>& bytes);
void save_model(const EntropyModel& m, const std::string& path);
EntropyModel load_model(const std::string& path);

// FNV-1a over the serialized model; embedded in bitstream headers so a
// decoder can refuse streams produced by a different model.
uint64_t model_hash(const EntropyModel& m);

}  // namespace swa
