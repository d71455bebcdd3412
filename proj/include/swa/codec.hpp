#pragma once

#include <cstdint>
#include <vector>

#include "swa/bitstream.hpp"
#include "swa/model.hpp"

namespace swa {

struct FrameStat {
  int frame = 0;
  int64_t payload_bytes = 0;
  double actual_bits = 0.0;     // payload_bytes * 8
  double table_bits = 0.0;      // exact cost under the quantized tables
  double estimate_bits = 0.0;   // continuous Gaussian estimate
  double bits_per_latent = 0.0;
};

struct EncodeResult {
  Bitstream stream;
  std::vector<double> committed;  // quantized latents the coder committed, L*H*W*C
  std::vector<FrameStat> stats;
};

struct DecodeResult {
  Dims3 dims;
  int channels = 0;
  int rate_idx = 0;
  int ref_frames = 0;
  std::vector<double> latents;  // quantized, L*H*W*C
  std::vector<double> refined;  // latents + LRP correction
};

// Encodes a latent volume (raw or pre-quantized values, L*H*W*C, channels
// innermost). Values are quantized round-half-even, clamped to the declared
// support, and committed; the stream decodes back to exactly the committed
// volume. When coding frame l at most `k` previous committed frames are used
// as context, recomputed from the restart point so encoder and decoder agree
// bit-exactly.
EncodeResult encode_gop(const EntropyModel& m, const std::vector<double>& latents,
                        const Dims3& dims, int k, int rate_idx);

// Inverse of encode_gop. Refuses streams whose model hash does not match.
DecodeResult decode_gop(const EntropyModel& m, const Bitstream& stream);

}  // namespace swa
