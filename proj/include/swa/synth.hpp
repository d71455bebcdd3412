#pragma once

#include <cstdint>
#include <vector>

#include "swa/geometry.hpp"

namespace swa {

// Synthetic latent clips: per-channel spatial AR(1) fields, globally
// translated by (dy, dx) per frame with wrap-around, plus i.i.d. innovation.
// The translation gives genuine temporal predictability for the temporal
// window to exploit.
struct SynthConfig {
  uint64_t seed = 1;
  double rho = 0.9;          // spatial AR(1) coefficient, in [0, 1)
  int dy = 0;                // per-frame translation
  int dx = 1;
  double innovation = 0.15;  // noise level mixed in per frame, in [0, 1]
  double amplitude = 3.0;    // marginal standard deviation of the field
  Dims3 dims{3, 8, 8};
  int channels = 8;
};

// Returns L*H*W*C values, channels innermost. Deterministic in the seed.
std::vector<double> synth_clip(const SynthConfig& cfg);

}  // namespace swa
