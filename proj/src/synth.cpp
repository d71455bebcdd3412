#include "swa/synth.hpp"

#include <cmath>

#include "swa/errors.hpp"
#include "swa/rng.hpp"

namespace swa {

namespace {

// In-place separable AR(1) smoothing along rows then columns; the
// sqrt(1-rho^2) mixing keeps the marginal variance at 1.
void smooth_ar1(std::vector<double>& field, int h, int w, double rho) {
  const double mix = std::sqrt(1.0 - rho * rho);
  for (int y = 0; y < h; ++y)
    for (int x = 1; x < w; ++x)
      field[static_cast<size_t>(y) * w + x] =
          rho * field[static_cast<size_t>(y) * w + x - 1] + mix * field[static_cast<size_t>(y) * w + x];
  for (int x = 0; x < w; ++x)
    for (int y = 1; y < h; ++y)
      field[static_cast<size_t>(y) * w + x] =
          rho * field[static_cast<size_t>(y - 1) * w + x] + mix * field[static_cast<size_t>(y) * w + x];
}

}  // namespace

std::vector<double> synth_clip(const SynthConfig& cfg) {
  if (cfg.rho < 0.0 || cfg.rho >= 1.0) throw ContractError("synth: rho must be in [0, 1)");
  if (cfg.innovation < 0.0 || cfg.innovation > 1.0)
    throw ContractError("synth: innovation must be in [0, 1]");
  Rng rng(cfg.seed);
  const int h = cfg.dims.height, w = cfg.dims.width;
  const int hw = h * w;
  const double keep = std::sqrt(1.0 - cfg.innovation * cfg.innovation);

  std::vector<double> clip(static_cast<size_t>(cfg.dims.tokens()) * cfg.channels);
  std::vector<double> field(static_cast<size_t>(hw));
  std::vector<double> next(static_cast<size_t>(hw));
  for (int c = 0; c < cfg.channels; ++c) {
    for (int i = 0; i < hw; ++i) field[static_cast<size_t>(i)] = rng.normal();
    smooth_ar1(field, h, w, cfg.rho);
    for (int l = 0; l < cfg.dims.frames; ++l) {
      if (l > 0) {
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const int sy = ((y - cfg.dy) % h + h) % h;
            const int sx = ((x - cfg.dx) % w + w) % w;
            next[static_cast<size_t>(y) * w + x] =
                keep * field[static_cast<size_t>(sy) * w + sx] + cfg.innovation * rng.normal();
          }
        field.swap(next);
      }
      for (int i = 0; i < hw; ++i)
        clip[(static_cast<size_t>(l) * hw + i) * cfg.channels + c] =
            cfg.amplitude * field[static_cast<size_t>(i)];
    }
  }
  return clip;
}

}  // namespace swa
