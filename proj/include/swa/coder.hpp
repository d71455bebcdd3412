#pragma once

#include <cstdint>
#include <vector>

#include "swa/errors.hpp"

namespace swa {

// Default integer symbol support; declared in the bitstream header (v1
// streams always use this range, signalled by flags == 0).
inline constexpr int kSupportMin = -64;
inline constexpr int kSupportMax = 63;
inline constexpr int kCdfPrecision = 16;  // total mass 2^16

// (mu, sigma) are snapped to 16 fractional bits before any table math, so
// encoder and decoder build identical tables from identical model outputs.
double quantize_fixed16(double v);

// Cumulative counts over [support_min, support_max]: cum[0] = 0 strictly
// increasing to cum[K] = 2^precision. Every symbol keeps at least one count.
struct CdfTable {
  int support_min = kSupportMin;
  int support_max = kSupportMax;
  int precision = kCdfPrecision;
  std::vector<uint32_t> cum;  // size K+1

  int symbol_count() const { return support_max - support_min + 1; }
  uint32_t freq(int sym) const {
    const int i = sym - support_min;
    return cum[static_cast<size_t>(i) + 1] - cum[static_cast<size_t>(i)];
  }
};

// Gaussian-conditional table: pmf(s) proportional to
// Phi((s+0.5-mu)/sigma) - Phi((s-0.5-mu)/sigma), tails folded into the edge
// symbols, largest-remainder rounding (ties to the lower symbol).
CdfTable build_cdf(double mu, double sigma, double scale_min,
                   int support_min = kSupportMin, int support_max = kSupportMax,
                   int precision = kCdfPrecision);

// Exact cost of coding `symbols` with these tables: sum of
// -log2(freq / 2^precision). The range coder's output is within a small
// flush tail of this.
double table_bits(const std::vector<int>& symbols, const std::vector<CdfTable>& tables);

// Continuous differentiable analogue lives in tensor.hpp (gaussian_bits);
// this is the plain-double version for stats and evaluation.
double estimate_rate_bits(const std::vector<int>& symbols, const std::vector<double>& mu,
                          const std::vector<double>& sigma,
                          int support_min = kSupportMin, int support_max = kSupportMax);

// Carry-less byte-oriented range coder, 32-bit state. The leading zero byte
// conventional for this construction is omitted, and the flush emits the
// shortest value that still pins the interval, so tiny payloads stay tiny.
class RangeEncoder {
 public:
  void encode(int symbol, const CdfTable& table);
  std::vector<uint8_t> finish();
  bool empty() const { return !any_symbol_; }

 private:
  void shift_low();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  int64_t cache_size_ = 1;
  bool first_byte_pending_ = true;
  bool any_symbol_ = false;
  bool finished_ = false;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(const uint8_t* data, size_t size);
  int decode(const CdfTable& table);

 private:
  uint8_t next_byte();

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
};

}  // namespace swa
