#include "swa/coder.hpp"

#include <algorithm>
#include <cmath>

#include "swa/tensor.hpp"

namespace swa {

namespace {

constexpr uint32_t kTopValue = 1u << 24;
constexpr double kLog2E = 1.4426950408889634074;

}  // namespace

double quantize_fixed16(double v) { return round_half_even(v * 65536.0) / 65536.0; }

CdfTable build_cdf(double mu, double sigma, double scale_min,
                   int support_min, int support_max, int precision) {
  if (sigma < scale_min) throw ContractError("build_cdf: sigma below scale_min");
  if (precision < 8 || precision > 16) throw ContractError("build_cdf: precision out of range");
  if (support_max <= support_min) throw ContractError("build_cdf: empty support");

  mu = quantize_fixed16(mu);
  sigma = quantize_fixed16(sigma);
  if (sigma < 1.0 / 65536.0) sigma = 1.0 / 65536.0;

  const int k = support_max - support_min + 1;
  const uint32_t total = 1u << precision;
  if (static_cast<uint32_t>(k) > total) throw ContractError("build_cdf: support exceeds total mass");

  // Interval masses with the tails folded into the edge symbols.
  std::vector<double> target(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const int s = support_min + i;
    target[static_cast<size_t>(i)] =
        gaussian_interval_mass(s, mu, sigma, support_min, support_max) * total;
  }

  // Floor rule: every symbol keeps at least one count; the remainder is
  // settled by largest-remainder adjustment, ties to the lower symbol.
  std::vector<int64_t> counts(static_cast<size_t>(k));
  int64_t sum = 0;
  for (int i = 0; i < k; ++i) {
    counts[static_cast<size_t>(i)] = std::max<int64_t>(1, static_cast<int64_t>(std::floor(target[static_cast<size_t>(i)])));
    sum += counts[static_cast<size_t>(i)];
  }
  while (sum < static_cast<int64_t>(total)) {
    int best = 0;
    double best_gap = -1e300;
    for (int i = 0; i < k; ++i) {
      const double gap = target[static_cast<size_t>(i)] - static_cast<double>(counts[static_cast<size_t>(i)]);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    counts[static_cast<size_t>(best)]++;
    sum++;
  }
  while (sum > static_cast<int64_t>(total)) {
    int best = -1;
    double best_gap = 1e300;
    for (int i = 0; i < k; ++i) {
      if (counts[static_cast<size_t>(i)] <= 1) continue;
      const double gap = target[static_cast<size_t>(i)] - static_cast<double>(counts[static_cast<size_t>(i)]);
      if (gap < best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best < 0) throw ContractError("build_cdf: cannot satisfy total mass");
    counts[static_cast<size_t>(best)]--;
    sum--;
  }

  CdfTable t;
  t.support_min = support_min;
  t.support_max = support_max;
  t.precision = precision;
  t.cum.resize(static_cast<size_t>(k) + 1);
  t.cum[0] = 0;
  for (int i = 0; i < k; ++i)
    t.cum[static_cast<size_t>(i) + 1] = t.cum[static_cast<size_t>(i)] + static_cast<uint32_t>(counts[static_cast<size_t>(i)]);
  return t;
}

double table_bits(const std::vector<int>& symbols, const std::vector<CdfTable>& tables) {
  if (symbols.size() != tables.size()) throw ContractError("table_bits: size mismatch");
  double bits = 0.0;
  for (size_t i = 0; i < symbols.size(); ++i) {
    const CdfTable& t = tables[i];
    const uint32_t f = t.freq(symbols[i]);
    bits += (t.precision - std::log2(static_cast<double>(f)));
  }
  return bits;
}

double estimate_rate_bits(const std::vector<int>& symbols, const std::vector<double>& mu,
                          const std::vector<double>& sigma, int support_min, int support_max) {
  if (symbols.size() != mu.size() || mu.size() != sigma.size())
    throw ContractError("estimate_rate_bits: size mismatch");
  double bits = 0.0;
  for (size_t i = 0; i < symbols.size(); ++i) {
    double p = gaussian_interval_mass(symbols[i], mu[i], sigma[i], support_min, support_max);
    if (p < 1e-300) p = 1e-300;
    bits -= std::log(p) * kLog2E;
  }
  return bits;
}

void RangeEncoder::shift_low() {
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<uint8_t>(temp + static_cast<uint8_t>(low_ >> 32)));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<uint8_t>(static_cast<uint32_t>(low_) >> 24);
  }
  ++cache_size_;
  low_ = static_cast<uint64_t>(static_cast<uint32_t>(low_) << 8);
}

void RangeEncoder::encode(int symbol, const CdfTable& table) {
  if (finished_) throw ContractError("range encoder: already finished");
  const int idx = symbol - table.support_min;
  if (idx < 0 || idx >= table.symbol_count())
    throw ContractError("range encoder: symbol outside support");
  any_symbol_ = true;
  const uint32_t start = table.cum[static_cast<size_t>(idx)];
  const uint32_t freq = table.cum[static_cast<size_t>(idx) + 1] - start;
  const uint32_t r = range_ >> table.precision;
  low_ += static_cast<uint64_t>(r) * start;
  if (idx == table.symbol_count() - 1)
    range_ -= r * start;  // truncation slack goes to the top symbol
  else
    range_ = r * freq;
  while (range_ < kTopValue) {
    shift_low();
    range_ <<= 8;
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  if (finished_) throw ContractError("range encoder: already finished");
  finished_ = true;
  if (!any_symbol_) return {};
  // Move low to the smallest 2^24-aligned value inside the interval so the
  // tail bytes are zeros, then flush and drop them (the decoder pads zeros).
  const uint64_t step = kTopValue;
  const uint64_t v = ((low_ + step - 1) / step) * step;
  low_ += v - low_;
  for (int i = 0; i < 5; ++i) shift_low();
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
  next_byte();  // the construction's leading byte carries no payload
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() { return pos_ < size_ ? data_[pos_++] : 0; }

int RangeDecoder::decode(const CdfTable& table) {
  const uint32_t r = range_ >> table.precision;
  const uint32_t total = 1u << table.precision;
  uint32_t threshold = code_ / r;
  if (threshold > total - 1) threshold = total - 1;

  const auto it = std::upper_bound(table.cum.begin(), table.cum.end(), threshold);
  const int idx = static_cast<int>(it - table.cum.begin()) - 1;

  const uint32_t start = table.cum[static_cast<size_t>(idx)];
  const uint32_t freq = table.cum[static_cast<size_t>(idx) + 1] - start;
  code_ -= start * r;
  if (idx == table.symbol_count() - 1)
    range_ -= start * r;
  else
    range_ = r * freq;
  while (range_ < kTopValue) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return table.support_min + idx;
}

}  // namespace swa
