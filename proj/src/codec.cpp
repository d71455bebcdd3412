#include "swa/codec.hpp"

#include <algorithm>
#include <cmath>

#include "swa/coder.hpp"

namespace swa {

namespace {

double clamp_symbol(double v) {
  return std::min(static_cast<double>(kSupportMax), std::max(static_cast<double>(kSupportMin), v));
}

// Rebuilds the decode context for frame l from the committed volume:
// references [l-k, l) pushed in order, then the frame opened for stepping.
DecodeSession make_frame_session(const EntropyModel& m, const std::vector<double>& committed,
                                 const Dims3& dims, int l, int k, int rate_idx) {
  DecodeSession session(m, dims, rate_idx);
  const int hw = dims.height * dims.width;
  const int c = m.config.channels;
  const int first_ref = std::max(0, l - k);
  for (int f = first_ref; f < l; ++f) {
    std::vector<double> frame(committed.begin() + static_cast<int64_t>(f) * hw * c,
                              committed.begin() + static_cast<int64_t>(f + 1) * hw * c);
    session.push_reference_frame(frame, f);
  }
  session.begin_frame(l);
  return session;
}

}  // namespace

EncodeResult encode_gop(const EntropyModel& m, const std::vector<double>& latents,
                        const Dims3& dims, int k, int rate_idx) {
  m.config.validate();
  if (k < 0) throw ContractError("encode_gop: k must be >= 0");
  if (dims.frames > 0xFFFF || dims.height > 0xFFFF || dims.width > 0xFFFF)
    throw ContractError("encode_gop: dimensions exceed header range");
  const int c = m.config.channels;
  const int hw = dims.height * dims.width;
  const int64_t n = dims.tokens() * c;
  if (static_cast<int64_t>(latents.size()) != n)
    throw ShapeError("encode_gop: latent volume size mismatch");

  EncodeResult result;
  // The clamp is part of the committed latent: the decoder reproduces
  // exactly these values.
  result.committed.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    result.committed[static_cast<size_t>(i)] = clamp_symbol(round_half_even(latents[static_cast<size_t>(i)]));

  result.stream.dims = dims;
  result.stream.channels = c;
  result.stream.rate_idx = static_cast<uint8_t>(rate_idx);
  result.stream.ref_frames = static_cast<uint8_t>(std::min(k, 255));
  result.stream.model_hash = model_hash(m);

  for (int l = 0; l < dims.frames; ++l) {
    DecodeSession session = make_frame_session(m, result.committed, dims, l, k, rate_idx);
    RangeEncoder enc;
    std::vector<int> frame_symbols;
    std::vector<CdfTable> frame_tables;
    std::vector<double> frame_mu, frame_sigma;
    frame_symbols.reserve(static_cast<size_t>(hw) * c);
    for (int y = 0; y < dims.height; ++y)
      for (int x = 0; x < dims.width; ++x) {
        const Coord3 pos{l, y, x};
        const DecodeSession::StepOut step = session.decode_step(pos);
        const int64_t base = (static_cast<int64_t>(l) * hw +
                              static_cast<int64_t>(y) * dims.width + x) * c;
        for (int ch = 0; ch < c; ++ch) {
          const int sym = static_cast<int>(result.committed[static_cast<size_t>(base + ch)]);
          const CdfTable table = build_cdf(step.mu[static_cast<size_t>(ch)],
                                           step.sigma[static_cast<size_t>(ch)],
                                           m.config.scale_min);
          enc.encode(sym, table);
          frame_symbols.push_back(sym);
          frame_tables.push_back(table);
          frame_mu.push_back(step.mu[static_cast<size_t>(ch)]);
          frame_sigma.push_back(step.sigma[static_cast<size_t>(ch)]);
        }
        session.commit(pos, result.committed.data() + base);
      }
    std::vector<uint8_t> payload = enc.finish();

    FrameStat stat;
    stat.frame = l;
    stat.payload_bytes = static_cast<int64_t>(payload.size());
    stat.actual_bits = static_cast<double>(payload.size()) * 8.0;
    stat.table_bits = table_bits(frame_symbols, frame_tables);
    stat.estimate_bits = estimate_rate_bits(frame_symbols, frame_mu, frame_sigma);
    stat.bits_per_latent = stat.actual_bits / (static_cast<double>(hw) * c);
    result.stats.push_back(stat);
    result.stream.frame_payloads.push_back(std::move(payload));
  }
  return result;
}

DecodeResult decode_gop(const EntropyModel& m, const Bitstream& stream) {
  m.config.validate();
  if (stream.model_hash != model_hash(m))
    throw DecodeError("decode_gop: stream was produced with a different model");
  if (stream.channels != m.config.channels)
    throw DecodeError("decode_gop: channel count does not match the model");
  if (stream.rate_idx >= m.config.num_rate_points)
    throw DecodeError("decode_gop: rate index out of range for the model");
  if (static_cast<int>(stream.frame_payloads.size()) != stream.dims.frames)
    throw DecodeError("decode_gop: frame count mismatch");

  const Dims3 dims = stream.dims;
  const int c = m.config.channels;
  const int hw = dims.height * dims.width;
  const int k = stream.ref_frames;
  const int rate_idx = stream.rate_idx;

  DecodeResult result;
  result.dims = dims;
  result.channels = c;
  result.rate_idx = rate_idx;
  result.ref_frames = k;
  result.latents.assign(static_cast<size_t>(dims.tokens()) * c, 0.0);
  result.refined.assign(static_cast<size_t>(dims.tokens()) * c, 0.0);

  std::vector<double> row(static_cast<size_t>(c));
  for (int l = 0; l < dims.frames; ++l) {
    DecodeSession session = make_frame_session(m, result.latents, dims, l, k, rate_idx);
    const auto& payload = stream.frame_payloads[static_cast<size_t>(l)];
    RangeDecoder dec(payload.data(), payload.size());
    for (int y = 0; y < dims.height; ++y)
      for (int x = 0; x < dims.width; ++x) {
        const Coord3 pos{l, y, x};
        const DecodeSession::StepOut step = session.decode_step(pos);
        const int64_t base = (static_cast<int64_t>(l) * hw +
                              static_cast<int64_t>(y) * dims.width + x) * c;
        for (int ch = 0; ch < c; ++ch) {
          const CdfTable table = build_cdf(step.mu[static_cast<size_t>(ch)],
                                           step.sigma[static_cast<size_t>(ch)],
                                           m.config.scale_min);
          const int sym = dec.decode(table);
          row[static_cast<size_t>(ch)] = static_cast<double>(sym);
          result.latents[static_cast<size_t>(base + ch)] = static_cast<double>(sym);
          result.refined[static_cast<size_t>(base + ch)] =
              static_cast<double>(sym) + step.lrp[static_cast<size_t>(ch)];
        }
        session.commit(pos, row.data());
      }
  }
  return result;
}

}  // namespace swa
