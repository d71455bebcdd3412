#include "swa/bitstream.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "swa/errors.hpp"
#include "swa/wire.hpp"

namespace swa {

namespace {

std::array<uint32_t, 256> make_crc_table() {
  std::array<uint32_t, 256> table{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int j = 0; j < 8; ++j) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
    table[i] = c;
  }
  return table;
}

const std::array<uint32_t, 256> kCrcTable = make_crc_table();

}  // namespace

uint32_t crc32_ieee(const uint8_t* data, size_t size, uint32_t seed) {
  uint32_t c = seed ^ 0xFFFFFFFFu;
  for (size_t i = 0; i < size; ++i) c = kCrcTable[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

uint64_t fnv1a64(const uint8_t* data, size_t size) {
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streampos size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError("failed reading " + path);
  return bytes;
}

void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp);
    if (!bytes.empty()) out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::remove(tmp.c_str());
      throw IoError("failed writing " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("failed to move " + tmp + " into place");
  }
}

std::vector<uint8_t> serialize_bitstream(const Bitstream& b) {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'S', 'W', 'A', 'B'});
  put_u16(out, b.version);
  put_u16(out, b.flags);
  put_u16(out, static_cast<uint16_t>(b.dims.frames));
  put_u16(out, static_cast<uint16_t>(b.dims.height));
  put_u16(out, static_cast<uint16_t>(b.dims.width));
  put_u16(out, static_cast<uint16_t>(b.channels));
  put_u8(out, b.rate_idx);
  put_u8(out, b.ref_frames);
  put_u64(out, b.model_hash);
  for (const auto& payload : b.frame_payloads) {
    put_u32(out, static_cast<uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
  }
  put_u32(out, crc32_ieee(out.data(), out.size()));
  return out;
}

Bitstream parse_bitstream(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 4 + 2 + 2 + 8 + 1 + 1 + 8 + 4) throw DecodeError("bitstream: too short");
  const uint32_t stored_crc = static_cast<uint32_t>(bytes[bytes.size() - 4]) |
                              (static_cast<uint32_t>(bytes[bytes.size() - 3]) << 8) |
                              (static_cast<uint32_t>(bytes[bytes.size() - 2]) << 16) |
                              (static_cast<uint32_t>(bytes[bytes.size() - 1]) << 24);
  if (crc32_ieee(bytes.data(), bytes.size() - 4) != stored_crc)
    throw DecodeError("bitstream: CRC mismatch (corrupted stream)");

  WireReader r(bytes.data(), bytes.size() - 4);
  if (r.str(4) != "SWAB") throw DecodeError("bitstream: bad magic");
  Bitstream b;
  b.version = r.u16();
  if (b.version != 1) throw DecodeError("bitstream: unsupported version");
  b.flags = r.u16();
  if (b.flags != 0) throw DecodeError("bitstream: reserved flags set");
  b.dims.frames = r.u16();
  b.dims.height = r.u16();
  b.dims.width = r.u16();
  b.channels = r.u16();
  if (b.dims.frames < 1 || b.dims.height < 1 || b.dims.width < 1 || b.channels < 1)
    throw DecodeError("bitstream: bad dimensions");
  b.rate_idx = r.u8();
  b.ref_frames = r.u8();
  b.model_hash = r.u64();
  for (int l = 0; l < b.dims.frames; ++l) {
    const uint32_t len = r.u32();
    if (len > r.remaining()) throw DecodeError("bitstream: frame payload overruns stream");
    const uint8_t* p = r.take(len);
    b.frame_payloads.emplace_back(p, p + len);
  }
  if (r.remaining() != 0) throw DecodeError("bitstream: trailing bytes");
  return b;
}

std::vector<uint8_t> serialize_latents(const LatentFile& f) {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'S', 'W', 'A', 'L'});
  put_u16(out, 1);
  put_u16(out, static_cast<uint16_t>(f.dims.frames));
  put_u16(out, static_cast<uint16_t>(f.dims.height));
  put_u16(out, static_cast<uint16_t>(f.dims.width));
  put_u16(out, static_cast<uint16_t>(f.channels));
  put_u8(out, f.quantized ? 1 : 0);
  const int64_t n = f.dims.tokens() * f.channels;
  if (static_cast<int64_t>(f.data.size()) != n) throw ContractError("latent file: size mismatch");
  for (int64_t i = 0; i < n; ++i) {
    if (f.quantized) {
      const double v = f.data[static_cast<size_t>(i)];
      if (v < -32768.0 || v > 32767.0 || v != static_cast<double>(static_cast<int64_t>(v)))
        throw ContractError("latent file: non-integer value in quantized payload");
      put_i16(out, static_cast<int16_t>(v));
    } else {
      put_f64(out, f.data[static_cast<size_t>(i)]);
    }
  }
  return out;
}

LatentFile parse_latents(const std::vector<uint8_t>& bytes) {
  WireReader r(bytes);
  if (r.str(4) != "SWAL") throw DecodeError("latent file: bad magic");
  if (r.u16() != 1) throw DecodeError("latent file: unsupported version");
  LatentFile f;
  f.dims.frames = r.u16();
  f.dims.height = r.u16();
  f.dims.width = r.u16();
  f.channels = r.u16();
  if (f.dims.frames < 1 || f.dims.height < 1 || f.dims.width < 1 || f.channels < 1)
    throw DecodeError("latent file: bad dimensions");
  const uint8_t dtype = r.u8();
  if (dtype > 1) throw DecodeError("latent file: unknown dtype");
  f.quantized = dtype == 1;
  const int64_t n = f.dims.tokens() * f.channels;
  f.data.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    f.data[static_cast<size_t>(i)] = f.quantized ? static_cast<double>(r.i16()) : r.f64();
  if (r.remaining() != 0) throw DecodeError("latent file: trailing bytes");
  return f;
}

void save_latents(const LatentFile& f, const std::string& path) {
  write_file_atomic(path, serialize_latents(f));
}

LatentFile load_latents(const std::string& path) { return parse_latents(read_file_bytes(path)); }

}  // namespace swa
