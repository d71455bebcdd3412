#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swa/geometry.hpp"

namespace swa {

// Compressed stream container. Layout (little-endian, bit-exact):
//   magic "SWAB" | version u16 | flags u16 | L,H,W,C u16 each |
//   rate_idx u8 | k u8 | model-hash u64 |
//   per frame: payload length u32 + payload bytes |
//   CRC32 over everything before it.
// flags == 0 declares the default symbol support [-64, 63]; other values are
// reserved and refused.
struct Bitstream {
  uint16_t version = 1;
  uint16_t flags = 0;
  Dims3 dims;
  int channels = 0;
  uint8_t rate_idx = 0;
  uint8_t ref_frames = 0;  // k
  uint64_t model_hash = 0;
  std::vector<std::vector<uint8_t>> frame_payloads;
};

std::vector<uint8_t> serialize_bitstream(const Bitstream& b);
Bitstream parse_bitstream(const std::vector<uint8_t>& bytes);  // verifies the CRC

// Latent volume file. Layout:
//   magic "SWAL" | version u16 | L,H,W,C u16 each | dtype u8 |
//   payload in scan order, channels innermost.
// dtype 0: f64 raw latents; dtype 1: i16 quantized latents.
struct LatentFile {
  Dims3 dims;
  int channels = 0;
  bool quantized = false;
  std::vector<double> data;  // L*H*W*C values
};

std::vector<uint8_t> serialize_latents(const LatentFile& f);
LatentFile parse_latents(const std::vector<uint8_t>& bytes);
void save_latents(const LatentFile& f, const std::string& path);
LatentFile load_latents(const std::string& path);

}  // namespace swa
