#pragma once

#include <cstdint>
#include <cstdlib>

namespace swa {

// Latent volume extents: frames x height x width (channels handled elsewhere).
struct Dims3 {
  int frames = 1;
  int height = 1;
  int width = 1;

  int64_t tokens() const { return static_cast<int64_t>(frames) * height * width; }
};

// Position of a hyperpixel. Virtual coordinates (e.g. y == -1 for the zero
// prepend of a frame's first row) are allowed; only relative offsets matter.
struct Coord3 {
  int l = 0;
  int y = 0;
  int x = 0;

  bool operator==(const Coord3&) const = default;
};

// Maximum offset from the window center along each axis. The full kernel
// size is (2*lw+1) x (2*hw+1) x (2*ww+1).
struct WindowSpec {
  int lw = 2;
  int hw = 3;
  int ww = 3;

  int table_size() const { return (2 * lw + 1) * (2 * hw + 1) * (2 * ww + 1); }

  bool contains(int dl, int dy, int dx) const {
    return std::abs(dl) <= lw && std::abs(dy) <= hw && std::abs(dx) <= ww;
  }

  // Flat index into a per-head bias table for an in-window offset.
  int table_index(int dl, int dy, int dx) const {
    return ((dl + lw) * (2 * hw + 1) + (dy + hw)) * (2 * ww + 1) + (dx + ww);
  }

  bool operator==(const WindowSpec&) const = default;
};

// Line-scan order: frame-major, then row-major within the frame.
inline int64_t scan_index(const Coord3& c, const Dims3& d) {
  return (static_cast<int64_t>(c.l) * d.height + c.y) * d.width + c.x;
}

inline Coord3 coord_of(int64_t t, const Dims3& d) {
  const int x = static_cast<int>(t % d.width);
  const int y = static_cast<int>((t / d.width) % d.height);
  const int l = static_cast<int>(t / (static_cast<int64_t>(d.width) * d.height));
  return Coord3{l, y, x};
}

// Strict causal visibility: n decodes before m. The designated self/prepend
// key is handled by the attention kernels' diagonal flag, not here.
inline bool causal_mask(const Coord3& m, const Coord3& n, const Dims3& d) {
  return scan_index(n, d) < scan_index(m, d);
}

// Number of in-window keys visible to query m under truncation at the volume
// borders. Counts strictly earlier positions when causal; the query itself is
// never counted.
inline int visible_count(const Coord3& m, const Dims3& d, const WindowSpec& w, bool causal) {
  int count = 0;
  const int64_t tm = scan_index(m, d);
  for (int dl = -w.lw; dl <= w.lw; ++dl) {
    const int l = m.l + dl;
    if (l < 0 || l >= d.frames) continue;
    for (int dy = -w.hw; dy <= w.hw; ++dy) {
      const int y = m.y + dy;
      if (y < 0 || y >= d.height) continue;
      for (int dx = -w.ww; dx <= w.ww; ++dx) {
        const int x = m.x + dx;
        if (x < 0 || x >= d.width) continue;
        const Coord3 n{l, y, x};
        if (n == m) continue;
        if (causal && scan_index(n, d) >= tm) continue;
        ++count;
      }
    }
  }
  return count;
}

}  // namespace swa
