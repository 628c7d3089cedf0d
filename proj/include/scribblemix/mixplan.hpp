#pragma once

#include <cstdint>
#include <vector>

#include "scribblemix/common.hpp"

namespace scribblemix {

// Block-structured realization of the mix operation: a binary block mask z
// plus one source-block permutation per input. Output block d copies the
// transported block pi1[d] of input 1 when z[d]==0, else pi2[d] of input 2.
struct MixPlan {
  int block_size = 0;
  int grid_h = 0, grid_w = 0;       // blocks per axis
  std::vector<uint8_t> z;           // grid_h*grid_w, values {0,1}
  std::vector<int32_t> pi1, pi2;    // permutations of [0, grid_h*grid_w)
  double objective = 0.0;           // achieved mixed saliency

  int blocks() const { return grid_h * grid_w; }
  int height() const { return grid_h * block_size; }
  int width() const { return grid_w * block_size; }

  static MixPlan identity(int block_size, int grid_h, int grid_w) {
    MixPlan p;
    p.block_size = block_size;
    p.grid_h = grid_h;
    p.grid_w = grid_w;
    p.z.assign(static_cast<size_t>(grid_h) * grid_w, 0);
    p.pi1.resize(p.blocks());
    p.pi2.resize(p.blocks());
    for (int i = 0; i < p.blocks(); ++i) p.pi1[i] = p.pi2[i] = i;
    return p;
  }

  void validate() const;

  // Per output pixel: source selector (0/1) * h*w + source pixel index.
  std::vector<int32_t> gather_table() const;
};

inline bool is_permutation(const std::vector<int32_t>& pi) {
  std::vector<uint8_t> seen(pi.size(), 0);
  for (int32_t v : pi) {
    if (v < 0 || v >= int32_t(pi.size()) || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

inline void MixPlan::validate() const {
  check(block_size > 0 && grid_h > 0 && grid_w > 0, "mix plan: empty geometry");
  check(int(z.size()) == blocks(), "mix plan: z size ", z.size(), " != blocks ", blocks());
  for (uint8_t v : z) check(v <= 1, "mix plan: z value ", int(v), " not binary");
  check(int(pi1.size()) == blocks() && int(pi2.size()) == blocks(), "mix plan: pi size mismatch");
  check(is_permutation(pi1), "mix plan: pi1 is not a permutation");
  check(is_permutation(pi2), "mix plan: pi2 is not a permutation");
}

inline std::vector<int32_t> MixPlan::gather_table() const {
  validate();
  const int hh = height(), ww = width();
  std::vector<int32_t> tab(static_cast<size_t>(hh) * ww);
  for (int by = 0; by < grid_h; ++by) {
    for (int bx = 0; bx < grid_w; ++bx) {
      const int d = by * grid_w + bx;
      const int src = z[d];
      const int s = src == 0 ? pi1[d] : pi2[d];
      const int sy0 = (s / grid_w) * block_size, sx0 = (s % grid_w) * block_size;
      const int dy0 = by * block_size, dx0 = bx * block_size;
      for (int y = 0; y < block_size; ++y)
        for (int x = 0; x < block_size; ++x)
          tab[static_cast<size_t>(dy0 + y) * ww + dx0 + x] =
              src * hh * ww + (sy0 + y) * ww + (sx0 + x);
    }
  }
  return tab;
}

// What occluded pixels teach the segmentor: supervised background, or the
// literal reading where they carry no supervision at all.
enum class OcclusionLabelPolicy { kBackground, kZero };

// Rotated-square occlusion raster plus the parameters it was built from.
struct OcclusionMask {
  int h = 0, w = 0;
  std::vector<uint8_t> raster;  // h*w values {0,1}, 1 = occluded
  double center_x = 0.0, center_y = 0.0;
  double side = 0.0;
  double angle = 0.0;  // radians in [0, pi)

  bool empty() const {
    for (uint8_t v : raster)
      if (v) return false;
    return true;
  }
  int64_t occluded_count() const {
    int64_t n = 0;
    for (uint8_t v : raster) n += v;
    return n;
  }
  static OcclusionMask none(int h, int w) {
    OcclusionMask m;
    m.h = h;
    m.w = w;
    m.raster.assign(static_cast<size_t>(h) * w, 0);
    return m;
  }
};

}  // namespace scribblemix
