#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "scribblemix/common.hpp"

namespace scribblemix {

constexpr uint8_t kUnlabeled = 255;

// Sparse per-pixel class map; kUnlabeled marks pixels without supervision.
struct ScribbleLabel {
  int num_classes = 0;
  int h = 0, w = 0;
  std::vector<uint8_t> cls;  // h*w values in [0,num_classes) or kUnlabeled

  ScribbleLabel() = default;
  ScribbleLabel(int k, int h_, int w_)
      : num_classes(k), h(h_), w(w_), cls(static_cast<size_t>(h_) * w_, kUnlabeled) {}

  uint8_t at(int y, int x) const { return cls[static_cast<size_t>(y) * w + x]; }
  void set(int y, int x, uint8_t c) { cls[static_cast<size_t>(y) * w + x] = c; }

  int64_t labeled_count() const {
    int64_t n = 0;
    for (uint8_t c : cls) n += (c != kUnlabeled);
    return n;
  }

  void validate() const {
    check(static_cast<int64_t>(cls.size()) == int64_t(h) * w, "scribble size mismatch");
    for (uint8_t c : cls)
      check(c == kUnlabeled || c < num_classes, "scribble class ", int(c), " out of range, K=",
            num_classes);
  }
};

// Dense class map without sentinel, used as evaluation gold standard.
struct DenseMask {
  int num_classes = 0;
  int h = 0, w = 0;
  std::vector<uint8_t> cls;

  DenseMask() = default;
  DenseMask(int k, int h_, int w_)
      : num_classes(k), h(h_), w(w_), cls(static_cast<size_t>(h_) * w_, 0) {}

  uint8_t at(int y, int x) const { return cls[static_cast<size_t>(y) * w + x]; }
  void set(int y, int x, uint8_t c) { cls[static_cast<size_t>(y) * w + x] = c; }

  void validate() const {
    check(static_cast<int64_t>(cls.size()) == int64_t(h) * w, "mask size mismatch");
    for (uint8_t c : cls) check(c < num_classes, "mask class ", int(c), " out of range");
  }
};

// Weighted soft supervision: one entry per (pixel, class) with weight > 0.
// Omega_L is the set of distinct pixels that carry at least one entry.
struct SoftTarget {
  int num_classes = 0;
  int h = 0, w = 0;
  std::vector<int32_t> pix;
  std::vector<uint8_t> cls;
  std::vector<float> wgt;

  SoftTarget() = default;
  SoftTarget(int k, int h_, int w_) : num_classes(k), h(h_), w(w_) {}

  void add(int32_t p, uint8_t c, float weight) {
    pix.push_back(p);
    cls.push_back(c);
    wgt.push_back(weight);
  }
  size_t entries() const { return pix.size(); }

  int64_t labeled_count() const {
    std::vector<uint8_t> seen(static_cast<size_t>(h) * w, 0);
    for (int32_t p : pix) seen[static_cast<size_t>(p)] = 1;
    int64_t n = 0;
    for (uint8_t s : seen) n += s;
    return n;
  }
};

// Either form of supervision accepted by the partial cross-entropy.
using MixedTarget = std::variant<ScribbleLabel, SoftTarget>;

inline SoftTarget to_soft(const ScribbleLabel& y) {
  SoftTarget t(y.num_classes, y.h, y.w);
  for (int32_t p = 0; p < int32_t(y.cls.size()); ++p)
    if (y.cls[p] != kUnlabeled) t.add(p, y.cls[p], 1.0f);
  return t;
}

}  // namespace scribblemix
