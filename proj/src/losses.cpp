#include "scribblemix/losses.hpp"

#include <algorithm>

namespace scribblemix {

DenseMask largest_cc_mask(const std::vector<uint8_t>& classes, int num_classes, int h, int w) {
  const int64_t hw = int64_t(h) * w;
  check(int64_t(classes.size()) == hw, "largest_cc: class map size mismatch");
  DenseMask out;
  out.num_classes = num_classes;
  out.h = h;
  out.w = w;
  out.cls = classes;
  std::vector<int32_t> comp(size_t(hw), -1);
  std::vector<int32_t> frontier;
  for (int k = 1; k < num_classes; ++k) {
    // label components in scan order; the first one found owns the smallest
    // scan-order pixel, so keeping strict ">" realizes the tie rule
    int32_t next_comp = 0;
    int32_t best_comp = -1;
    int64_t best_size = 0;
    std::fill(comp.begin(), comp.end(), -1);
    for (int64_t seed = 0; seed < hw; ++seed) {
      if (classes[size_t(seed)] != k || comp[size_t(seed)] >= 0) continue;
      const int32_t id = next_comp++;
      int64_t size = 0;
      frontier.clear();
      frontier.push_back(int32_t(seed));
      comp[size_t(seed)] = id;
      while (!frontier.empty()) {
        const int32_t p = frontier.back();
        frontier.pop_back();
        ++size;
        const int y = p / w, x = p % w;
        const int32_t nb[4] = {x > 0 ? p - 1 : -1, x + 1 < w ? p + 1 : -1,
                               y > 0 ? p - w : -1, y + 1 < h ? p + w : -1};
        for (int32_t q : nb) {
          if (q < 0 || classes[size_t(q)] != k || comp[size_t(q)] >= 0) continue;
          comp[size_t(q)] = id;
          frontier.push_back(q);
        }
      }
      if (size > best_size) {
        best_size = size;
        best_comp = id;
      }
    }
    if (next_comp <= 1) continue;  // zero or one component: nothing to remove
    for (int64_t p = 0; p < hw; ++p)
      if (classes[size_t(p)] == k && comp[size_t(p)] != best_comp) out.cls[size_t(p)] = 0;
  }
  return out;
}

DiceResult dice_score(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gold,
                      int num_classes) {
  check(pred.size() == gold.size(), "dice: mask size mismatch ", pred.size(), " vs ",
        gold.size());
  DiceResult r;
  double sum = 0.0;
  for (int k = 1; k < num_classes; ++k) {
    int64_t a = 0, b = 0, both = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
      const bool in_a = pred[i] == k, in_b = gold[i] == k;
      a += in_a;
      b += in_b;
      both += in_a && in_b;
    }
    const double d = (a + b) == 0 ? 1.0 : 2.0 * double(both) / double(a + b);
    r.per_class.push_back(d);
    sum += d;
  }
  r.mean_foreground = num_classes > 1 ? sum / double(num_classes - 1) : 0.0;
  return r;
}

DiceResult dice_score(const DenseMask& pred, const DenseMask& gold) {
  check(pred.h == gold.h && pred.w == gold.w && pred.num_classes == gold.num_classes,
        "dice: mask geometry mismatch");
  return dice_score(pred.cls, gold.cls, pred.num_classes);
}

}  // namespace scribblemix
