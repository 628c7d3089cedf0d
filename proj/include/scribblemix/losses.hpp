#pragma once

#include <vector>

#include "scribblemix/graph.hpp"
#include "scribblemix/labels.hpp"
#include "scribblemix/mixplan.hpp"

namespace scribblemix {

struct LossWeights {
  float lambda1 = 1.0f;   // unmixed scribble CE
  float lambda2 = 1.0f;   // mixed scribble CE
  float lambda3 = 0.05f;  // global consistency
  float lambda4 = 1.0f;   // local consistency

  void validate() const {
    check(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && lambda4 >= 0,
          "loss weights must be nonnegative");
  }

  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double unmix = 0.0, mix = 0.0, con_g = 0.0, con_l = 0.0, total = 0.0;
  int64_t labeled_unmix = 0;  // pixels feeding the unmixed CE terms
  int64_t labeled_mix = 0;    // pixels feeding the mixed CE terms
};

enum class NcsMode { kWhole, kPerClass };

// ---- graph-side loss builders (float for training, double for checks) -------

template <typename T>
int pair_mean(Graph<T>& g, int a, int b) {
  return g.scale(g.add(a, b), T(0.5));
}

template <typename T>
int loss_unmix(Graph<T>& g, int pred1, const ScribbleLabel& y1, int pred2,
               const ScribbleLabel& y2) {
  return pair_mean(g, g.partial_ce(pred1, y1), g.partial_ce(pred2, y2));
}

template <typename T>
int partial_ce_target(Graph<T>& g, int pred, const MixedTarget& y) {
  if (const auto* hard = std::get_if<ScribbleLabel>(&y)) return g.partial_ce(pred, *hard);
  return g.partial_ce(pred, std::get<SoftTarget>(y));
}

template <typename T>
int loss_mix(Graph<T>& g, int pred_o12, const MixedTarget& y_o12, int pred_o21,
             const MixedTarget& y_o21) {
  return pair_mean(g, partial_ce_target(g, pred_o12, y_o12),
                   partial_ce_target(g, pred_o21, y_o21));
}

// Negative cosine similarity; per-class mode averages the per-channel values,
// skipping channels where either side has zero norm (an absent class).
template <typename T>
int ncs_node(Graph<T>& g, int p, int q, NcsMode mode = NcsMode::kWhole) {
  if (mode == NcsMode::kWhole) return g.ncs(p, q);
  const int k = g.val(p).shape[0];
  const int64_t hw = int64_t(g.val(p).shape[1]) * g.val(p).shape[2];
  auto nonzero = [&](int id, int c) {
    const auto& d = g.val(id).data;
    for (int64_t i = 0; i < hw; ++i)
      if (d[c * hw + i] != T(0)) return true;
    return false;
  };
  int acc = -1, used = 0;
  for (int c = 0; c < k; ++c) {
    if (!nonzero(p, c) || !nonzero(q, c)) continue;
    const int nk = g.ncs(g.slice_channels(p, c, c + 1), g.slice_channels(q, c, c + 1));
    acc = acc < 0 ? nk : g.add(acc, nk);
    ++used;
  }
  check(used > 0, "ncs: every class channel has zero norm");
  return g.scale(acc, T(1) / T(used));
}

// p-branch mixes the unmixed predictions under the same plan and occlusion the
// q-branch inputs went through; q is the prediction on the occluded mix.
template <typename T>
int global_consistency(Graph<T>& g, const MixPlan& plan12, const OcclusionMask& occ12,
                       const MixPlan& plan21, const OcclusionMask& occ21, int pred1, int pred2,
                       int pred_o12, int pred_o21, bool stopgrad = false,
                       NcsMode mode = NcsMode::kWhole) {
  const int a1 = stopgrad ? g.detach(pred1) : pred1;
  const int a2 = stopgrad ? g.detach(pred2) : pred2;
  const int p12 = g.occlude(g.mix_gather(a1, a2, plan12), occ12.raster);
  const int p21 = g.occlude(g.mix_gather(a2, a1, plan21), occ21.raster);
  return pair_mean(g, ncs_node(g, p12, pred_o12, mode), ncs_node(g, p21, pred_o21, mode));
}

// ---- largest-connected-component morphology ----------------------------------

// Keeps, per non-background class, only the largest 4-connected component
// (size ties -> the component containing the smallest scan-order pixel);
// removed pixels become background.
DenseMask largest_cc_mask(const std::vector<uint8_t>& classes, int num_classes, int h, int w);

template <typename T>
std::vector<uint8_t> argmax_map(const TensorT<T>& probs) {
  check(probs.shape.size() == 3, "argmax_map: expected [K,H,W]");
  const int k = probs.shape[0];
  const int64_t hw = int64_t(probs.shape[1]) * probs.shape[2];
  std::vector<uint8_t> out(static_cast<size_t>(hw));
  for (int64_t p = 0; p < hw; ++p) {
    int best = 0;
    T bv = probs.data[size_t(p)];
    for (int c = 1; c < k; ++c)
      if (probs.data[c * hw + p] > bv) {
        bv = probs.data[c * hw + p];
        best = c;
      }
    out[size_t(p)] = uint8_t(best);
  }
  return out;
}

template <typename T>
TensorT<T> onehot_tensor(const DenseMask& m) {
  TensorT<T> t({m.num_classes, m.h, m.w});
  const int64_t hw = int64_t(m.h) * m.w;
  for (int64_t p = 0; p < hw; ++p) t.data[size_t(m.cls[size_t(p)]) * hw + p] = T(1);
  return t;
}

template <typename T>
DenseMask largest_cc_target(Graph<T>& g, int pred) {
  const auto& probs = g.val(pred);
  return largest_cc_mask(argmax_map(probs), probs.shape[0], probs.shape[1], probs.shape[2]);
}

// Pulls each unmixed prediction toward the one-hot of its own largest
// connected components; the target is a constant.
template <typename T>
int local_consistency(Graph<T>& g, int pred1, int pred2, NcsMode mode = NcsMode::kWhole) {
  auto one = [&](int pred) {
    const int target = g.constant(onehot_tensor<T>(largest_cc_target(g, pred)));
    return ncs_node(g, pred, target, mode);
  };
  return pair_mean(g, one(pred1), one(pred2));
}

// Weighted total; pass -1 for a term that has no inputs this step (its weight
// then multiplies an implicit zero). Returns -1 only if every term is absent.
template <typename T>
int total_loss_node(Graph<T>& g, int unmix, int mix, int con_g, int con_l,
                    const LossWeights& w) {
  w.validate();
  int acc = -1;
  auto put = [&](int node, float lambda) {
    if (node < 0 || lambda == 0.0f) return;
    const int term = g.scale(node, T(lambda));
    acc = acc < 0 ? term : g.add(acc, term);
  };
  put(unmix, w.lambda1);
  put(mix, w.lambda2);
  put(con_g, w.lambda3);
  put(con_l, w.lambda4);
  return acc;
}

// ---- evaluation ---------------------------------------------------------------

struct DiceResult {
  std::vector<double> per_class;  // classes 1..K-1
  double mean_foreground = 0.0;
};

// 2|A n B| / (|A| + |B|) per foreground class; both sides empty counts as 1.
DiceResult dice_score(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gold,
                      int num_classes);
DiceResult dice_score(const DenseMask& pred, const DenseMask& gold);

}  // namespace scribblemix
