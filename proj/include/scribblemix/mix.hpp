#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "scribblemix/labels.hpp"
#include "scribblemix/mixplan.hpp"
#include "scribblemix/rng.hpp"
#include "scribblemix/segmentor.hpp"
#include "scribblemix/tensor.hpp"

namespace scribblemix {

struct SaliencyMap {
  int h = 0, w = 0;
  std::vector<float> values;  // nonnegative, finite

  void validate() const;
};

// Per-pixel l2 norm over channels of d(partial_ce)/d(input), with the loss
// taken on the sample's own scribbles. Parameters are left untouched.
SaliencyMap compute_saliency(const SegmentorParams& params, const Tensor& x,
                             const ScribbleLabel& y);

// Channel l2 norm of an already-computed input gradient.
SaliencyMap saliency_from_grad(const std::vector<float>& grad, int channels, int h, int w);

struct MixSearchConfig {
  int block_size = 8;
  int window_radius = 1;  // in blocks, Chebyshev
  int n_iter = 4;
};

std::vector<double> block_sums(const SaliencyMap& s, int block_size);

// Max-weight perfect assignment on an n x n matrix (forbidden entries hold
// -infinity); returns row -> column. Deterministic for equal-weight optima.
std::vector<int32_t> max_weight_assignment(const std::vector<double>& weight, int n);

// Alternating saliency maximization: z-step picks each block's dominant
// source (ties -> source 1), transport step re-solves each source's windowed
// block assignment. A final step re-picks source and block jointly as one
// assignment over (source, block) items, escaping pairing-order local optima,
// and is kept only when it improves. Objective is non-decreasing across
// iterations; the value after each iteration lands in *history when given.
MixPlan optimize_mix_plan(const SaliencyMap& s1, const SaliencyMap& s2,
                          const MixSearchConfig& cfg, std::vector<double>* history = nullptr);

// Brute force over all binary z and all windowed permutations; block count <= 9.
MixPlan exhaustive_mix_plan(const SaliencyMap& s1, const SaliencyMap& s2,
                            const MixSearchConfig& cfg);

double plan_objective(const MixPlan& plan, const std::vector<double>& s1b,
                      const std::vector<double>& s2b);

// All source permutations allowed by the window, lexicographic order.
std::vector<std::vector<int32_t>> enumerate_window_perms(int grid_h, int grid_w,
                                                         int window_radius);

Tensor apply_mix(const MixPlan& plan, const Tensor& a1, const Tensor& a2);
ScribbleLabel apply_mix(const MixPlan& plan, const ScribbleLabel& a1, const ScribbleLabel& a2);

// ---- occlusion --------------------------------------------------------------

OcclusionMask rasterize_occlusion(int h, int w, double cx, double cy, double side, double angle);

// Square of side round(side_frac * min(H,W)), center uniform over the image,
// rotation uniform over [0, pi), rasterized by pixel-center inclusion.
OcclusionMask sample_occlusion(RngStream& rng, int h, int w, double side_frac);

Tensor apply_occlusion(const OcclusionMask& mask, const Tensor& x);
ScribbleLabel apply_occlusion(const OcclusionMask& mask, const ScribbleLabel& y,
                              OcclusionLabelPolicy policy);
SoftTarget apply_occlusion(const OcclusionMask& mask, const SoftTarget& y,
                           OcclusionLabelPolicy policy);

// ---- alternate strategies ----------------------------------------------------

struct MixupResult {
  Tensor image;
  SoftTarget target;
  double lambda = 1.0;
};

// lambda ~ Beta(alpha, alpha); image = lambda*x1 + (1-lambda)*x2. A pixel is
// supervised when labeled in either source; its target collects the
// mixing-coefficient-weighted one-hot of each available label.
MixupResult mixup_linear(RngStream& rng, const Tensor& x1, const ScribbleLabel& y1,
                         const Tensor& x2, const ScribbleLabel& y2, double alpha);
MixupResult apply_mixup(double lambda, const Tensor& x1, const ScribbleLabel& y1,
                        const Tensor& x2, const ScribbleLabel& y2);

struct CutRect {
  int x0 = 0, y0 = 0, w = 0, h = 0;
};

struct CutmixResult {
  Tensor image;
  ScribbleLabel label;
  CutRect rect;
};

// Axis-aligned rectangle with area fraction ~ Uniform(0.1, 0.5) copied from
// (x2, y2) into (x1, y1); labels copied verbatim, sentinels included.
CutmixResult cutmix(RngStream& rng, const Tensor& x1, const ScribbleLabel& y1, const Tensor& x2,
                    const ScribbleLabel& y2);
CutmixResult apply_cutmix(const CutRect& rect, const Tensor& x1, const ScribbleLabel& y1,
                          const Tensor& x2, const ScribbleLabel& y2);

// Pixel-select table realizing the rectangle copy (outside -> source 1).
std::vector<int32_t> cutmix_table(int h, int w, const CutRect& rect);

// ---- plan text serialization -------------------------------------------------

void write_plan(std::ostream& os, const MixPlan& plan);
std::string plan_to_string(const MixPlan& plan);
MixPlan read_plan(std::istream& is);

}  // namespace scribblemix
