#include "scribblemix/mix.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "scribblemix/graph.hpp"

namespace scribblemix {

void SaliencyMap::validate() const {
  check(int64_t(values.size()) == int64_t(h) * w, "saliency: size mismatch");
  for (float v : values)
    check(v >= 0.0f && std::isfinite(v), "saliency: invalid value ", v);
}

SaliencyMap saliency_from_grad(const std::vector<float>& grad, int channels, int h, int w) {
  const int64_t hw = int64_t(h) * w;
  check(int64_t(grad.size()) == channels * hw, "saliency: gradient size mismatch");
  SaliencyMap s;
  s.h = h;
  s.w = w;
  s.values.resize(size_t(hw));
  for (int64_t p = 0; p < hw; ++p) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) acc += double(grad[c * hw + p]) * grad[c * hw + p];
    s.values[size_t(p)] = float(std::sqrt(acc));
  }
  s.validate();
  return s;
}

SaliencyMap compute_saliency(const SegmentorParams& params, const Tensor& x,
                             const ScribbleLabel& y) {
  check(y.labeled_count() >= 1, "compute_saliency: scribble has no labeled pixels");
  GraphF g;
  const auto ids = push_segmentor(g, params);
  const int xi = g.leaf(x, true);
  const int pred = wire_segmentor(g, ids, xi);
  const int ce = g.partial_ce(pred, y);
  g.backward(ce, {.into_params = false});
  return saliency_from_grad(g.grad_of(xi), x.shape[0], x.shape[1], x.shape[2]);
}

std::vector<double> block_sums(const SaliencyMap& s, int block_size) {
  check(block_size > 0 && s.h % block_size == 0 && s.w % block_size == 0,
        "mix plan: block size ", block_size, " does not divide ", s.h, "x", s.w);
  const int gh = s.h / block_size, gw = s.w / block_size;
  std::vector<double> sums(size_t(gh) * gw, 0.0);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      sums[size_t(y / block_size) * gw + x / block_size] +=
          double(s.values[size_t(y) * s.w + x]);
  return sums;
}

double plan_objective(const MixPlan& plan, const std::vector<double>& s1b,
                      const std::vector<double>& s2b) {
  double obj = 0.0;
  for (int d = 0; d < plan.blocks(); ++d)
    obj += plan.z[size_t(d)] ? s2b[size_t(plan.pi2[size_t(d)])]
                             : s1b[size_t(plan.pi1[size_t(d)])];
  return obj;
}

namespace {

constexpr double kForbidden = -1e18;

bool window_ok(int dst, int src, int gw, int radius) {
  const int dy = std::abs(dst / gw - src / gw);
  const int dx = std::abs(dst % gw - src % gw);
  return std::max(dy, dx) <= radius;
}

}  // namespace

std::vector<int32_t> max_weight_assignment(const std::vector<double>& weight, int n) {
  check(int(weight.size()) == n * n, "assignment: matrix size mismatch");
  // potentials method on cost = -weight, 1-indexed with a dummy row/column
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(size_t(n) + 1, 0.0), v(size_t(n) + 1, 0.0);
  std::vector<int> p(size_t(n) + 1, 0), way(size_t(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(size_t(n) + 1, inf);
    std::vector<char> used(size_t(n) + 1, 0);
    do {
      used[size_t(j0)] = 1;
      const int i0 = p[size_t(j0)];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[size_t(j)]) continue;
        const double cur = -weight[size_t(i0 - 1) * n + (j - 1)] - u[size_t(i0)] - v[size_t(j)];
        if (cur < minv[size_t(j)]) {
          minv[size_t(j)] = cur;
          way[size_t(j)] = j0;
        }
        if (minv[size_t(j)] < delta) {
          delta = minv[size_t(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[size_t(j)]) {
          u[size_t(p[size_t(j)])] += delta;
          v[size_t(j)] -= delta;
        } else {
          minv[size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[size_t(j0)] != 0);
    do {
      const int j1 = way[size_t(j0)];
      p[size_t(j0)] = p[size_t(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int32_t> row_to_col(size_t(n), -1);
  for (int j = 1; j <= n; ++j) row_to_col[size_t(p[size_t(j)] - 1)] = int32_t(j - 1);
  return row_to_col;
}

namespace {

// Re-solve one source's transport given z: destination d with active[d] wants
// the largest reachable block sums; inactive rows take weight 0 so they absorb
// the leftover blocks without affecting the objective.
std::vector<int32_t> solve_transport(const std::vector<double>& sums,
                                     const std::vector<uint8_t>& active, int gh, int gw,
                                     int radius) {
  const int n = gh * gw;
  std::vector<double> w(size_t(n) * n, kForbidden);
  for (int d = 0; d < n; ++d)
    for (int s = 0; s < n; ++s)
      if (window_ok(d, s, gw, radius)) w[size_t(d) * n + s] = active[size_t(d)] ? sums[size_t(s)] : 0.0;
  return max_weight_assignment(w, n);
}

// Extend per-destination owned block choices (-1 = unowned) to a full windowed
// permutation; unowned rows absorb the leftovers. Fails when no completion
// exists under the window.
bool complete_transport(const std::vector<int32_t>& owned, int gw, int radius,
                        std::vector<int32_t>& pi) {
  const int n = int(owned.size());
  std::vector<double> w(size_t(n) * n, kForbidden);
  for (int d = 0; d < n; ++d)
    for (int s = 0; s < n; ++s)
      if (owned[size_t(d)] >= 0 ? s == owned[size_t(d)] : window_ok(d, s, gw, radius))
        w[size_t(d) * n + s] = 0.0;
  pi = max_weight_assignment(w, n);
  for (int d = 0; d < n; ++d)
    if (w[size_t(d) * n + pi[size_t(d)]] <= kForbidden / 2) return false;
  return true;
}

// Choose each destination's source and block jointly as one assignment over
// the 2n (source, block) items, padding with dummy destinations that absorb
// the unused items. This escapes the pairing-order local optima the
// alternating steps can converge to: the per-block source step only ever sees
// the other source through whatever leftover block the last transport parked
// at that destination.
bool joint_refine(const std::vector<double>& s1b, const std::vector<double>& s2b, int gh, int gw,
                  int radius, MixPlan& plan) {
  const int n = gh * gw, m = 2 * n;
  std::vector<double> w(size_t(m) * m, 0.0);
  for (int d = 0; d < n; ++d)
    for (int s = 0; s < m; ++s) {
      const bool ok = window_ok(d, s % n, gw, radius);
      w[size_t(d) * m + s] = !ok ? kForbidden : s < n ? s1b[size_t(s)] : s2b[size_t(s - n)];
    }
  const auto pick = max_weight_assignment(w, m);
  std::vector<int32_t> owned1(size_t(n), -1), owned2(size_t(n), -1);
  for (int d = 0; d < n; ++d) {
    const int32_t item = pick[size_t(d)];
    plan.z[size_t(d)] = item >= n;
    (item >= n ? owned2 : owned1)[size_t(d)] = item % n;
  }
  return complete_transport(owned1, gw, radius, plan.pi1) &&
         complete_transport(owned2, gw, radius, plan.pi2);
}

}  // namespace

MixPlan optimize_mix_plan(const SaliencyMap& s1, const SaliencyMap& s2,
                          const MixSearchConfig& cfg, std::vector<double>* history) {
  check(s1.h == s2.h && s1.w == s2.w, "mix plan: saliency size mismatch");
  check(cfg.n_iter >= 1, "mix plan: n_iter must be >= 1");
  check(cfg.window_radius >= 0, "mix plan: window radius must be >= 0");
  const auto s1b = block_sums(s1, cfg.block_size);
  const auto s2b = block_sums(s2, cfg.block_size);
  const int gh = s1.h / cfg.block_size, gw = s1.w / cfg.block_size;
  MixPlan plan = MixPlan::identity(cfg.block_size, gh, gw);
  if (history) history->clear();
  for (int it = 0; it < cfg.n_iter; ++it) {
    // (a) dominant source per block under the current transports; ties -> 0
    for (int d = 0; d < plan.blocks(); ++d)
      plan.z[size_t(d)] =
          s2b[size_t(plan.pi2[size_t(d)])] > s1b[size_t(plan.pi1[size_t(d)])] ? 1 : 0;
    // (b) windowed assignment per source
    std::vector<uint8_t> active1(plan.z.size()), active2(plan.z.size());
    for (size_t d = 0; d < plan.z.size(); ++d) {
      active1[d] = plan.z[d] == 0;
      active2[d] = plan.z[d] == 1;
    }
    plan.pi1 = solve_transport(s1b, active1, gh, gw, cfg.window_radius);
    plan.pi2 = solve_transport(s2b, active2, gh, gw, cfg.window_radius);
    if (history) history->push_back(plan_objective(plan, s1b, s2b));
  }
  plan.objective = plan_objective(plan, s1b, s2b);
  MixPlan refined = plan;
  if (joint_refine(s1b, s2b, gh, gw, cfg.window_radius, refined)) {
    refined.objective = plan_objective(refined, s1b, s2b);
    if (refined.objective > plan.objective) plan = std::move(refined);
  }
  if (history) history->push_back(plan.objective);
  plan.validate();
  return plan;
}

std::vector<std::vector<int32_t>> enumerate_window_perms(int grid_h, int grid_w,
                                                         int window_radius) {
  const int n = grid_h * grid_w;
  std::vector<std::vector<int32_t>> out;
  std::vector<int32_t> cur(size_t(n), -1);
  std::vector<uint8_t> used(size_t(n), 0);
  // lexicographic backtracking over destination slots
  auto rec = [&](auto&& self, int d) -> void {
    if (d == n) {
      out.push_back(cur);
      return;
    }
    for (int s = 0; s < n; ++s) {
      if (used[size_t(s)] || !window_ok(d, s, grid_w, window_radius)) continue;
      used[size_t(s)] = 1;
      cur[size_t(d)] = s;
      self(self, d + 1);
      used[size_t(s)] = 0;
    }
  };
  rec(rec, 0);
  return out;
}

MixPlan exhaustive_mix_plan(const SaliencyMap& s1, const SaliencyMap& s2,
                            const MixSearchConfig& cfg) {
  check(s1.h == s2.h && s1.w == s2.w, "mix plan: saliency size mismatch");
  const auto s1b = block_sums(s1, cfg.block_size);
  const auto s2b = block_sums(s2, cfg.block_size);
  const int gh = s1.h / cfg.block_size, gw = s1.w / cfg.block_size;
  const int n = gh * gw;
  check(n <= 9, "exhaustive_mix_plan: ", n, " blocks exceed the brute-force limit of 9");
  const auto perms = enumerate_window_perms(gh, gw, cfg.window_radius);
  // The objective splits over z: each source's transport only matters on the
  // destinations that source owns, so the two permutations maximize
  // independently for a fixed z.
  auto best_perm = [&](const std::vector<double>& sums, uint32_t owned) {
    size_t best = 0;
    double best_val = -1.0;
    for (size_t i = 0; i < perms.size(); ++i) {
      double val = 0.0;
      for (int d = 0; d < n; ++d)
        if (owned >> d & 1u) val += sums[size_t(perms[i][size_t(d)])];
      if (val > best_val) {
        best_val = val;
        best = i;
      }
    }
    return std::pair<size_t, double>(best, best_val);
  };
  MixPlan best_plan = MixPlan::identity(cfg.block_size, gh, gw);
  double best_total = -1.0;
  for (uint32_t zbits = 0; zbits < (1u << n); ++zbits) {
    const auto [i1, v1] = best_perm(s1b, ~zbits);
    const auto [i2, v2] = best_perm(s2b, zbits);
    if (v1 + v2 > best_total) {
      best_total = v1 + v2;
      for (int d = 0; d < n; ++d) best_plan.z[size_t(d)] = uint8_t(zbits >> d & 1u);
      best_plan.pi1 = perms[i1];
      best_plan.pi2 = perms[i2];
    }
  }
  best_plan.objective = plan_objective(best_plan, s1b, s2b);
  best_plan.validate();
  return best_plan;
}

Tensor apply_mix(const MixPlan& plan, const Tensor& a1, const Tensor& a2) {
  check(a1.shape == a2.shape, "apply_mix: shape mismatch ", shape_str(a1.shape), " vs ",
        shape_str(a2.shape));
  check(a1.shape.size() == 3, "apply_mix: tensors must be [C,H,W]");
  check(plan.height() == a1.shape[1] && plan.width() == a1.shape[2],
        "apply_mix: plan covers ", plan.height(), "x", plan.width(), ", input is ",
        shape_str(a1.shape));
  const auto table = plan.gather_table();
  const int64_t hw = int64_t(a1.shape[1]) * a1.shape[2];
  Tensor out(a1.shape);
  for (int c = 0; c < a1.shape[0]; ++c)
    for (int64_t p = 0; p < hw; ++p) {
      const int32_t e = table[size_t(p)];
      out.data[c * hw + p] = e < hw ? a1.data[c * hw + e] : a2.data[c * hw + (e - hw)];
    }
  return out;
}

ScribbleLabel apply_mix(const MixPlan& plan, const ScribbleLabel& a1, const ScribbleLabel& a2) {
  check(a1.h == a2.h && a1.w == a2.w && a1.num_classes == a2.num_classes,
        "apply_mix: label geometry mismatch");
  check(plan.height() == a1.h && plan.width() == a1.w, "apply_mix: plan covers ", plan.height(),
        "x", plan.width(), ", labels are ", a1.h, "x", a1.w);
  const auto table = plan.gather_table();
  const int64_t hw = int64_t(a1.h) * a1.w;
  ScribbleLabel out(a1.num_classes, a1.h, a1.w);
  for (int64_t p = 0; p < hw; ++p) {
    const int32_t e = table[size_t(p)];
    out.cls[size_t(p)] = e < hw ? a1.cls[size_t(e)] : a2.cls[size_t(e - hw)];
  }
  return out;
}

// ---- occlusion --------------------------------------------------------------

OcclusionMask rasterize_occlusion(int h, int w, double cx, double cy, double side,
                                  double angle) {
  OcclusionMask m = OcclusionMask::none(h, w);
  m.center_x = cx;
  m.center_y = cy;
  m.side = side;
  m.angle = angle;
  if (side <= 0.0) return m;
  const double c = std::cos(angle), s = std::sin(angle);
  const double half = side / 2.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = (x + 0.5) - cx;
      const double dy = (y + 0.5) - cy;
      const double u = dx * c + dy * s;
      const double v = -dx * s + dy * c;
      if (std::abs(u) <= half && std::abs(v) <= half) m.raster[size_t(y) * w + x] = 1;
    }
  return m;
}

OcclusionMask sample_occlusion(RngStream& rng, int h, int w, double side_frac) {
  check(side_frac > 0.0 && side_frac < 1.0, "occlusion: side_frac ", side_frac,
        " outside (0,1)");
  const double side = std::round(side_frac * std::min(h, w));
  const double cx = rng.uniform(0.0, double(w));
  const double cy = rng.uniform(0.0, double(h));
  const double angle = rng.uniform(0.0, M_PI);
  return rasterize_occlusion(h, w, cx, cy, side, angle);
}

Tensor apply_occlusion(const OcclusionMask& mask, const Tensor& x) {
  check(x.shape.size() == 3 && x.shape[1] == mask.h && x.shape[2] == mask.w,
        "occlusion: mask ", mask.h, "x", mask.w, " does not cover ", shape_str(x.shape));
  Tensor out = x;
  const int64_t hw = int64_t(mask.h) * mask.w;
  for (int c = 0; c < x.shape[0]; ++c)
    for (int64_t p = 0; p < hw; ++p)
      if (mask.raster[size_t(p)]) out.data[c * hw + p] = 0.0f;
  return out;
}

ScribbleLabel apply_occlusion(const OcclusionMask& mask, const ScribbleLabel& y,
                              OcclusionLabelPolicy policy) {
  check(y.h == mask.h && y.w == mask.w, "occlusion: mask does not cover label");
  ScribbleLabel out = y;
  for (size_t p = 0; p < out.cls.size(); ++p)
    if (mask.raster[p])
      out.cls[p] = policy == OcclusionLabelPolicy::kBackground ? uint8_t(0) : kUnlabeled;
  return out;
}

SoftTarget apply_occlusion(const OcclusionMask& mask, const SoftTarget& y,
                           OcclusionLabelPolicy policy) {
  check(y.h == mask.h && y.w == mask.w, "occlusion: mask does not cover target");
  SoftTarget out(y.num_classes, y.h, y.w);
  for (size_t i = 0; i < y.entries(); ++i)
    if (!mask.raster[size_t(y.pix[i])]) out.add(y.pix[i], y.cls[i], y.wgt[i]);
  if (policy == OcclusionLabelPolicy::kBackground)
    for (int32_t p = 0; p < int32_t(mask.raster.size()); ++p)
      if (mask.raster[size_t(p)]) out.add(p, 0, 1.0f);
  return out;
}

// ---- alternate strategies ----------------------------------------------------

MixupResult apply_mixup(double lambda, const Tensor& x1, const ScribbleLabel& y1,
                        const Tensor& x2, const ScribbleLabel& y2) {
  check(x1.shape == x2.shape, "mixup: image shape mismatch");
  check(y1.h == y2.h && y1.w == y2.w && y1.num_classes == y2.num_classes,
        "mixup: label geometry mismatch");
  MixupResult r;
  r.lambda = lambda;
  r.image = Tensor(x1.shape);
  for (size_t i = 0; i < x1.data.size(); ++i)
    r.image.data[i] = float(lambda * x1.data[i] + (1.0 - lambda) * x2.data[i]);
  r.target = SoftTarget(y1.num_classes, y1.h, y1.w);
  const float w1 = float(lambda), w2 = float(1.0 - lambda);
  for (int32_t p = 0; p < int32_t(y1.cls.size()); ++p) {
    const uint8_t c1 = y1.cls[size_t(p)], c2 = y2.cls[size_t(p)];
    if (c1 != kUnlabeled && c2 != kUnlabeled && c1 == c2) {
      r.target.add(p, c1, w1 + w2);
      continue;
    }
    if (c1 != kUnlabeled && w1 > 0.0f) r.target.add(p, c1, w1);
    if (c2 != kUnlabeled && w2 > 0.0f) r.target.add(p, c2, w2);
  }
  return r;
}

MixupResult mixup_linear(RngStream& rng, const Tensor& x1, const ScribbleLabel& y1,
                         const Tensor& x2, const ScribbleLabel& y2, double alpha) {
  check(alpha > 0.0, "mixup: alpha must be positive, got ", alpha);
  return apply_mixup(rng.beta(alpha, alpha), x1, y1, x2, y2);
}

std::vector<int32_t> cutmix_table(int h, int w, const CutRect& rect) {
  check(rect.x0 >= 0 && rect.y0 >= 0 && rect.w >= 0 && rect.h >= 0 &&
            rect.x0 + rect.w <= w && rect.y0 + rect.h <= h,
        "cutmix: rectangle out of bounds");
  const int64_t hw = int64_t(h) * w;
  std::vector<int32_t> table(static_cast<size_t>(hw));
  for (int32_t p = 0; p < hw; ++p) table[size_t(p)] = p;
  for (int y = rect.y0; y < rect.y0 + rect.h; ++y)
    for (int x = rect.x0; x < rect.x0 + rect.w; ++x)
      table[size_t(y) * w + x] = int32_t(hw + y * w + x);
  return table;
}

CutmixResult apply_cutmix(const CutRect& rect, const Tensor& x1, const ScribbleLabel& y1,
                          const Tensor& x2, const ScribbleLabel& y2) {
  check(x1.shape == x2.shape, "cutmix: image shape mismatch");
  check(y1.h == y2.h && y1.w == y2.w && y1.num_classes == y2.num_classes,
        "cutmix: label geometry mismatch");
  const int h = y1.h, w = y1.w;
  const auto table = cutmix_table(h, w, rect);
  const int64_t hw = int64_t(h) * w;
  CutmixResult r;
  r.rect = rect;
  r.image = Tensor(x1.shape);
  for (int c = 0; c < x1.shape[0]; ++c)
    for (int64_t p = 0; p < hw; ++p) {
      const int32_t e = table[size_t(p)];
      r.image.data[c * hw + p] = e < hw ? x1.data[c * hw + e] : x2.data[c * hw + (e - hw)];
    }
  r.label = ScribbleLabel(y1.num_classes, h, w);
  for (int64_t p = 0; p < hw; ++p) {
    const int32_t e = table[size_t(p)];
    r.label.cls[size_t(p)] = e < hw ? y1.cls[size_t(e)] : y2.cls[size_t(e - hw)];
  }
  return r;
}

CutmixResult cutmix(RngStream& rng, const Tensor& x1, const ScribbleLabel& y1, const Tensor& x2,
                    const ScribbleLabel& y2) {
  const int h = y1.h, w = y1.w;
  const double frac = rng.uniform(0.1, 0.5);
  CutRect rect;
  rect.w = int(std::round(std::sqrt(frac) * w));
  rect.h = int(std::round(std::sqrt(frac) * h));
  rect.x0 = int(rng.next_below(uint64_t(w - rect.w + 1)));
  rect.y0 = int(rng.next_below(uint64_t(h - rect.h + 1)));
  return apply_cutmix(rect, x1, y1, x2, y2);
}

// ---- plan text serialization -------------------------------------------------

void write_plan(std::ostream& os, const MixPlan& plan) {
  plan.validate();
  os << "block_size " << plan.block_size << "\n";
  os << "grid " << plan.grid_h << " " << plan.grid_w << "\n";
  os << "z\n";
  for (int y = 0; y < plan.grid_h; ++y) {
    for (int x = 0; x < plan.grid_w; ++x)
      os << (x ? " " : "") << int(plan.z[size_t(y) * plan.grid_w + x]);
    os << "\n";
  }
  os << "pi1\n";
  for (int i = 0; i < plan.blocks(); ++i) os << (i ? " " : "") << plan.pi1[size_t(i)];
  os << "\npi2\n";
  for (int i = 0; i < plan.blocks(); ++i) os << (i ? " " : "") << plan.pi2[size_t(i)];
  os << "\nobjective " << std::fixed << std::setprecision(6) << plan.objective << "\n";
}

std::string plan_to_string(const MixPlan& plan) {
  std::ostringstream os;
  write_plan(os, plan);
  return os.str();
}

MixPlan read_plan(std::istream& is) {
  MixPlan plan;
  std::string tok;
  auto expect = [&](const char* word) {
    is >> tok;
    check(bool(is) && tok == word, "mix plan: expected \"", word, "\", got \"", tok, "\"");
  };
  expect("block_size");
  is >> plan.block_size;
  expect("grid");
  is >> plan.grid_h >> plan.grid_w;
  check(bool(is) && plan.block_size > 0 && plan.grid_h > 0 && plan.grid_w > 0,
        "mix plan: bad geometry");
  const int n = plan.blocks();
  expect("z");
  plan.z.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    int v;
    is >> v;
    check(bool(is) && (v == 0 || v == 1), "mix plan: bad z entry");
    plan.z[size_t(i)] = uint8_t(v);
  }
  expect("pi1");
  plan.pi1.resize(size_t(n));
  for (int i = 0; i < n; ++i) is >> plan.pi1[size_t(i)];
  expect("pi2");
  plan.pi2.resize(size_t(n));
  for (int i = 0; i < n; ++i) is >> plan.pi2[size_t(i)];
  expect("objective");
  is >> plan.objective;
  check(bool(is), "mix plan: truncated file");
  plan.validate();
  return plan;
}

}  // namespace scribblemix
