#include "scribblemix/rings.hpp"

#include <algorithm>
#include <cmath>

#include "scribblemix/losses.hpp"

namespace scribblemix {

namespace {

// Intensity layout: means far enough apart that the noise keeps classes
// statistically separable (gap >= 0.5 sigma) but close enough that plain
// scribble supervision leaves room for the consistency losses to help.
constexpr double kClassMean[4] = {0.25, 0.50, 0.70, 0.90};
constexpr double kMeanJitter = 0.04;
constexpr double kNoiseSigma = 0.20;

}  // namespace

RawSample gen_rings_sample(RngStream rng, int size, int num_classes) {
  check(size >= 32 && size % 4 == 0, "rings: size ", size, " must be >= 32 and divisible by 4");
  check(num_classes == 4, "rings: generator draws 4 classes, got K=", num_classes);
  const double cx = size / 2.0 + rng.uniform(-0.1, 0.1) * size;
  const double cy = size / 2.0 + rng.uniform(-0.1, 0.1) * size;
  const double r1 = rng.uniform(0.09, 0.13) * size;
  const double r2 = r1 + rng.uniform(0.065, 0.095) * size;
  const double phi = rng.uniform(0.0, 2.0 * M_PI);
  const double rv_d = rng.uniform(0.85, 1.0) * r2;
  const double rv_r = rng.uniform(0.55, 0.72) * r2;
  const double rvx = cx + rv_d * std::cos(phi);
  const double rvy = cy + rv_d * std::sin(phi);

  RawSample s;
  s.mask = DenseMask(num_classes, size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double dc = std::hypot(px - cx, py - cy);
      uint8_t c = 0;
      if (dc < r1)
        c = 3;
      else if (dc < r2)
        c = 2;
      else if (std::hypot(px - rvx, py - rvy) < rv_r)
        c = 1;
      s.mask.set(y, x, c);
    }
  // border clipping can shave the crescent into slivers; keep each class one
  // 4-connected piece
  s.mask = largest_cc_mask(s.mask.cls, num_classes, size, size);

  double mean[4];
  for (int k = 0; k < 4; ++k) mean[k] = kClassMean[k] + rng.uniform(-kMeanJitter, kMeanJitter);
  const double amp = rng.uniform(0.10, 0.22);
  const double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5);
  const double phx = rng.uniform(0.0, 1.0), phy = rng.uniform(0.0, 1.0);

  s.image = Tensor({1, size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double bias = amp * std::cos(2.0 * M_PI * (fx * x / size + phx)) *
                          std::cos(2.0 * M_PI * (fy * y / size + phy));
      const double v = mean[s.mask.at(y, x)] + bias + kNoiseSigma * rng.normal();
      s.image.data[size_t(y) * size + x] = float(v);
    }
  return s;
}

namespace {

std::vector<int32_t> eroded_region(const DenseMask& mask, uint8_t k) {
  std::vector<int32_t> out;
  const int h = mask.h, w = mask.w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (mask.at(y, x) != k) continue;
      if (y == 0 || y + 1 == h || x == 0 || x + 1 == w) continue;
      if (mask.at(y - 1, x) == k && mask.at(y + 1, x) == k && mask.at(y, x - 1) == k &&
          mask.at(y, x + 1) == k)
        out.push_back(int32_t(y) * w + x);
    }
  return out;
}

}  // namespace

ScribbleLabel gen_scribble(const DenseMask& mask, RngStream rng,
                           const std::vector<double>& coverage_targets, bool* warned) {
  mask.validate();
  check(int(coverage_targets.size()) == mask.num_classes, "scribble: expected ",
        mask.num_classes, " coverage targets, got ", coverage_targets.size());
  if (warned) *warned = false;
  const int h = mask.h, w = mask.w;
  ScribbleLabel out(mask.num_classes, h, w);
  constexpr int kDx[4] = {1, -1, 0, 0};
  constexpr int kDy[4] = {0, 0, 1, -1};
  for (uint8_t k = 0; k < uint8_t(mask.num_classes); ++k) {
    int64_t region = 0;
    for (uint8_t c : mask.cls) region += (c == k);
    check(region > 0, "scribble: class ", int(k), " missing from mask");
    const auto eroded = eroded_region(mask, k);
    int64_t target = std::max<int64_t>(1, std::llround(coverage_targets[k] * double(region)));
    if (target > int64_t(eroded.size())) {
      target = int64_t(eroded.size());
      if (warned) *warned = true;
    }
    if (target == 0) continue;
    std::vector<uint8_t> inside(size_t(h) * w, 0);
    for (int32_t p : eroded) inside[size_t(p)] = 1;
    RngStream walk = rng.derive(k);
    int32_t cur = eroded[size_t(walk.next_below(eroded.size()))];
    out.cls[size_t(cur)] = k;
    int64_t labeled = 1;
    int dir = int(walk.next_below(4));
    // direction-persistent walk; revisits keep it connected without recount
    const int64_t step_budget = 80 * target + 400;
    for (int64_t step = 0; step < step_budget && labeled < target; ++step) {
      if (walk.next_double() >= 0.7) dir = int(walk.next_below(4));
      const int x = cur % w + kDx[dir], y = cur / w + kDy[dir];
      if (x < 0 || x >= w || y < 0 || y >= h || !inside[size_t(y) * w + x]) {
        dir = int(walk.next_below(4));
        continue;
      }
      cur = int32_t(y) * w + x;
      if (out.cls[size_t(cur)] != k) {
        out.cls[size_t(cur)] = k;
        ++labeled;
      }
    }
    if (labeled < target && warned) *warned = true;
  }
  out.validate();
  return out;
}

Tensor normalize_image(const Tensor& raw) {
  check(raw.numel() > 0, "normalize: empty image");
  double sum = 0.0, sq = 0.0;
  for (float v : raw.data) {
    sum += v;
    sq += double(v) * v;
  }
  const double n = double(raw.numel());
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  check(var > 1e-20, "normalize: zero variance image");
  const double inv = 1.0 / std::sqrt(var);
  Tensor out(raw.shape);
  for (size_t i = 0; i < raw.data.size(); ++i)
    out.data[i] = float((raw.data[i] - mean) * inv);
  return out;
}

}  // namespace scribblemix
