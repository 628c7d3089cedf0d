#pragma once

#include <vector>

#include "scribblemix/labels.hpp"
#include "scribblemix/rng.hpp"
#include "scribblemix/tensor.hpp"

namespace scribblemix {

// Default per-class scribble coverage fractions (background, RV, MYO, LV).
inline const std::vector<double> kDefaultCoverage{0.034, 0.277, 0.313, 0.241};

struct RawSample {
  Tensor image;  // [1,size,size], un-normalized intensities
  DenseMask mask;
};

// Concentric cardiac-style rings: class 3 inner disk, class 2 annulus around
// it, class 1 a crescent hugging the annulus, class 0 background. Intensities
// get per-class means, a low-frequency bias field, and Gaussian noise.
RawSample gen_rings_sample(RngStream rng, int size, int num_classes = 4);

// Connected curvilinear scribble per class, grown by a direction-persistent
// random walk inside the 1-pixel-eroded class region until the class's
// labeled fraction reaches its target. `warned` reports targets that had to
// shrink to what the eroded region could hold.
ScribbleLabel gen_scribble(const DenseMask& mask, RngStream rng,
                           const std::vector<double>& coverage_targets,
                           bool* warned = nullptr);

// (x - mean) / std over all pixels; zero variance is an error.
Tensor normalize_image(const Tensor& raw);

}  // namespace scribblemix
