#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "scribblemix/tensor.hpp"

namespace scribblemix {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t worst_coord = -1;
  double ad_at_worst = 0.0;
  double fd_at_worst = 0.0;
};

// Central-difference check of an analytic gradient. `f(x, grad_out)` returns the
// scalar value and, when grad_out != nullptr, writes d(value)/dx into it.
// Coordinates flagged in `skip` are left out (useful near relu kinks, where the
// two-sided difference straddles the non-differentiable point).
template <typename T, typename F>
GradCheckResult finite_diff_gradcheck(F&& f, const TensorT<T>& x, T step,
                                      const std::vector<uint8_t>* skip = nullptr) {
  std::vector<T> g_ad(x.data.size(), T(0));
  f(x, &g_ad);
  GradCheckResult r;
  TensorT<T> xp = x;
  for (size_t i = 0; i < x.data.size(); ++i) {
    if (skip && (*skip)[i]) continue;
    const T orig = xp.data[i];
    xp.data[i] = orig + step;
    const double fp = double(f(xp, nullptr));
    xp.data[i] = orig - step;
    const double fm = double(f(xp, nullptr));
    xp.data[i] = orig;
    const double fd = (fp - fm) / (2.0 * double(step));
    const double rel = std::abs(double(g_ad[i]) - fd) / (std::abs(fd) + 1e-8);
    if (rel > r.max_rel_err) {
      r.max_rel_err = rel;
      r.worst_coord = int64_t(i);
      r.ad_at_worst = double(g_ad[i]);
      r.fd_at_worst = fd;
    }
  }
  return r;
}

}  // namespace scribblemix
