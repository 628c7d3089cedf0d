#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "scribblemix/common.hpp"
#include "scribblemix/tensor.hpp"

namespace scribblemix {

// Adam with bias correction; one slot pair per registered parameter tensor.
class Adam {
 public:
  explicit Adam(float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Parameters must be registered once, in a fixed order, before stepping.
  int register_param(size_t numel) {
    m_.emplace_back(numel, 0.0f);
    v_.emplace_back(numel, 0.0f);
    return int(m_.size()) - 1;
  }

  // Applies one update to `param` using `grad`; `slot` is the registration id.
  void step_param(int slot, std::vector<float>& param, const std::vector<float>& grad) {
    check(slot >= 0 && slot < int(m_.size()), "adam: bad slot ", slot);
    check(param.size() == m_[slot].size(), "adam: slot ", slot, " registered for ",
          m_[slot].size(), " values, got ", param.size());
    check(grad.size() == param.size(), "adam: grad/param length mismatch");
    auto& m = m_[slot];
    auto& v = v_[slot];
    const float bc1 = 1.0f - std::pow(beta1_, float(t_));
    const float bc2 = 1.0f - std::pow(beta2_, float(t_));
    for (size_t i = 0; i < param.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0f - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0f - beta2_) * grad[i] * grad[i];
      const float mh = m[i] / bc1;
      const float vh = v[i] / bc2;
      param[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }

  // Call once per optimization step, before the step_param calls for that step.
  void begin_step() { ++t_; }

  int64_t steps_taken() const { return t_; }
  float lr() const { return lr_; }

 private:
  float lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace scribblemix
