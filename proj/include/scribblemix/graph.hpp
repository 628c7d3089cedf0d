#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "scribblemix/common.hpp"
#include "scribblemix/kernels.hpp"
#include "scribblemix/labels.hpp"
#include "scribblemix/mixplan.hpp"
#include "scribblemix/tensor.hpp"

namespace scribblemix {

constexpr double kCeEps = 1e-12;

// Define-by-run tape. Values are computed eagerly when an op node is created;
// insertion order doubles as the topological order, so one reverse sweep in
// backward() visits every reachable node exactly once. Instantiated with
// T=float for training and T=double for the gradient-check mode.
template <typename T>
class Graph {
 public:
  enum class Op : uint8_t {
    kLeaf,
    kConv2d,
    kRelu,
    kSoftmaxCh,
    kMaxPool2,
    kUpsample2,
    kConcatCh,
    kAdd,
    kMul,
    kScale,
    kSum,
    kDetach,
    kOcclude,
    kMixGather,
    kSliceCh,
    kPartialCe,
    kNcs,
  };

  struct BackwardOptions {
    bool into_params = true;  // false: skip gradient accumulation into param leaves
  };

  // ---- node creation --------------------------------------------------------

  int leaf(TensorT<T> value, bool requires_grad = false, bool is_param = false) {
    Node n;
    n.op = Op::kLeaf;
    n.t = std::move(value);
    n.requires_grad = requires_grad;
    n.is_param = is_param;
    return push(std::move(n));
  }
  int param(TensorT<T> value) { return leaf(std::move(value), true, true); }
  int constant(TensorT<T> value) { return leaf(std::move(value), false, false); }

  int conv2d(int x, int w, int b) {
    const auto& xt = val(x);
    const auto& wt = val(w);
    const auto& bt = val(b);
    check(xt.shape.size() == 3, "conv2d: input must be [C,H,W], got ", shape_str(xt.shape));
    check(wt.shape.size() == 4, "conv2d: kernel must be [Cout,Cin,k,k], got ",
          shape_str(wt.shape));
    check(wt.shape[2] == wt.shape[3] && (wt.shape[2] == 1 || wt.shape[2] == 3),
          "conv2d: kernel spatial size ", wt.shape[2], "x", wt.shape[3], " unsupported");
    check(wt.shape[1] == xt.shape[0], "conv2d: kernel Cin=", wt.shape[1],
          " does not match input channels=", xt.shape[0]);
    check(bt.shape.size() == 1 && bt.shape[0] == wt.shape[0], "conv2d: bias shape ",
          shape_str(bt.shape), " does not match Cout=", wt.shape[0]);
    Node n;
    n.op = Op::kConv2d;
    n.in = {x, w, b};
    n.conv = kernels::ConvDims{xt.shape[0], wt.shape[0], xt.shape[1], xt.shape[2], wt.shape[2]};
    n.t = TensorT<T>({wt.shape[0], xt.shape[1], xt.shape[2]});
    kernels::conv2d_forward(xt.data.data(), wt.data.data(), bt.data.data(), n.t.data.data(),
                            n.conv, scratch_);
    return push_with_grad_flag(std::move(n));
  }

  int relu(int x) {
    Node n;
    n.op = Op::kRelu;
    n.in = {x, -1, -1};
    n.t = TensorT<T>(val(x).shape);
    const auto& xd = val(x).data;
    for (size_t i = 0; i < xd.size(); ++i) n.t.data[i] = xd[i] > T(0) ? xd[i] : T(0);
    return push_with_grad_flag(std::move(n));
  }

  int channel_softmax(int x) {
    const auto& xt = val(x);
    check(xt.shape.size() == 3, "channel_softmax: input must be [K,H,W], got ",
          shape_str(xt.shape));
    check(xt.shape[0] >= 2, "channel_softmax: K=", xt.shape[0], " < 2");
    const int k = xt.shape[0];
    const int64_t hw = int64_t(xt.shape[1]) * xt.shape[2];
    Node n;
    n.op = Op::kSoftmaxCh;
    n.in = {x, -1, -1};
    n.t = TensorT<T>(xt.shape);
    for (int64_t p = 0; p < hw; ++p) {
      T m = xt.data[p];
      for (int c = 1; c < k; ++c) m = std::max(m, xt.data[c * hw + p]);
      T s = T(0);
      for (int c = 0; c < k; ++c) {
        const T e = std::exp(xt.data[c * hw + p] - m);
        n.t.data[c * hw + p] = e;
        s += e;
      }
      const T inv = T(1) / s;
      for (int c = 0; c < k; ++c) n.t.data[c * hw + p] *= inv;
    }
    return push_with_grad_flag(std::move(n));
  }

  int maxpool2(int x) {
    const auto& xt = val(x);
    check(xt.shape.size() == 3, "maxpool2: input must be [C,H,W]");
    const int c = xt.shape[0], h = xt.shape[1], w = xt.shape[2];
    check(h % 2 == 0 && w % 2 == 0, "maxpool2: extents ", h, "x", w, " not even");
    Node n;
    n.op = Op::kMaxPool2;
    n.in = {x, -1, -1};
    n.t = TensorT<T>({c, h / 2, w / 2});
    n.idx.resize(n.t.data.size());
    const int oh = h / 2, ow = w / 2;
    for (int ci = 0; ci < c; ++ci) {
      const T* src = xt.data.data() + static_cast<size_t>(ci) * h * w;
      T* dst = n.t.data.data() + static_cast<size_t>(ci) * oh * ow;
      int32_t* ids = n.idx.data() + static_cast<size_t>(ci) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        for (int x2 = 0; x2 < ow; ++x2) {
          // scan order within the window; first max wins on ties
          const int base = (2 * y) * w + 2 * x2;
          int best = base;
          T bv = src[base];
          const int cand[3] = {base + 1, base + w, base + w + 1};
          for (int t = 0; t < 3; ++t)
            if (src[cand[t]] > bv) {
              bv = src[cand[t]];
              best = cand[t];
            }
          dst[y * ow + x2] = bv;
          ids[y * ow + x2] = static_cast<int32_t>(ci * h * w + best);
        }
      }
    }
    return push_with_grad_flag(std::move(n));
  }

  int upsample2_nearest(int x) {
    const auto& xt = val(x);
    check(xt.shape.size() == 3, "upsample2_nearest: input must be [C,H,W]");
    const int c = xt.shape[0], h = xt.shape[1], w = xt.shape[2];
    Node n;
    n.op = Op::kUpsample2;
    n.in = {x, -1, -1};
    n.t = TensorT<T>({c, 2 * h, 2 * w});
    for (int ci = 0; ci < c; ++ci) {
      const T* src = xt.data.data() + static_cast<size_t>(ci) * h * w;
      T* dst = n.t.data.data() + static_cast<size_t>(ci) * 4 * h * w;
      for (int y = 0; y < 2 * h; ++y)
        for (int x2 = 0; x2 < 2 * w; ++x2) dst[y * 2 * w + x2] = src[(y / 2) * w + x2 / 2];
    }
    return push_with_grad_flag(std::move(n));
  }

  int concat_channels(int a, int b) {
    const auto& at = val(a);
    const auto& bt = val(b);
    check(at.shape.size() == 3 && bt.shape.size() == 3, "concat_channels: inputs must be [C,H,W]");
    check(at.shape[1] == bt.shape[1] && at.shape[2] == bt.shape[2],
          "concat_channels: spatial mismatch ", shape_str(at.shape), " vs ", shape_str(bt.shape));
    Node n;
    n.op = Op::kConcatCh;
    n.in = {a, b, -1};
    n.t = TensorT<T>({at.shape[0] + bt.shape[0], at.shape[1], at.shape[2]});
    std::copy(at.data.begin(), at.data.end(), n.t.data.begin());
    std::copy(bt.data.begin(), bt.data.end(), n.t.data.begin() + at.data.size());
    return push_with_grad_flag(std::move(n));
  }

  int add(int a, int b) {
    const auto& at = val(a);
    const auto& bt = val(b);
    check(at.shape == bt.shape, "add: shape mismatch ", shape_str(at.shape), " vs ",
          shape_str(bt.shape));
    Node n;
    n.op = Op::kAdd;
    n.in = {a, b, -1};
    n.t = TensorT<T>(at.shape);
    for (size_t i = 0; i < at.data.size(); ++i) n.t.data[i] = at.data[i] + bt.data[i];
    return push_with_grad_flag(std::move(n));
  }

  int mul(int a, int b) {
    const auto& at = val(a);
    const auto& bt = val(b);
    check(at.shape == bt.shape, "mul: shape mismatch ", shape_str(at.shape), " vs ",
          shape_str(bt.shape));
    Node n;
    n.op = Op::kMul;
    n.in = {a, b, -1};
    n.t = TensorT<T>(at.shape);
    for (size_t i = 0; i < at.data.size(); ++i) n.t.data[i] = at.data[i] * bt.data[i];
    return push_with_grad_flag(std::move(n));
  }

  int scale(int a, T c) {
    Node n;
    n.op = Op::kScale;
    n.in = {a, -1, -1};
    n.c = c;
    n.t = TensorT<T>(val(a).shape);
    const auto& ad = val(a).data;
    for (size_t i = 0; i < ad.size(); ++i) n.t.data[i] = c * ad[i];
    return push_with_grad_flag(std::move(n));
  }

  int sum(int a) {
    Node n;
    n.op = Op::kSum;
    n.in = {a, -1, -1};
    n.t = TensorT<T>({1});
    double s = 0.0;
    for (T v : val(a).data) s += double(v);
    n.t.data[0] = static_cast<T>(s);
    return push_with_grad_flag(std::move(n));
  }

  int detach(int a) {
    Node n;
    n.op = Op::kDetach;
    n.in = {a, -1, -1};
    n.t = val(a);
    n.t.grad.clear();
    n.requires_grad = false;
    return push(std::move(n));
  }

  // Zeroes all channels at masked pixels; mask is h*w with 1 = occluded.
  int occlude(int x, std::vector<uint8_t> mask) {
    const auto& xt = val(x);
    check(xt.shape.size() == 3, "occlude: input must be [C,H,W]");
    const int64_t hw = int64_t(xt.shape[1]) * xt.shape[2];
    check(int64_t(mask.size()) == hw, "occlude: mask size ", mask.size(), " != H*W=", hw);
    Node n;
    n.op = Op::kOcclude;
    n.in = {x, -1, -1};
    n.mask = std::move(mask);
    n.t = TensorT<T>(xt.shape);
    for (int c = 0; c < xt.shape[0]; ++c)
      for (int64_t p = 0; p < hw; ++p)
        n.t.data[c * hw + p] = n.mask[p] ? T(0) : xt.data[c * hw + p];
    return push_with_grad_flag(std::move(n));
  }

  // Per-pixel two-source gather: table[p] encodes src*H*W + source pixel, where
  // src is 0 for a and 1 for b. All channels of an output pixel follow the table.
  int pixel_select(int a, int b, std::vector<int32_t> table) {
    const auto& at = val(a);
    const auto& bt = val(b);
    check(at.shape == bt.shape, "pixel_select: shape mismatch ", shape_str(at.shape), " vs ",
          shape_str(bt.shape));
    check(at.shape.size() == 3, "pixel_select: inputs must be [C,H,W]");
    const int64_t hw = int64_t(at.shape[1]) * at.shape[2];
    check(int64_t(table.size()) == hw, "pixel_select: table size ", table.size(),
          " != H*W=", hw);
    for (int32_t e : table)
      check(e >= 0 && e < 2 * hw, "pixel_select: table entry ", e, " out of range");
    Node n;
    n.op = Op::kMixGather;
    n.in = {a, b, -1};
    n.idx = std::move(table);
    n.t = TensorT<T>(at.shape);
    for (int c = 0; c < at.shape[0]; ++c)
      for (int64_t p = 0; p < hw; ++p) {
        const int32_t e = n.idx[p];
        n.t.data[c * hw + p] =
            e < hw ? at.data[c * hw + e] : bt.data[c * hw + (e - hw)];
      }
    return push_with_grad_flag(std::move(n));
  }

  // Differentiable mix: channels follow the plan's per-pixel block gather.
  int mix_gather(int a, int b, const MixPlan& plan) {
    const auto& at = val(a);
    check(at.shape.size() == 3, "mix_gather: inputs must be [C,H,W]");
    check(plan.height() == at.shape[1] && plan.width() == at.shape[2],
          "mix_gather: plan covers ", plan.height(), "x", plan.width(), ", input is ",
          shape_str(at.shape));
    return pixel_select(a, b, plan.gather_table());
  }

  // Channels [c0, c1) of a [C,H,W] tensor.
  int slice_channels(int a, int c0, int c1) {
    const auto& at = val(a);
    check(at.shape.size() == 3, "slice_channels: input must be [C,H,W]");
    check(0 <= c0 && c0 < c1 && c1 <= at.shape[0], "slice_channels: bad range [", c0, ",", c1,
          ") for C=", at.shape[0]);
    Node n;
    n.op = Op::kSliceCh;
    n.in = {a, -1, -1};
    n.c = static_cast<T>(c0);
    n.t = TensorT<T>({c1 - c0, at.shape[1], at.shape[2]});
    const int64_t hw = int64_t(at.shape[1]) * at.shape[2];
    std::copy(at.data.begin() + c0 * hw, at.data.begin() + c1 * hw, n.t.data.begin());
    return push_with_grad_flag(std::move(n));
  }

  // -sum_{i in Omega_L} sum_k y[i,k] log(pred[i,k] + eps)
  int partial_ce(int pred, const SoftTarget& target) {
    const auto& pt = val(pred);
    check(pt.shape.size() == 3, "partial_ce: pred must be [K,H,W]");
    check(pt.shape[0] == target.num_classes && pt.shape[1] == target.h &&
              pt.shape[2] == target.w,
          "partial_ce: target ", target.num_classes, "x", target.h, "x", target.w,
          " does not match pred ", shape_str(pt.shape));
    const int64_t hw = int64_t(target.h) * target.w;
    Node n;
    n.op = Op::kPartialCe;
    n.in = {pred, -1, -1};
    n.target = target;
    n.t = TensorT<T>({1});
    double s = 0.0;
    for (size_t i = 0; i < target.entries(); ++i) {
      check(target.cls[i] < target.num_classes, "partial_ce: entry class out of range");
      check(target.pix[i] >= 0 && target.pix[i] < hw, "partial_ce: entry pixel out of range");
      const T p = pt.data[static_cast<size_t>(target.cls[i]) * hw + target.pix[i]];
      s -= double(target.wgt[i]) * std::log(double(p) + kCeEps);
    }
    n.t.data[0] = static_cast<T>(s);
    return push_with_grad_flag(std::move(n));
  }
  int partial_ce(int pred, const ScribbleLabel& y) { return partial_ce(pred, to_soft(y)); }

  // Negative cosine similarity of the flattened tensors.
  int ncs(int p, int q) {
    const auto& pt = val(p);
    const auto& qt = val(q);
    check(pt.shape == qt.shape, "ncs: shape mismatch ", shape_str(pt.shape), " vs ",
          shape_str(qt.shape));
    double np, nq, dot;
    ncs_terms(pt.data, qt.data, np, nq, dot);
    check(np > 0.0, "ncs: zero-norm first argument");
    check(nq > 0.0, "ncs: zero-norm second argument");
    Node n;
    n.op = Op::kNcs;
    n.in = {p, q, -1};
    n.t = TensorT<T>({1});
    n.t.data[0] = static_cast<T>(-dot / (np * nq));
    return push_with_grad_flag(std::move(n));
  }

  // ---- access ---------------------------------------------------------------

  size_t size() const { return nodes_.size(); }
  const TensorT<T>& val(int id) const { return nodes_.at(id).t; }
  TensorT<T>& tensor(int id) { return nodes_.at(id).t; }
  const std::vector<T>& grad_of(int id) const { return nodes_.at(id).t.grad; }
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }

  void zero_grads() {
    for (auto& n : nodes_) n.t.zero_grad();
  }

  // ---- reverse sweep --------------------------------------------------------

  void backward(int loss, BackwardOptions opts = {}) {
    check(loss >= 0 && loss < int(nodes_.size()), "backward: bad node id");
    check(nodes_[loss].t.is_scalar(), "backward: loss node is not scalar, shape ",
          shape_str(nodes_[loss].t.shape));
    // mark ancestors of the loss
    std::vector<uint8_t> reach(nodes_.size(), 0);
    std::vector<int> stack{loss};
    reach[loss] = 1;
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      for (int in : nodes_[id].in)
        if (in >= 0 && !reach[in] && nodes_[in].requires_grad) {
          reach[in] = 1;
          stack.push_back(in);
        }
    }
    nodes_[loss].t.ensure_grad();
    nodes_[loss].t.grad[0] += T(1);
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!reach[id] || n.op == Op::kLeaf || n.op == Op::kDetach) continue;
      if (n.t.grad.empty()) continue;  // no gradient flowed into this node
      dispatch_backward(n, opts);
    }
  }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::array<int, 3> in{-1, -1, -1};
    TensorT<T> t;
    bool requires_grad = false;
    bool is_param = false;
    std::vector<int32_t> idx;
    std::vector<uint8_t> mask;
    SoftTarget target;
    T c{};
    kernels::ConvDims conv;
  };

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }
  int push_with_grad_flag(Node n) {
    for (int in : n.in)
      if (in >= 0 && nodes_[in].requires_grad) n.requires_grad = true;
    return push(std::move(n));
  }

  bool wants_grad(int id, const BackwardOptions& opts) const {
    const Node& n = nodes_[id];
    if (!n.requires_grad) return false;
    if (n.is_param && !opts.into_params) return false;
    return true;
  }

  std::vector<T>& gbuf(int id) {
    nodes_[id].t.ensure_grad();
    return nodes_[id].t.grad;
  }

  static void ncs_terms(const std::vector<T>& p, const std::vector<T>& q, double& np, double& nq,
                        double& dot) {
    double sp = 0.0, sq = 0.0, d = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      sp += double(p[i]) * double(p[i]);
      sq += double(q[i]) * double(q[i]);
      d += double(p[i]) * double(q[i]);
    }
    np = std::sqrt(sp);
    nq = std::sqrt(sq);
    dot = d;
  }

  void dispatch_backward(Node& n, const BackwardOptions& opts) {
    const std::vector<T>& g = n.t.grad;
    switch (n.op) {
      case Op::kConv2d: {
        const int x = n.in[0], w = n.in[1], b = n.in[2];
        if (wants_grad(x, opts))
          kernels::conv2d_backward_input(g.data(), nodes_[w].t.data.data(), gbuf(x).data(),
                                         n.conv, scratch_);
        const bool ww = wants_grad(w, opts), wb = wants_grad(b, opts);
        if (ww || wb) {
          // dw and db always land together; a dummy buffer absorbs the unused one
          std::vector<T> dummy_w, dummy_b;
          T* dwp;
          T* dbp;
          if (ww) {
            dwp = gbuf(w).data();
          } else {
            dummy_w.assign(nodes_[w].t.data.size(), T(0));
            dwp = dummy_w.data();
          }
          if (wb) {
            dbp = gbuf(b).data();
          } else {
            dummy_b.assign(nodes_[b].t.data.size(), T(0));
            dbp = dummy_b.data();
          }
          kernels::conv2d_backward_weights(g.data(), nodes_[x].t.data.data(), dwp, dbp, n.conv,
                                           scratch_);
        }
        break;
      }
      case Op::kRelu: {
        if (!wants_grad(n.in[0], opts)) break;
        auto& dx = gbuf(n.in[0]);
        const auto& xd = nodes_[n.in[0]].t.data;
        for (size_t i = 0; i < g.size(); ++i)
          if (xd[i] > T(0)) dx[i] += g[i];
        break;
      }
      case Op::kSoftmaxCh: {
        if (!wants_grad(n.in[0], opts)) break;
        auto& dx = gbuf(n.in[0]);
        const auto& y = n.t.data;
        const int k = n.t.shape[0];
        const int64_t hw = int64_t(n.t.shape[1]) * n.t.shape[2];
        for (int64_t p = 0; p < hw; ++p) {
          double dot = 0.0;
          for (int c = 0; c < k; ++c) dot += double(g[c * hw + p]) * double(y[c * hw + p]);
          for (int c = 0; c < k; ++c)
            dx[c * hw + p] += y[c * hw + p] * (g[c * hw + p] - static_cast<T>(dot));
        }
        break;
      }
      case Op::kMaxPool2: {
        if (!wants_grad(n.in[0], opts)) break;
        auto& dx = gbuf(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) dx[n.idx[i]] += g[i];
        break;
      }
      case Op::kUpsample2: {
        if (!wants_grad(n.in[0], opts)) break;
        auto& dx = gbuf(n.in[0]);
        const int c = n.t.shape[0], oh = n.t.shape[1], ow = n.t.shape[2];
        const int h = oh / 2, w = ow / 2;
        for (int ci = 0; ci < c; ++ci)
          for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x)
              dx[static_cast<size_t>(ci) * h * w + (y / 2) * w + x / 2] +=
                  g[static_cast<size_t>(ci) * oh * ow + y * ow + x];
        break;
      }
      case Op::kConcatCh: {
        const size_t na = nodes_[n.in[0]].t.data.size();
        if (wants_grad(n.in[0], opts)) {
          auto& da = gbuf(n.in[0]);
          for (size_t i = 0; i < na; ++i) da[i] += g[i];
        }
        if (wants_grad(n.in[1], opts)) {
          auto& db = gbuf(n.in[1]);
          for (size_t i = 0; i < db.size(); ++i) db[i] += g[na + i];
        }
        break;
      }
      case Op::kAdd: {
        for (int s = 0; s < 2; ++s)
          if (wants_grad(n.in[s], opts)) {
            auto& d = gbuf(n.in[s]);
            for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
          }
        break;
      }
      case Op::kMul: {
        if (wants_grad(n.in[0], opts)) {
          auto& da = gbuf(n.in[0]);
          const auto& bd = nodes_[n.in[1]].t.data;
          for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bd[i];
        }
        if (wants_grad(n.in[1], opts)) {
          auto& db = gbuf(n.in[1]);
          const auto& ad = nodes_[n.in[0]].t.data;
          for (size_t i = 0; i < g.size(); ++i) db[i] += g[i] * ad[i];
        }
        break;
      }
      case Op::kScale: {
        if (!wants_grad(n.in[0], opts)) break;
        auto& dx = gbuf(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) dx[i] += n.c * g[i];
        break;
      }
      case Op::kSum: {
        if (!wants_grad(n.in[0], opts)) break;
        auto& dx = gbuf(n.in[0]);
        for (size_t i = 0; i < dx.size(); ++i) dx[i] += g[0];
        break;
      }
      case Op::kOcclude: {
        if (!wants_grad(n.in[0], opts)) break;
        auto& dx = gbuf(n.in[0]);
        const int64_t hw = int64_t(n.t.shape[1]) * n.t.shape[2];
        for (int c = 0; c < n.t.shape[0]; ++c)
          for (int64_t p = 0; p < hw; ++p)
            if (!n.mask[p]) dx[c * hw + p] += g[c * hw + p];
        break;
      }
      case Op::kMixGather: {
        const int64_t hw = int64_t(n.t.shape[1]) * n.t.shape[2];
        const bool wa = wants_grad(n.in[0], opts), wb = wants_grad(n.in[1], opts);
        if (!wa && !wb) break;
        for (int c = 0; c < n.t.shape[0]; ++c)
          for (int64_t p = 0; p < hw; ++p) {
            const int32_t e = n.idx[p];
            if (e < hw) {
              if (wa) gbuf(n.in[0])[c * hw + e] += g[c * hw + p];
            } else {
              if (wb) gbuf(n.in[1])[c * hw + (e - hw)] += g[c * hw + p];
            }
          }
        break;
      }
      case Op::kSliceCh: {
        if (!wants_grad(n.in[0], opts)) break;
        auto& dx = gbuf(n.in[0]);
        const int64_t hw = int64_t(n.t.shape[1]) * n.t.shape[2];
        const int64_t off = static_cast<int64_t>(n.c) * hw;
        for (size_t i = 0; i < g.size(); ++i) dx[off + i] += g[i];
        break;
      }
      case Op::kPartialCe: {
        if (!wants_grad(n.in[0], opts)) break;
        auto& dp = gbuf(n.in[0]);
        const auto& pd = nodes_[n.in[0]].t.data;
        const int64_t hw = int64_t(n.target.h) * n.target.w;
        const T gs = g[0];
        for (size_t i = 0; i < n.target.entries(); ++i) {
          const size_t off = static_cast<size_t>(n.target.cls[i]) * hw + n.target.pix[i];
          dp[off] -= gs * static_cast<T>(double(n.target.wgt[i]) / (double(pd[off]) + kCeEps));
        }
        break;
      }
      case Op::kNcs: {
        const auto& pd = nodes_[n.in[0]].t.data;
        const auto& qd = nodes_[n.in[1]].t.data;
        double np, nq, dot;
        ncs_terms(pd, qd, np, nq, dot);
        const T gs = g[0];
        if (wants_grad(n.in[0], opts)) {
          auto& dp = gbuf(n.in[0]);
          const double a = 1.0 / (np * nq), b = dot / (np * np * np * nq);
          for (size_t i = 0; i < pd.size(); ++i)
            dp[i] += gs * static_cast<T>(-double(qd[i]) * a + double(pd[i]) * b);
        }
        if (wants_grad(n.in[1], opts)) {
          auto& dq = gbuf(n.in[1]);
          const double a = 1.0 / (np * nq), b = dot / (nq * nq * nq * np);
          for (size_t i = 0; i < qd.size(); ++i)
            dq[i] += gs * static_cast<T>(-double(pd[i]) * a + double(qd[i]) * b);
        }
        break;
      }
      case Op::kLeaf:
      case Op::kDetach:
        break;
    }
  }

  std::vector<Node> nodes_;
  std::vector<T> scratch_;
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace scribblemix
