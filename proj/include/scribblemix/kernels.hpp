#pragma once

#include <atomic>
#include <cstring>
#include <vector>

#include "scribblemix/common.hpp"

#if defined(__GNUC__) || defined(__clang__)
#define SMX_RESTRICT __restrict__
#else
#define SMX_RESTRICT
#endif

namespace scribblemix::kernels {

// Cross-correlation, stride 1, zero padding (k-1)/2, k in {1,3}.
//
// The serial and OpenMP variants produce bit-identical results: every output
// element is written by exactly one iteration of the parallelized loop, and
// the per-element accumulation order inside the shared channel helpers is
// fixed. Tests assert the equality, the benchmark tool compares throughput.

struct ConvDims {
  int cin = 0, cout = 0, h = 0, w = 0, k = 3;
  int pad() const { return (k - 1) / 2; }
};

inline void validate(const ConvDims& d) {
  check(d.k == 1 || d.k == 3, "conv2d: unsupported kernel size ", d.k, " (expected 1 or 3)");
  check(d.cin > 0 && d.cout > 0 && d.h > 0 && d.w > 0, "conv2d: empty dims");
}

// Runtime switch between the serial reference and the OpenMP kernels.
inline std::atomic<bool>& parallel_flag() {
  static std::atomic<bool> flag{true};
  return flag;
}
inline bool parallel_enabled() { return parallel_flag().load(std::memory_order_relaxed); }
inline void set_parallel(bool on) { parallel_flag().store(on, std::memory_order_relaxed); }

// ---- padding helpers -------------------------------------------------------

// [c][h][w] -> [c][h+2p][w+2p], zero border. p == 0 copies.
template <typename T>
void pad_chw(const T* in, int c, int h, int w, int p, std::vector<T>& out) {
  const int ph = h + 2 * p, pw = w + 2 * p;
  out.assign(static_cast<size_t>(c) * ph * pw, T(0));
  for (int ci = 0; ci < c; ++ci) {
    const T* src = in + static_cast<size_t>(ci) * h * w;
    T* dst = out.data() + static_cast<size_t>(ci) * ph * pw + p * pw + p;
    for (int y = 0; y < h; ++y) std::memcpy(dst + static_cast<size_t>(y) * pw, src + static_cast<size_t>(y) * w, sizeof(T) * w);
  }
}

// ---- per-channel helpers (shared by serial and omp variants) ---------------

namespace detail {

// out[co] over all input channels; in_pad is [cin][h+2p][w+2p].
template <typename T>
void forward_one_cout(const T* SMX_RESTRICT in_pad, const T* SMX_RESTRICT w, T bias,
                      T* SMX_RESTRICT out, const ConvDims& d) {
  const int h = d.h, wd = d.w;
  for (int64_t i = 0; i < int64_t(h) * wd; ++i) out[i] = bias;
  if (d.k == 3) {
    const int pw = wd + 2;
    for (int ci = 0; ci < d.cin; ++ci) {
      const T* SMX_RESTRICT wb = w + static_cast<size_t>(ci) * 9;
      const T w00 = wb[0], w01 = wb[1], w02 = wb[2];
      const T w10 = wb[3], w11 = wb[4], w12 = wb[5];
      const T w20 = wb[6], w21 = wb[7], w22 = wb[8];
      const T* SMX_RESTRICT ip = in_pad + static_cast<size_t>(ci) * (h + 2) * pw;
      for (int y = 0; y < h; ++y) {
        const T* SMX_RESTRICT r0 = ip + static_cast<size_t>(y) * pw;
        const T* SMX_RESTRICT r1 = r0 + pw;
        const T* SMX_RESTRICT r2 = r1 + pw;
        T* SMX_RESTRICT o = out + static_cast<size_t>(y) * wd;
        for (int x = 0; x < wd; ++x) {
          o[x] += w00 * r0[x] + w01 * r0[x + 1] + w02 * r0[x + 2] +
                  w10 * r1[x] + w11 * r1[x + 1] + w12 * r1[x + 2] +
                  w20 * r2[x] + w21 * r2[x + 1] + w22 * r2[x + 2];
        }
      }
    }
  } else {  // k == 1
    for (int ci = 0; ci < d.cin; ++ci) {
      const T wv = w[ci];
      const T* SMX_RESTRICT ip = in_pad + static_cast<size_t>(ci) * h * wd;
      for (int64_t i = 0; i < int64_t(h) * wd; ++i) out[i] += wv * ip[i];
    }
  }
}

// din[ci] from padded dout: full correlation with the flipped kernel.
template <typename T>
void backward_input_one_cin(const T* SMX_RESTRICT dout_pad, const T* SMX_RESTRICT w,
                            T* SMX_RESTRICT din, int ci, const ConvDims& d) {
  const int h = d.h, wd = d.w;
  if (d.k == 3) {
    const int pw = wd + 2;
    for (int co = 0; co < d.cout; ++co) {
      const T* SMX_RESTRICT wb = w + (static_cast<size_t>(co) * d.cin + ci) * 9;
      // flipped taps: din[y][x] += w[2-a][2-b] * dout_pad[y+a][x+b]
      const T w00 = wb[8], w01 = wb[7], w02 = wb[6];
      const T w10 = wb[5], w11 = wb[4], w12 = wb[3];
      const T w20 = wb[2], w21 = wb[1], w22 = wb[0];
      const T* SMX_RESTRICT dp = dout_pad + static_cast<size_t>(co) * (h + 2) * pw;
      for (int y = 0; y < h; ++y) {
        const T* SMX_RESTRICT r0 = dp + static_cast<size_t>(y) * pw;
        const T* SMX_RESTRICT r1 = r0 + pw;
        const T* SMX_RESTRICT r2 = r1 + pw;
        T* SMX_RESTRICT o = din + static_cast<size_t>(y) * wd;
        for (int x = 0; x < wd; ++x) {
          o[x] += w00 * r0[x] + w01 * r0[x + 1] + w02 * r0[x + 2] +
                  w10 * r1[x] + w11 * r1[x + 1] + w12 * r1[x + 2] +
                  w20 * r2[x] + w21 * r2[x + 1] + w22 * r2[x + 2];
        }
      }
    }
  } else {
    for (int co = 0; co < d.cout; ++co) {
      const T wv = w[static_cast<size_t>(co) * d.cin + ci];
      const T* SMX_RESTRICT dp = dout_pad + static_cast<size_t>(co) * h * wd;
      for (int64_t i = 0; i < int64_t(h) * wd; ++i) din[i] += wv * dp[i];
    }
  }
}

// Plane dot product with interleaved partial sums (lane j owns columns with
// x % 64 == j, carried across rows), reduced in fixed lane order at the end.
// The lane structure keeps the inner loop elementwise (vectorizable without
// reassociation) while the summation order stays independent of threading.
template <typename T>
T lane_dot(const T* SMX_RESTRICT g, const T* SMX_RESTRICT r, int h, int wd, int g_stride,
           int r_stride) {
  constexpr int kLanes = 64;
  T acc[kLanes] = {};
  if (wd <= kLanes) {
    for (int y = 0; y < h; ++y) {
      const T* SMX_RESTRICT gr = g + static_cast<size_t>(y) * g_stride;
      const T* SMX_RESTRICT rr = r + static_cast<size_t>(y) * r_stride;
      for (int j = 0; j < wd; ++j) acc[j] += gr[j] * rr[j];
    }
  } else {
    for (int y = 0; y < h; ++y) {
      const T* SMX_RESTRICT gr = g + static_cast<size_t>(y) * g_stride;
      const T* SMX_RESTRICT rr = r + static_cast<size_t>(y) * r_stride;
      for (int x = 0; x < wd; x += kLanes) {
        const int m = wd - x < kLanes ? wd - x : kLanes;
        for (int j = 0; j < m; ++j) acc[j] += gr[x + j] * rr[x + j];
      }
    }
  }
  T s = T(0);
  for (int j = 0; j < kLanes; ++j) s += acc[j];
  return s;
}

// dw for one (co,ci) pair: one shifted plane dot per tap.
template <typename T>
void backward_weights_one_pair(const T* SMX_RESTRICT dout, const T* SMX_RESTRICT in_pad,
                               T* SMX_RESTRICT dw, int co, int ci, const ConvDims& d) {
  const int h = d.h, wd = d.w;
  const T* SMX_RESTRICT dc = dout + static_cast<size_t>(co) * h * wd;
  if (d.k == 3) {
    const int pw = wd + 2;
    const T* SMX_RESTRICT ip = in_pad + static_cast<size_t>(ci) * (h + 2) * pw;
    T* SMX_RESTRICT dwp = dw + (static_cast<size_t>(co) * d.cin + ci) * 9;
    for (int t = 0; t < 9; ++t)
      dwp[t] += lane_dot(dc, ip + static_cast<size_t>(t / 3) * pw + t % 3, h, wd, wd, pw);
  } else {
    const T* SMX_RESTRICT ip = in_pad + static_cast<size_t>(ci) * h * wd;
    dw[static_cast<size_t>(co) * d.cin + ci] += lane_dot(dc, ip, h, wd, wd, wd);
  }
}

template <typename T>
void backward_bias_one_cout(const T* SMX_RESTRICT dout, T* SMX_RESTRICT db, int co,
                            const ConvDims& d) {
  const T* SMX_RESTRICT dc = dout + static_cast<size_t>(co) * d.h * d.w;
  const int64_t n = int64_t(d.h) * d.w;
  constexpr int kLanes = 64;
  T acc[kLanes] = {};
  for (int64_t i = 0; i < n; i += kLanes) {
    const int m = n - i < kLanes ? static_cast<int>(n - i) : kLanes;
    for (int j = 0; j < m; ++j) acc[j] += dc[i + j];
  }
  T s = T(0);
  for (int j = 0; j < kLanes; ++j) s += acc[j];
  db[co] += s;
}

}  // namespace detail

// ---- serial reference ------------------------------------------------------

template <typename T>
void conv2d_forward_serial(const T* in, const T* w, const T* b, T* out, const ConvDims& d,
                           std::vector<T>& scratch) {
  validate(d);
  pad_chw(in, d.cin, d.h, d.w, d.pad(), scratch);
  for (int co = 0; co < d.cout; ++co)
    detail::forward_one_cout(scratch.data(), w + static_cast<size_t>(co) * d.cin * d.k * d.k,
                             b[co], out + static_cast<size_t>(co) * d.h * d.w, d);
}

template <typename T>
void conv2d_backward_input_serial(const T* dout, const T* w, T* din, const ConvDims& d,
                                  std::vector<T>& scratch) {
  validate(d);
  pad_chw(dout, d.cout, d.h, d.w, d.pad(), scratch);
  for (int ci = 0; ci < d.cin; ++ci)
    detail::backward_input_one_cin(scratch.data(), w, din + static_cast<size_t>(ci) * d.h * d.w,
                                   ci, d);
}

template <typename T>
void conv2d_backward_weights_serial(const T* dout, const T* in, T* dw, T* db, const ConvDims& d,
                                    std::vector<T>& scratch) {
  validate(d);
  pad_chw(in, d.cin, d.h, d.w, d.pad(), scratch);
  for (int co = 0; co < d.cout; ++co) {
    for (int ci = 0; ci < d.cin; ++ci)
      detail::backward_weights_one_pair(dout, scratch.data(), dw, co, ci, d);
    detail::backward_bias_one_cout(dout, db, co, d);
  }
}

// ---- OpenMP variants -------------------------------------------------------

template <typename T>
void conv2d_forward_omp(const T* in, const T* w, const T* b, T* out, const ConvDims& d,
                        std::vector<T>& scratch) {
  validate(d);
  pad_chw(in, d.cin, d.h, d.w, d.pad(), scratch);
  const T* ip = scratch.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int co = 0; co < d.cout; ++co)
    detail::forward_one_cout(ip, w + static_cast<size_t>(co) * d.cin * d.k * d.k, b[co],
                             out + static_cast<size_t>(co) * d.h * d.w, d);
}

template <typename T>
void conv2d_backward_input_omp(const T* dout, const T* w, T* din, const ConvDims& d,
                               std::vector<T>& scratch) {
  validate(d);
  pad_chw(dout, d.cout, d.h, d.w, d.pad(), scratch);
  const T* dp = scratch.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int ci = 0; ci < d.cin; ++ci)
    detail::backward_input_one_cin(dp, w, din + static_cast<size_t>(ci) * d.h * d.w, ci, d);
}

template <typename T>
void conv2d_backward_weights_omp(const T* dout, const T* in, T* dw, T* db, const ConvDims& d,
                                 std::vector<T>& scratch) {
  validate(d);
  pad_chw(in, d.cin, d.h, d.w, d.pad(), scratch);
  const T* ip = scratch.data();
  const int pairs = d.cout * d.cin;
#ifdef _OPENMP
#pragma omp parallel
#endif
  {
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (int p = 0; p < pairs; ++p)
      detail::backward_weights_one_pair(dout, ip, dw, p / d.cin, p % d.cin, d);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (int co = 0; co < d.cout; ++co) detail::backward_bias_one_cout(dout, db, co, d);
  }
}

// ---- dispatch used by the autodiff graph ------------------------------------

template <typename T>
void conv2d_forward(const T* in, const T* w, const T* b, T* out, const ConvDims& d,
                    std::vector<T>& scratch) {
  if (parallel_enabled())
    conv2d_forward_omp(in, w, b, out, d, scratch);
  else
    conv2d_forward_serial(in, w, b, out, d, scratch);
}

template <typename T>
void conv2d_backward_input(const T* dout, const T* w, T* din, const ConvDims& d,
                           std::vector<T>& scratch) {
  if (parallel_enabled())
    conv2d_backward_input_omp(dout, w, din, d, scratch);
  else
    conv2d_backward_input_serial(dout, w, din, d, scratch);
}

template <typename T>
void conv2d_backward_weights(const T* dout, const T* in, T* dw, T* db, const ConvDims& d,
                             std::vector<T>& scratch) {
  if (parallel_enabled())
    conv2d_backward_weights_omp(dout, in, dw, db, d, scratch);
  else
    conv2d_backward_weights_serial(dout, in, dw, db, d, scratch);
}

}  // namespace scribblemix::kernels
