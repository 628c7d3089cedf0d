#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "scribblemix/kernels.hpp"
#include "scribblemix/rng.hpp"

namespace sm = scribblemix;
namespace smk = scribblemix::kernels;

namespace {

std::vector<float> rand_vec(sm::RngStream& rng, size_t n, double lo, double hi) {
  std::vector<float> v(n);
  for (float& x : v) x = float(rng.uniform(lo, hi));
  return v;
}

double seconds_for(const std::function<void()>& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

struct BenchLine {
  std::string name;
  double serial_s = 0.0, omp_s = 0.0;
  double macs = 0.0;
  bool equal = false;
};

}  // namespace

int main() {
  // layer shapes of the default segmentor on 64x64 inputs
  const std::vector<smk::ConvDims> cases = {
      {1, 8, 64, 64, 3},  {8, 8, 64, 64, 3},  {8, 16, 32, 32, 3},  {16, 16, 32, 32, 3},
      {16, 32, 16, 16, 3}, {32, 32, 16, 16, 3}, {48, 16, 32, 32, 3}, {24, 8, 64, 64, 3},
      {8, 4, 64, 64, 1},
  };

  sm::RngStream rng(1234, 0);
  std::vector<BenchLine> lines;
  bool all_equal = true;
  double tot_serial = 0.0, tot_omp = 0.0, tot_macs = 0.0;

  for (const smk::ConvDims& d : cases) {
    const size_t nin = size_t(d.cin) * d.h * d.w;
    const size_t nout = size_t(d.cout) * d.h * d.w;
    const size_t nw = size_t(d.cout) * d.cin * d.k * d.k;
    const std::vector<float> in = rand_vec(rng, nin, -1.0, 1.0);
    const std::vector<float> w = rand_vec(rng, nw, -0.5, 0.5);
    const std::vector<float> b = rand_vec(rng, size_t(d.cout), -0.2, 0.2);
    const std::vector<float> dout = rand_vec(rng, nout, -1.0, 1.0);
    const double macs = double(nw) * d.h * d.w;
    const int reps = std::max(1, int(2.0e8 / macs));

    std::vector<float> scratch;
    auto bench_pair = [&](const std::string& name, auto serial_fn, auto omp_fn,
                          std::vector<float>& out_s, std::vector<float>& out_o) {
      std::fill(out_s.begin(), out_s.end(), 0.0f);
      serial_fn(out_s);
      std::fill(out_o.begin(), out_o.end(), 0.0f);
      omp_fn(out_o);
      BenchLine l;
      l.name = name;
      l.macs = macs;
      l.equal = std::memcmp(out_s.data(), out_o.data(), out_s.size() * sizeof(float)) == 0;
      l.serial_s = seconds_for([&] { serial_fn(out_s); }, reps);
      l.omp_s = seconds_for([&] { omp_fn(out_o); }, reps);
      lines.push_back(l);
      all_equal = all_equal && l.equal;
      tot_serial += l.serial_s;
      tot_omp += l.omp_s;
      tot_macs += macs;
    };

    char tag[64];
    std::snprintf(tag, sizeof tag, "%dx%d %dx%d k%d", d.cin, d.cout, d.h, d.w, d.k);

    std::vector<float> fs(nout), fo(nout);
    bench_pair(std::string("fwd ") + tag,
               [&](std::vector<float>& o) {
                 smk::conv2d_forward_serial(in.data(), w.data(), b.data(), o.data(), d, scratch);
               },
               [&](std::vector<float>& o) {
                 smk::conv2d_forward_omp(in.data(), w.data(), b.data(), o.data(), d, scratch);
               },
               fs, fo);

    std::vector<float> dis(nin), dio(nin);
    bench_pair(std::string("bwd_in ") + tag,
               [&](std::vector<float>& o) {
                 std::fill(o.begin(), o.end(), 0.0f);
                 smk::conv2d_backward_input_serial(dout.data(), w.data(), o.data(), d, scratch);
               },
               [&](std::vector<float>& o) {
                 std::fill(o.begin(), o.end(), 0.0f);
                 smk::conv2d_backward_input_omp(dout.data(), w.data(), o.data(), d, scratch);
               },
               dis, dio);

    std::vector<float> dws(nw + size_t(d.cout)), dwo(nw + size_t(d.cout));
    bench_pair(std::string("bwd_w ") + tag,
               [&](std::vector<float>& o) {
                 std::fill(o.begin(), o.end(), 0.0f);
                 smk::conv2d_backward_weights_serial(dout.data(), in.data(), o.data(),
                                                    o.data() + nw, d, scratch);
               },
               [&](std::vector<float>& o) {
                 std::fill(o.begin(), o.end(), 0.0f);
                 smk::conv2d_backward_weights_omp(dout.data(), in.data(), o.data(), o.data() + nw,
                                                 d, scratch);
               },
               dws, dwo);
  }

  std::printf("%-24s %12s %12s %8s %9s %s\n", "kernel", "serial GMAC/s", "omp GMAC/s",
              "speedup", "MMAC", "bitwise");
  for (const BenchLine& l : lines)
    std::printf("%-24s %12.2f %12.2f %8.2f %9.2f %s\n", l.name.c_str(),
                l.macs / l.serial_s / 1e9, l.macs / l.omp_s / 1e9, l.serial_s / l.omp_s,
                l.macs / 1e6, l.equal ? "equal" : "DIFFERS");
  std::printf("overall: serial %.2f GMAC/s, omp %.2f GMAC/s, speedup %.2fx, %s\n",
              tot_macs / tot_serial / 1e9, tot_macs / tot_omp / 1e9, tot_serial / tot_omp,
              all_equal ? "all outputs bitwise equal" : "OUTPUT MISMATCH");
  return all_equal ? 0 : 2;
}
