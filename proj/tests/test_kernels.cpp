#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "scribblemix/kernels.hpp"
#include "scribblemix/rng.hpp"

using namespace scribblemix;
namespace k = scribblemix::kernels;

namespace {

std::vector<float> rand_vec(RngStream& r, size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = float(r.uniform(lo, hi));
  return v;
}

// Naive cross-correlation reference with double accumulation.
void ref_forward(const std::vector<float>& in, const std::vector<float>& w,
                 const std::vector<float>& b, std::vector<float>& out, const k::ConvDims& d) {
  const int p = d.pad();
  out.assign(size_t(d.cout) * d.h * d.w, 0.0f);
  for (int co = 0; co < d.cout; ++co)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        double acc = b[size_t(co)];
        for (int ci = 0; ci < d.cin; ++ci)
          for (int dy = 0; dy < d.k; ++dy)
            for (int dx = 0; dx < d.k; ++dx) {
              int yy = y + dy - p, xx = x + dx - p;
              if (yy < 0 || yy >= d.h || xx < 0 || xx >= d.w) continue;
              acc += double(w[((size_t(co) * d.cin + ci) * d.k + dy) * d.k + dx]) *
                     in[(size_t(ci) * d.h + yy) * d.w + xx];
            }
        out[(size_t(co) * d.h + y) * d.w + x] = float(acc);
      }
}

void ref_backward(const std::vector<float>& dout, const std::vector<float>& in,
                  const std::vector<float>& w, std::vector<float>& din, std::vector<float>& dw,
                  std::vector<float>& db, const k::ConvDims& d) {
  const int p = d.pad();
  std::vector<double> dind(size_t(d.cin) * d.h * d.w, 0.0);
  std::vector<double> dwd(w.size(), 0.0);
  std::vector<double> dbd(size_t(d.cout), 0.0);
  for (int co = 0; co < d.cout; ++co)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        double g = dout[(size_t(co) * d.h + y) * d.w + x];
        dbd[size_t(co)] += g;
        for (int ci = 0; ci < d.cin; ++ci)
          for (int dy = 0; dy < d.k; ++dy)
            for (int dx = 0; dx < d.k; ++dx) {
              int yy = y + dy - p, xx = x + dx - p;
              if (yy < 0 || yy >= d.h || xx < 0 || xx >= d.w) continue;
              size_t wi = ((size_t(co) * d.cin + ci) * d.k + dy) * d.k + dx;
              dwd[wi] += g * in[(size_t(ci) * d.h + yy) * d.w + xx];
              dind[(size_t(ci) * d.h + yy) * d.w + xx] += g * double(w[wi]);
            }
      }
  din.assign(dind.begin(), dind.end());
  dw.assign(dwd.begin(), dwd.end());
  db.assign(dbd.begin(), dbd.end());
}

void check_close(const std::vector<float>& got, const std::vector<float>& want, double tol) {
  REQUIRE(got.size() == want.size());
  double worst = 0.0;
  for (size_t i = 0; i < got.size(); ++i)
    worst = std::max(worst, std::abs(double(got[i]) - want[i]) / (std::abs(double(want[i])) + 1.0));
  CHECK(worst < tol);
}

}  // namespace

TEST_CASE("3x3 all-ones kernel on all-ones input counts the valid neighborhood") {
  k::ConvDims d{1, 1, 4, 4, 3};
  std::vector<float> in(16, 1.0f), w(9, 1.0f), b(1, 0.0f), out(16, -1.0f), scratch;
  k::conv2d_forward_serial(in.data(), w.data(), b.data(), out.data(), d, scratch);
  CHECK(out[5] == 9.0f);   // interior
  CHECK(out[0] == 4.0f);   // corner
  CHECK(out[1] == 6.0f);   // edge
  CHECK(out[15] == 4.0f);  // opposite corner
}

TEST_CASE("bias shifts every output") {
  k::ConvDims d{1, 2, 3, 3, 3};
  std::vector<float> in(9, 0.0f), w(18, 1.0f), b = {2.5f, -1.0f}, out(18), scratch;
  k::conv2d_forward_serial(in.data(), w.data(), b.data(), out.data(), d, scratch);
  for (int i = 0; i < 9; ++i) CHECK(out[size_t(i)] == 2.5f);
  for (int i = 9; i < 18; ++i) CHECK(out[size_t(i)] == -1.0f);
}

TEST_CASE("1x1 conv is a per-pixel linear map over channels") {
  k::ConvDims d{2, 1, 2, 2, 1};
  std::vector<float> in = {1, 2, 3, 4, 10, 20, 30, 40};
  std::vector<float> w = {0.5f, 0.1f}, b = {1.0f}, out(4), scratch;
  k::conv2d_forward_serial(in.data(), w.data(), b.data(), out.data(), d, scratch);
  CHECK(out[0] == doctest::Approx(1 + 0.5 + 1.0));
  CHECK(out[3] == doctest::Approx(1 + 2.0 + 4.0));
}

TEST_CASE("forward matches the naive reference on random shapes") {
  RngStream r(31, 0);
  for (const auto& d : {k::ConvDims{3, 5, 7, 9, 3}, k::ConvDims{1, 4, 5, 5, 3},
                        k::ConvDims{6, 2, 11, 13, 3}, k::ConvDims{4, 3, 6, 6, 1}}) {
    auto in = rand_vec(r, size_t(d.cin) * d.h * d.w);
    auto w = rand_vec(r, size_t(d.cout) * d.cin * d.k * d.k);
    auto b = rand_vec(r, size_t(d.cout));
    std::vector<float> out, want, scratch;
    out.resize(size_t(d.cout) * d.h * d.w);
    k::conv2d_forward_serial(in.data(), w.data(), b.data(), out.data(), d, scratch);
    ref_forward(in, w, b, want, d);
    check_close(out, want, 1e-5);
  }
}

TEST_CASE("backward kernels match the naive reference") {
  RngStream r(32, 0);
  for (const auto& d : {k::ConvDims{3, 5, 7, 9, 3}, k::ConvDims{2, 2, 16, 16, 3},
                        k::ConvDims{5, 3, 4, 4, 1}}) {
    auto in = rand_vec(r, size_t(d.cin) * d.h * d.w);
    auto w = rand_vec(r, size_t(d.cout) * d.cin * d.k * d.k);
    auto dout = rand_vec(r, size_t(d.cout) * d.h * d.w);
    std::vector<float> din(in.size(), 0.0f), dw(w.size(), 0.0f), db(size_t(d.cout), 0.0f);
    std::vector<float> scratch;
    k::conv2d_backward_input_serial(dout.data(), w.data(), din.data(), d, scratch);
    k::conv2d_backward_weights_serial(dout.data(), in.data(), dw.data(), db.data(), d, scratch);
    std::vector<float> rdin, rdw, rdb;
    ref_backward(dout, in, w, rdin, rdw, rdb, d);
    check_close(din, rdin, 1e-4);
    check_close(dw, rdw, 1e-4);
    check_close(db, rdb, 1e-4);
  }
}

TEST_CASE("backward kernels accumulate instead of overwriting") {
  k::ConvDims d{1, 1, 3, 3, 3};
  std::vector<float> in(9, 1.0f), w(9, 1.0f), dout(9, 1.0f);
  std::vector<float> din(9, 100.0f), dw(9, 100.0f), db(1, 100.0f), scratch;
  k::conv2d_backward_input_serial(dout.data(), w.data(), din.data(), d, scratch);
  k::conv2d_backward_weights_serial(dout.data(), in.data(), dw.data(), db.data(), d, scratch);
  CHECK(din[4] == 109.0f);
  CHECK(dw[4] == 109.0f);
  CHECK(db[0] == 109.0f);
}

TEST_CASE("omp variants are bitwise equal to the serial reference") {
  RngStream r(33, 0);
  // Widths off the vector-lane boundaries on purpose.
  for (const auto& d : {k::ConvDims{4, 6, 17, 23, 3}, k::ConvDims{8, 8, 64, 64, 3},
                        k::ConvDims{3, 3, 5, 66, 3}, k::ConvDims{7, 5, 9, 31, 1}}) {
    auto in = rand_vec(r, size_t(d.cin) * d.h * d.w);
    auto w = rand_vec(r, size_t(d.cout) * d.cin * d.k * d.k);
    auto b = rand_vec(r, size_t(d.cout));
    auto dout = rand_vec(r, size_t(d.cout) * d.h * d.w);
    std::vector<float> scratch;

    std::vector<float> o1(dout.size()), o2(dout.size());
    k::conv2d_forward_serial(in.data(), w.data(), b.data(), o1.data(), d, scratch);
    k::conv2d_forward_omp(in.data(), w.data(), b.data(), o2.data(), d, scratch);
    CHECK(std::memcmp(o1.data(), o2.data(), o1.size() * sizeof(float)) == 0);

    std::vector<float> di1(in.size(), 0.0f), di2(in.size(), 0.0f);
    k::conv2d_backward_input_serial(dout.data(), w.data(), di1.data(), d, scratch);
    k::conv2d_backward_input_omp(dout.data(), w.data(), di2.data(), d, scratch);
    CHECK(std::memcmp(di1.data(), di2.data(), di1.size() * sizeof(float)) == 0);

    std::vector<float> dw1(w.size(), 0.0f), dw2(w.size(), 0.0f);
    std::vector<float> db1(size_t(d.cout), 0.0f), db2(size_t(d.cout), 0.0f);
    k::conv2d_backward_weights_serial(dout.data(), in.data(), dw1.data(), db1.data(), d, scratch);
    k::conv2d_backward_weights_omp(dout.data(), in.data(), dw2.data(), db2.data(), d, scratch);
    CHECK(std::memcmp(dw1.data(), dw2.data(), dw1.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(db1.data(), db2.data(), db1.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("dispatch honors the runtime parallel switch") {
  bool before = k::parallel_enabled();
  k::set_parallel(false);
  CHECK(!k::parallel_enabled());
  k::set_parallel(true);
  CHECK(k::parallel_enabled());
  k::set_parallel(before);
}

TEST_CASE("pad_chw zero-pads every channel") {
  std::vector<float> in = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<float> out;
  k::pad_chw(in.data(), 2, 2, 2, 1, out);
  REQUIRE(out.size() == size_t(2 * 4 * 4));
  CHECK(out[0] == 0.0f);
  CHECK(out[5] == 1.0f);
  CHECK(out[6] == 2.0f);
  CHECK(out[9] == 3.0f);
  CHECK(out[16 + 5] == 5.0f);
  CHECK(out[31] == 0.0f);
}

TEST_CASE("invalid dims are rejected") {
  std::vector<float> scratch;
  CHECK_THROWS_AS(k::validate(k::ConvDims{1, 1, 4, 4, 5}), Error);
  CHECK_THROWS_AS(k::validate(k::ConvDims{0, 1, 4, 4, 3}), Error);
}
