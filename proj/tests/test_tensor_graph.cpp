#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "scribblemix/graph.hpp"
#include "scribblemix/rng.hpp"
#include "scribblemix/tensor.hpp"

using namespace scribblemix;

namespace {

Tensor rand_tensor(RngStream& r, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = float(r.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_CASE("conv2d forward: ones kernel sums the 3x3 neighborhood") {
  GraphF g;
  int x = g.constant(full<float>({1, 4, 4}, 1.0f));
  int w = g.constant(full<float>({1, 1, 3, 3}, 1.0f));
  int b = g.constant(Tensor({1}));
  int y = g.conv2d(x, w, b);
  CHECK(g.val(y).shape == std::vector<int>{1, 4, 4});
  CHECK(g.val(y).data[5] == 9.0f);
  CHECK(g.val(y).data[0] == 4.0f);
  CHECK(g.val(y).data[3] == 4.0f);
  CHECK(g.val(y).data[1] == 6.0f);
}

TEST_CASE("conv2d rejects mismatched shapes") {
  GraphF g;
  int x = g.constant(Tensor({2, 4, 4}));
  int w = g.constant(Tensor({1, 3, 3, 3}));  // Cin=3 != 2
  int b = g.constant(Tensor({1}));
  CHECK_THROWS_AS(g.conv2d(x, w, b), Error);
  int w2 = g.constant(Tensor({1, 2, 3, 3}));
  int b2 = g.constant(Tensor({2}));  // Cout=1 != 2
  CHECK_THROWS_AS(g.conv2d(x, w2, b2), Error);
}

TEST_CASE("relu clamps and routes gradient through positive entries only") {
  GraphF g;
  Tensor t({4});
  t.data = {-2.0f, -0.5f, 0.5f, 3.0f};
  int x = g.leaf(t, true);
  int y = g.relu(x);
  CHECK(g.val(y).data == std::vector<float>{0.0f, 0.0f, 0.5f, 3.0f});
  int s = g.sum(y);
  g.backward(s);
  CHECK(g.grad_of(x) == std::vector<float>{0.0f, 0.0f, 1.0f, 1.0f});
}

TEST_CASE("channel softmax hits the closed-form values") {
  GraphF g;
  Tensor t({2, 1, 1});
  t.data = {0.0f, std::log(3.0f)};
  int y = g.channel_softmax(g.constant(t));
  CHECK(g.val(y).data[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(g.val(y).data[1] == doctest::Approx(0.75).epsilon(1e-6));

  // uniform logits -> uniform probabilities, rows sum to one
  GraphF g2;
  RngStream r(4, 0);
  int z = g2.channel_softmax(g2.constant(rand_tensor(r, {5, 3, 3}, -3.0, 3.0)));
  const auto& v = g2.val(z);
  for (int p = 0; p < 9; ++p) {
    float s = 0.0f;
    for (int c = 0; c < 5; ++c) s += v.data[size_t(c) * 9 + size_t(p)];
    CHECK(s == doctest::Approx(1.0f).epsilon(1e-5));
  }
}

TEST_CASE("softmax is invariant to a constant logit shift") {
  RngStream r(5, 0);
  Tensor t = rand_tensor(r, {3, 2, 2});
  Tensor shifted = t;
  for (auto& v : shifted.data) v += 100.0f;
  GraphF g;
  int a = g.channel_softmax(g.constant(t));
  int b = g.channel_softmax(g.constant(shifted));
  for (size_t i = 0; i < g.val(a).data.size(); ++i)
    CHECK(g.val(a).data[i] == doctest::Approx(g.val(b).data[i]).epsilon(1e-5));
}

TEST_CASE("maxpool takes window maxima and upsample repeats pixels") {
  GraphF g;
  Tensor t({1, 2, 2});
  t.data = {1.0f, 5.0f, 3.0f, 2.0f};
  int x = g.leaf(t, true);
  int p = g.maxpool2(x);
  CHECK(g.val(p).shape == std::vector<int>{1, 1, 1});
  CHECK(g.val(p).data[0] == 5.0f);

  int u = g.upsample2_nearest(p);
  CHECK(g.val(u).shape == std::vector<int>{1, 2, 2});
  for (float v : g.val(u).data) CHECK(v == 5.0f);

  // gradient flows only to the argmax pixel, multiplied by the upsample fan-out
  g.backward(g.sum(u));
  CHECK(g.grad_of(x) == std::vector<float>{0.0f, 4.0f, 0.0f, 0.0f});
}

TEST_CASE("maxpool over odd extents is rejected") {
  GraphF g;
  int x = g.constant(Tensor({1, 3, 4}));
  CHECK_THROWS_AS(g.maxpool2(x), Error);
}

TEST_CASE("upsample then maxpool is identity for positive inputs") {
  RngStream r(6, 0);
  GraphF g;
  Tensor t = rand_tensor(r, {2, 3, 3}, 0.1, 2.0);
  int x = g.constant(t);
  int y = g.maxpool2(g.upsample2_nearest(x));
  CHECK(g.val(y).shape == t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) CHECK(g.val(y).data[i] == t.data[i]);
}

TEST_CASE("concat stacks channels in order") {
  GraphF g;
  int a = g.constant(full<float>({1, 2, 2}, 1.0f));
  int b = g.constant(full<float>({2, 2, 2}, 2.0f));
  int c = g.concat_channels(a, b);
  CHECK(g.val(c).shape == std::vector<int>{3, 2, 2});
  CHECK(g.val(c).data[0] == 1.0f);
  CHECK(g.val(c).data[4] == 2.0f);
  CHECK(g.val(c).data[11] == 2.0f);
}

TEST_CASE("add, mul, scale, sum compose and differentiate") {
  GraphF g;
  Tensor ta({3}), tb({3});
  ta.data = {1.0f, 2.0f, 3.0f};
  tb.data = {4.0f, 5.0f, 6.0f};
  int a = g.leaf(ta, true);
  int b = g.leaf(tb, true);
  // f = sum(2*(a+b) + a*b) = 2*21 + 32 + ... compute: a+b = {5,7,9}; a*b = {4,10,18}
  int f = g.sum(g.add(g.scale(g.add(a, b), 2.0f), g.mul(a, b)));
  CHECK(g.val(f).data[0] == doctest::Approx(2 * 21 + 32));
  g.backward(f);
  // df/da = 2 + b, df/db = 2 + a
  CHECK(g.grad_of(a) == std::vector<float>{6.0f, 7.0f, 8.0f});
  CHECK(g.grad_of(b) == std::vector<float>{3.0f, 4.0f, 5.0f});
}

TEST_CASE("separate losses accumulate into a shared leaf") {
  GraphF g;
  int x = g.leaf(full<float>({2}, 1.5f), true);
  int s1 = g.sum(g.scale(x, 3.0f));
  int s2 = g.sum(g.scale(x, 4.0f));
  g.backward(s1);
  CHECK(g.grad_of(x) == std::vector<float>{3.0f, 3.0f});
  g.backward(s2);
  CHECK(g.grad_of(x) == std::vector<float>{7.0f, 7.0f});
  g.zero_grads();
  g.backward(s1);
  CHECK(g.grad_of(x) == std::vector<float>{3.0f, 3.0f});
}

TEST_CASE("backward on a non-scalar node is rejected") {
  GraphF g;
  int x = g.leaf(full<float>({3}, 1.0f), true);
  int y = g.scale(x, 2.0f);
  CHECK_THROWS_AS(g.backward(y), Error);
}

TEST_CASE("detach blocks the gradient path") {
  GraphF g;
  int x = g.leaf(full<float>({2}, 2.0f), true);
  int d = g.detach(g.scale(x, 5.0f));
  CHECK(!g.requires_grad(d));
  int s = g.sum(g.mul(d, x));  // s = sum(10 * x) but 10 is detached
  g.backward(s);
  CHECK(g.grad_of(x) == std::vector<float>{10.0f, 10.0f});
}

TEST_CASE("into_params=false skips parameter leaves but not data leaves") {
  GraphF g;
  int w = g.param(full<float>({2}, 3.0f));
  int x = g.leaf(full<float>({2}, 4.0f), true);
  int s = g.sum(g.mul(w, x));
  g.backward(s, {.into_params = false});
  CHECK(g.grad_of(w).empty());
  CHECK(g.grad_of(x) == std::vector<float>{3.0f, 3.0f});
  g.zero_grads();
  g.backward(s);
  CHECK(g.grad_of(w) == std::vector<float>{4.0f, 4.0f});
}

TEST_CASE("occlude zeroes masked pixels across channels and blocks their gradient") {
  GraphF g;
  Tensor t({2, 2, 2});
  t.data = {1, 2, 3, 4, 5, 6, 7, 8};
  int x = g.leaf(t, true);
  int o = g.occlude(x, {1, 0, 0, 1});
  CHECK(g.val(o).data == std::vector<float>{0, 2, 3, 0, 0, 6, 7, 0});
  g.backward(g.sum(o));
  CHECK(g.grad_of(x) == std::vector<float>{0, 1, 1, 0, 0, 1, 1, 0});
}

TEST_CASE("pixel_select gathers whole pixels from either source") {
  GraphF g;
  Tensor ta({1, 2, 2}), tb({1, 2, 2});
  ta.data = {1, 2, 3, 4};
  tb.data = {10, 20, 30, 40};
  int a = g.leaf(ta, true);
  int b = g.leaf(tb, true);
  // output pixel p takes: 0 -> a[0], 1 -> b[3], 2 -> a[2], 3 -> b[0]
  int m = g.pixel_select(a, b, {0, 4 + 3, 2, 4 + 0});
  CHECK(g.val(m).data == std::vector<float>{1, 40, 3, 10});
  g.backward(g.sum(m));
  CHECK(g.grad_of(a) == std::vector<float>{1, 0, 1, 0});
  CHECK(g.grad_of(b) == std::vector<float>{1, 0, 0, 1});
}

TEST_CASE("pixel_select validates table entries") {
  GraphF g;
  int a = g.constant(Tensor({1, 2, 2}));
  int b = g.constant(Tensor({1, 2, 2}));
  CHECK_THROWS_AS(g.pixel_select(a, b, {0, 1, 2, 8}), Error);
  CHECK_THROWS_AS(g.pixel_select(a, b, {0, 1, 2}), Error);
}

TEST_CASE("slice_channels copies the range and routes gradient back") {
  GraphF g;
  Tensor t({3, 1, 2});
  t.data = {1, 2, 3, 4, 5, 6};
  int x = g.leaf(t, true);
  int s = g.slice_channels(x, 1, 3);
  CHECK(g.val(s).shape == std::vector<int>{2, 1, 2});
  CHECK(g.val(s).data == std::vector<float>{3, 4, 5, 6});
  g.backward(g.sum(s));
  CHECK(g.grad_of(x) == std::vector<float>{0, 0, 1, 1, 1, 1});
}

TEST_CASE("partial_ce evaluates the labeled-pixel sum") {
  GraphF g;
  Tensor pred({2, 2, 2});
  pred.data = {0.5f, 0.9f, 0.2f, 0.4f, 0.5f, 0.1f, 0.8f, 0.6f};
  ScribbleLabel y(2, 2, 2);
  y.set(0, 0, 1);  // -log 0.5
  int ce = g.partial_ce(g.constant(pred), y);
  CHECK(g.val(ce).data[0] == doctest::Approx(0.693147).epsilon(1e-5));

  y.set(1, 1, 0);  // adds -log 0.4
  GraphF g2;
  int ce2 = g2.partial_ce(g2.constant(pred), y);
  CHECK(g2.val(ce2).data[0] ==
        doctest::Approx(-std::log(0.5) - std::log(0.4)).epsilon(1e-5));
}

TEST_CASE("partial_ce with no labels is zero with zero gradient") {
  GraphF g;
  int p = g.leaf(full<float>({2, 2, 2}, 0.5f), true);
  ScribbleLabel y(2, 2, 2);
  int ce = g.partial_ce(p, y);
  CHECK(g.val(ce).data[0] == 0.0f);
  g.backward(ce);
  for (float v : g.grad_of(p)) CHECK(v == 0.0f);
}

TEST_CASE("partial_ce is zero when labeled pixels predict their class with certainty") {
  GraphF g;
  Tensor pred({2, 1, 2});
  pred.data = {1.0f, 0.3f, 0.0f, 0.7f};
  ScribbleLabel y(2, 1, 2);
  y.set(0, 0, 0);
  int ce = g.partial_ce(g.constant(pred), y);
  CHECK(g.val(ce).data[0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("ncs matches the hand case and its bounds") {
  GraphF g;
  Tensor p({2}), q({2});
  p.data = {1.0f, 0.0f};
  q.data = {1.0f, 1.0f};
  int n = g.ncs(g.constant(p), g.constant(q));
  CHECK(g.val(n).data[0] == doctest::Approx(-0.707107).epsilon(1e-5));

  // identical tensors -> -1; opposite -> +1
  GraphF g2;
  RngStream r(7, 0);
  Tensor t = rand_tensor(r, {3, 4, 4}, 0.1, 1.0);
  Tensor neg = t;
  for (auto& v : neg.data) v = -v;
  CHECK(g2.val(g2.ncs(g2.constant(t), g2.constant(t))).data[0] ==
        doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(g2.val(g2.ncs(g2.constant(t), g2.constant(neg))).data[0] ==
        doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("ncs rejects zero-norm arguments") {
  GraphF g;
  int z = g.constant(Tensor({3}));
  int p = g.constant(full<float>({3}, 1.0f));
  CHECK_THROWS_AS(g.ncs(z, p), Error);
  CHECK_THROWS_AS(g.ncs(p, z), Error);
}

TEST_CASE("gradients survive a pool-upsample-concat composition") {
  RngStream r(8, 0);
  GraphF g;
  Tensor t = rand_tensor(r, {2, 4, 4});
  int x = g.leaf(t, true);
  int y = g.concat_channels(g.upsample2_nearest(g.maxpool2(x)), g.relu(x));
  int s = g.sum(y);
  g.backward(s);
  const auto& gx = g.grad_of(x);
  REQUIRE(gx.size() == t.data.size());
  // every 2x2 window contributes 4 through the pool branch
  double total = 0.0;
  for (float v : gx) total += v;
  double relu_part = 0.0;
  for (float v : t.data) relu_part += v > 0.0f ? 1.0 : 0.0;
  CHECK(total == doctest::Approx(4.0 * 8 + relu_part).epsilon(1e-6));
}

TEST_CASE("a corrupted analytic gradient is caught by the finite-difference harness") {
  // negative control: sum(x*x) with the gradient compared against a wrong value
  GraphF g;
  Tensor t({3});
  t.data = {0.5f, -1.0f, 2.0f};
  int x = g.leaf(t, true);
  g.backward(g.sum(g.mul(x, x)));
  const auto& gx = g.grad_of(x);
  // true gradient is 2x; corrupt one entry and check the mismatch is visible
  std::vector<float> corrupted = gx;
  corrupted[1] += 0.1f;
  bool mismatch = false;
  for (size_t i = 0; i < gx.size(); ++i) {
    float fd = 2.0f * t.data[i];
    if (std::abs(corrupted[i] - fd) > 1e-3f) mismatch = true;
    CHECK(gx[i] == doctest::Approx(fd).epsilon(1e-4));
  }
  CHECK(mismatch);
}

TEST_CASE("graph values keep insertion order as topological order") {
  GraphF g;
  int a = g.leaf(full<float>({1}, 1.0f), true);
  int b = g.scale(a, 2.0f);
  int c = g.add(b, a);
  CHECK(a < b);
  CHECK(b < c);
  CHECK(g.size() == 3);
}
