// Acceptance gate: one check per release criterion, one PASS/FAIL line each.
// --fast runs everything except the ablation; --ablation runs only it.
// Exit code 0 when every executed check passes, 3 otherwise.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "scribblemix/dataset.hpp"
#include "scribblemix/losses.hpp"
#include "scribblemix/mix.hpp"
#include "scribblemix/nst.hpp"
#include "scribblemix/rings.hpp"
#include "scribblemix/train.hpp"

namespace fs = std::filesystem;
using namespace scribblemix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

std::string fmt6(double v) { return fmt("%.6f", v); }

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Scratch space for datasets and run artifacts, wiped per invocation.
fs::path scratch_root() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "smx_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

// 20-sample dataset shared by the determinism and reload checks.
std::string data20() {
  static std::string dir = [] {
    fs::path p = scratch_root() / "data20";
    build_dataset(p.string(), 20, 32, 2026, kDefaultCoverage);
    return p.string();
  }();
  return dir;
}

// ---- 1: finite-difference gradient suite ------------------------------------

Outcome check_gradients() {
  const double t0 = now_s();
  const auto rows = run_gradcheck_suite(42);
  const double dt = now_s() - t0;
  int failed = 0;
  double worst = 0.0;
  for (const auto& r : rows) {
    failed += !r.pass;
    worst = std::max(worst, r.max_rel_err);
  }
  const bool ok = failed == 0 && dt < 120.0;
  return {ok, fmt("%zu/%zu rows within tolerance, worst rel err %.2e, %.1fs (limit 120s)",
                  rows.size() - failed, rows.size(), worst, dt)};
}

// ---- 2: largest-component morphology vs flood-fill oracle -------------------

DenseMask oracle_largest_cc(const std::vector<uint8_t>& cls, int k, int h, int w) {
  DenseMask out(k, h, w);
  out.cls = cls;
  const int64_t n = int64_t(h) * w;
  for (int c = 1; c < k; ++c) {
    std::vector<uint8_t> vis(size_t(n), 0);
    std::vector<int64_t> winner;
    for (int64_t p = 0; p < n; ++p) {
      if (cls[size_t(p)] != c || vis[size_t(p)]) continue;
      std::vector<int64_t> comp{p}, stack{p};
      vis[size_t(p)] = 1;
      while (!stack.empty()) {
        const int64_t q = stack.back();
        stack.pop_back();
        const int y = int(q / w), x = int(q % w);
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          const int ny = y + dy[d], nx = x + dx[d];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int64_t np = int64_t(ny) * w + nx;
          if (cls[size_t(np)] != c || vis[size_t(np)]) continue;
          vis[size_t(np)] = 1;
          comp.push_back(np);
          stack.push_back(np);
        }
      }
      // scan order discovers components by their smallest pixel, so the first
      // component of maximal size is the tie-break winner
      if (comp.size() > winner.size()) winner = std::move(comp);
    }
    std::vector<uint8_t> keep(size_t(n), 0);
    for (int64_t p : winner) keep[size_t(p)] = 1;
    for (int64_t p = 0; p < n; ++p)
      if (cls[size_t(p)] == c && !keep[size_t(p)]) out.cls[size_t(p)] = 0;
  }
  return out;
}

Outcome check_morphology() {
  RngStream rng(202, 0);
  const int h = 16, w = 16, k = 4, trials = 100;
  int agree = 0;
  for (int t = 0; t < trials; ++t) {
    RngStream tr = rng.derive(uint64_t(t));
    std::vector<uint8_t> cls(size_t(h) * w);
    for (auto& c : cls) c = uint8_t(tr.next_below(k));
    const DenseMask got = largest_cc_mask(cls, k, h, w);
    const DenseMask want = oracle_largest_cc(cls, k, h, w);
    agree += got.cls == want.cls;
  }
  return {agree == trials, fmt("%d/%d random %dx%d masks match exactly", agree, trials, h, w)};
}

// ---- 3: mix-plan optimizer quality -------------------------------------------

Outcome check_mix_optimizer() {
  const double t0 = now_s();
  RngStream rng(303, 0);
  const MixSearchConfig cfg{4, 1, 4};  // 8x8 saliency -> 2x2 block grid
  const int trials = 100;
  int matched = 0, dominated = 0, monotone = 0;
  for (int t = 0; t < trials; ++t) {
    RngStream tr = rng.derive(uint64_t(t));
    SaliencyMap s1{8, 8, {}}, s2{8, 8, {}};
    s1.values.resize(64);
    s2.values.resize(64);
    for (auto& v : s1.values) v = float(tr.next_double());
    for (auto& v : s2.values) v = float(tr.next_double());
    std::vector<double> history;
    const MixPlan plan = optimize_mix_plan(s1, s2, cfg, &history);
    const MixPlan best = exhaustive_mix_plan(s1, s2, cfg);
    double sum1 = 0.0, sum2 = 0.0;
    for (float v : s1.values) sum1 += v;
    for (float v : s2.values) sum2 += v;
    dominated += plan.objective >= std::max(sum1, sum2) - 1e-9;
    bool mono = true;
    for (size_t i = 1; i < history.size(); ++i) mono &= history[i] >= history[i - 1] - 1e-12;
    monotone += mono;
    matched += std::abs(plan.objective - best.objective) <= 1e-9 &&
               plan.objective <= best.objective + 1e-9;
  }
  const double dt = now_s() - t0;
  const bool ok = dominated == trials && monotone == trials && matched >= 90 && dt < 60.0;
  return {ok, fmt(">= pure-source %d/%d, monotone %d/%d, exhaustive match %d/%d (need >=90), "
                  "%.1fs (limit 60s)",
                  dominated, trials, monotone, trials, matched, trials, dt)};
}

// ---- 4: global consistency collapses to -1 for a per-pixel segmentor --------

Outcome check_global_consistency() {
  RngStream rng(404, 0);
  const int hw = 32, trials = 50;
  // channelwise relu of scaled copies: acts per pixel and maps 0 to 0, so
  // predict-then-mix-then-occlude equals predict-on-occluded-mix
  auto perpixel = [](GraphF& g, int x) {
    const int c0 = g.relu(x);
    const int c1 = g.relu(g.scale(x, -1.0f));
    const int c2 = g.relu(g.scale(x, 2.0f));
    const int c3 = g.relu(g.scale(x, -2.0f));
    return g.concat_channels(g.concat_channels(c0, c1), g.concat_channels(c2, c3));
  };
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    RngStream tr = rng.derive(uint64_t(t));
    Tensor x1({1, hw, hw}), x2({1, hw, hw});
    for (auto& v : x1.data) v = float(tr.uniform(-1.0, 1.0));
    for (auto& v : x2.data) v = float(tr.uniform(-1.0, 1.0));
    SaliencyMap s1{hw, hw, {}}, s2{hw, hw, {}};
    s1.values.resize(size_t(hw) * hw);
    s2.values.resize(size_t(hw) * hw);
    for (auto& v : s1.values) v = float(tr.next_double());
    for (auto& v : s2.values) v = float(tr.next_double());
    const MixSearchConfig cfg{8, 1, 4};
    const MixPlan plan12 = optimize_mix_plan(s1, s2, cfg);
    const MixPlan plan21 = optimize_mix_plan(s2, s1, cfg);
    auto draw_occ = [&](RngStream occ_rng) {
      for (int attempt = 0; attempt < 100; ++attempt) {
        const OcclusionMask m = sample_occlusion(occ_rng, hw, hw, 0.15);
        if (m.occluded_count() > 0 && m.occluded_count() < int64_t(hw) * hw) return m;
      }
      throw std::runtime_error("no non-degenerate occlusion in 100 draws");
    };
    const OcclusionMask occ12 = draw_occ(tr.derive(1));
    const OcclusionMask occ21 = draw_occ(tr.derive(2));
    GraphF g;
    const int pred1 = perpixel(g, g.constant(x1));
    const int pred2 = perpixel(g, g.constant(x2));
    const int pred_o12 = perpixel(g, g.constant(apply_occlusion(occ12, apply_mix(plan12, x1, x2))));
    const int pred_o21 = perpixel(g, g.constant(apply_occlusion(occ21, apply_mix(plan21, x2, x1))));
    const int gc = global_consistency(g, plan12, occ12, plan21, occ21, pred1, pred2, pred_o12,
                                      pred_o21);
    worst = std::max(worst, std::abs(double(g.val(gc).data[0]) + 1.0));
  }
  return {worst <= 1e-6, fmt("worst |value + 1| = %.2e over %d plans (tol 1e-6)", worst, trials)};
}

// ---- 5: hand-computed loss values --------------------------------------------

Outcome check_loss_units() {
  GraphF g;
  std::string detail;
  bool ok = true;
  auto record = [&](const char* name, double got, double want, double tol, bool exact = false) {
    const bool good = exact ? got == want : std::abs(got - want) <= tol;
    ok &= good;
    if (!detail.empty()) detail += ", ";
    detail += fmt("%s %.6f%s", name, got, good ? "" : " (MISMATCH)");
  };

  Tensor p({2, 1, 1});
  p.data = {0.5f, 0.5f};
  ScribbleLabel y(2, 1, 1);
  y.set(0, 0, 0);
  record("partial_ce", g.val(g.partial_ce(g.constant(p), y)).data[0], 0.693147, 1e-5);

  Tensor a({2, 1, 1}), b({2, 1, 1});
  a.data = {1.0f, 0.0f};
  b.data = {1.0f, 1.0f};
  record("ncs", g.val(g.ncs(g.constant(a), g.constant(b))).data[0], -0.707107, 1e-5);

  const DiceResult dr =
      dice_score(std::vector<uint8_t>{1, 1, 0, 0}, std::vector<uint8_t>{0, 1, 1, 0}, 2);
  record("dice", dr.mean_foreground, 0.5, 0.0, /*exact=*/true);

  auto scalar = [&](float v) {
    Tensor t({1});
    t.data[0] = v;
    return g.constant(t);
  };
  const int total = total_loss_node(g, scalar(0.25f), scalar(0.35f), scalar(-1.0f),
                                    scalar(-0.7f), LossWeights{});
  record("total", g.val(total).data[0], -0.15, 1e-6);
  return {ok, detail};
}

// ---- 6: bitwise training determinism -----------------------------------------

Outcome check_determinism() {
  TrainConfig cfg;
  cfg.epochs = 3;
  const fs::path a = scratch_root() / "det_a", b = scratch_root() / "det_b";
  train(cfg, data20(), a.string());
  train(cfg, data20(), b.string());
  bool ok = true;
  std::string diffs;
  for (const char* f : {"trace.csv", "best.ckpt", "final.ckpt"}) {
    if (read_bytes(a / f) != read_bytes(b / f)) {
      ok = false;
      diffs += diffs.empty() ? f : std::string(", ") + f;
    }
  }
  return {ok, ok ? fmt("trace.csv, best.ckpt, final.ckpt byte-identical over %d epochs",
                       cfg.epochs)
                 : "differs: " + diffs};
}

// ---- 7: directional ablation at desk scale -----------------------------------

Outcome check_ablation() {
  const fs::path root = fs::current_path() / "acceptance_ablation";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string data = (root / "data").string();
  build_dataset(data, 200, 64, 7, kDefaultCoverage);
  const TrainConfig base;  // 200 epochs, seed 42
  const double t0 = now_s();
  const auto rows = ablate(base, data, {1, 2, 3, 4, 5}, 3, (root / "runs").string());
  const double dt = now_s() - t0;
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  const double budget = 2700.0 * 4.0 / std::min(4u, cores);
  const double row1 = rows.front().mean_dice, row5 = rows.back().mean_dice;
  std::string means;
  for (const auto& r : rows) means += fmt("%s%.4f", means.empty() ? "" : "/", r.mean_dice);
  const bool ok = row1 >= 0.55 && row5 >= row1 + 0.02 && dt < budget;
  return {ok, fmt("row means %s; scribble-only %.4f (need >=0.55), full method %.4f "
                  "(need >=%.4f), %.0fs (budget %.0fs at %u cores)",
                  means.c_str(), row1, row5, row1 + 0.02, dt, budget, cores)};
}

// ---- 8: scribble coverage audit ----------------------------------------------

Outcome check_coverage() {
  RngStream rng(808, 0);
  const int samples = 100, size = 64, k = 4;
  std::vector<double> frac(k, 0.0);
  for (int i = 0; i < samples; ++i) {
    const RawSample s = gen_rings_sample(rng.derive(1, uint64_t(i)), size, k);
    const ScribbleLabel scr = gen_scribble(s.mask, rng.derive(2, uint64_t(i)), kDefaultCoverage);
    std::vector<int64_t> region(k, 0), labeled(k, 0);
    for (size_t p = 0; p < s.mask.cls.size(); ++p) {
      ++region[s.mask.cls[p]];
      if (scr.cls[p] != kUnlabeled) ++labeled[scr.cls[p]];
    }
    for (int c = 0; c < k; ++c) frac[size_t(c)] += double(labeled[c]) / double(region[c]);
  }
  bool ok = true;
  std::string detail;
  for (int c = 0; c < k; ++c) {
    const double got = frac[size_t(c)] / samples;
    const double rel = std::abs(got - kDefaultCoverage[size_t(c)]) / kDefaultCoverage[size_t(c)];
    ok &= rel <= 0.30;
    detail += fmt("%sclass %d %.4f vs %.3f (%+.0f%%)", c ? ", " : "", c, got,
                  kDefaultCoverage[size_t(c)], 100.0 * (got / kDefaultCoverage[size_t(c)] - 1.0));
  }
  return {ok, detail + " over 100 samples (tol 30%)"};
}

// ---- 9: serialization round-trips and checkpoint reload ----------------------

Outcome check_roundtrip() {
  RngStream rng(909, 0);
  bool ok = true;
  std::string detail;
  auto require = [&](bool good, const char* what) {
    ok &= good;
    if (!good) detail += detail.empty() ? what : std::string(", ") + what;
  };

  Tensor t({3, 5, 7});
  for (auto& v : t.data) v = float(rng.uniform(-2.0, 2.0));
  std::stringstream fs32;
  write_nst(fs32, t);
  const NstValue v32 = read_nst(fs32);
  require(v32.dtype == 0 && v32.shape == t.shape &&
              std::memcmp(v32.f32.data(), t.data.data(), t.data.size() * sizeof(float)) == 0,
          "f32 stream round-trip");

  std::vector<uint8_t> bytes(24);
  for (auto& v : bytes) v = uint8_t(rng.next_below(256));
  std::stringstream fu8;
  write_nst(fu8, {4, 6}, bytes);
  const NstValue vu8 = read_nst(fu8);
  require(vu8.dtype == 1 && vu8.shape == std::vector<int>({4, 6}) && vu8.u8 == bytes,
          "u8 stream round-trip");

  const fs::path p1 = scratch_root() / "rt1.nst", p2 = scratch_root() / "rt2.nst";
  write_nst_file(p1.string(), t);
  write_nst_file(p2.string(), read_nst_file(p1.string()).as_tensor());
  require(read_bytes(p1) == read_bytes(p2), "file round-trip");

  const SegmentorParams params = init_segmentor(4, 8, RngStream(77, 0));
  const fs::path ck1 = scratch_root() / "m1.ckpt", ck2 = scratch_root() / "m2.ckpt";
  save_checkpoint(ck1.string(), params);
  const SegmentorParams loaded = load_checkpoint(ck1.string());
  save_checkpoint(ck2.string(), loaded);
  require(read_bytes(ck1) == read_bytes(ck2), "checkpoint re-save");

  const fs::path csv1 = scratch_root() / "ev1.csv", csv2 = scratch_root() / "ev2.csv";
  const EvalSummary e1 = evaluate(params, data20(), "test", csv1.string());
  const EvalSummary e2 = evaluate(loaded, data20(), "test", csv2.string());
  bool dice_ok = fmt6(e1.mean_foreground) == fmt6(e2.mean_foreground);
  for (size_t c = 0; c < e1.mean_per_class.size(); ++c)
    dice_ok &= fmt6(e1.mean_per_class[c]) == fmt6(e2.mean_per_class[c]);
  require(dice_ok && read_bytes(csv1) == read_bytes(csv2), "reloaded evaluation dice");

  return {ok, ok ? fmt("streams, files and checkpoints bit-exact; reloaded dice %s matches",
                       fmt6(e1.mean_foreground).c_str())
                 : "failed: " + detail};
}

}  // namespace

int main(int argc, char** argv) {
  bool fast = true, ablation = true;
  if (argc == 2 && std::string(argv[1]) == "--fast") {
    ablation = false;
  } else if (argc == 2 && std::string(argv[1]) == "--ablation") {
    fast = false;
  } else if (argc != 1) {
    std::fprintf(stderr, "usage: acceptance [--fast|--ablation]\n");
    return 1;
  }

  struct Row {
    int id;
    const char* title;
    bool enabled;
    std::function<Outcome()> fn;
  };
  const Row rows[] = {
      {1, "gradient suite", fast, check_gradients},
      {2, "largest-component morphology", fast, check_morphology},
      {3, "mix-plan optimizer", fast, check_mix_optimizer},
      {4, "global consistency identity", fast, check_global_consistency},
      {5, "loss unit values", fast, check_loss_units},
      {6, "training determinism", fast, check_determinism},
      {7, "directional ablation", ablation, check_ablation},
      {8, "scribble coverage", fast, check_coverage},
      {9, "round-trips and reload", fast, check_roundtrip},
  };

  int failures = 0;
  for (const Row& r : rows) {
    if (!r.enabled) {
      std::printf("criterion %d SKIP %s\n", r.id, r.title);
      std::fflush(stdout);
      continue;
    }
    std::fprintf(stderr, "[acceptance] running criterion %d: %s\n", r.id, r.title);
    Outcome out;
    try {
      out = r.fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d %s %s: %s\n", r.id, out.pass ? "PASS" : "FAIL", r.title,
                out.detail.c_str());
    std::fflush(stdout);
    failures += !out.pass;
  }
  return failures == 0 ? 0 : 3;
}
