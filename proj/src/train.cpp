#include "scribblemix/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <utility>
#include <variant>

#include "scribblemix/gradcheck.hpp"
#include "scribblemix/mix.hpp"
#include "scribblemix/nst.hpp"

namespace scribblemix {

namespace fs = std::filesystem;

namespace {

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  check(os.good(), "cannot open ", p.string(), " for writing");
  os << text;
  os.flush();
  check(os.good(), "failed writing ", p.string());
}

int64_t labeled_of(const MixedTarget& t) {
  if (const auto* hard = std::get_if<ScribbleLabel>(&t)) return hard->labeled_count();
  return std::get<SoftTarget>(t).labeled_count();
}

double mean_split_dice(const SegmentorParams& params, const std::vector<Sample>& split) {
  check(!split.empty(), "dice over an empty split");
  double acc = 0.0;
  for (const Sample& s : split) {
    const Prediction pr = segmentor_forward(params, s.image);
    acc += dice_score(argmax_classes(pr.probs), s.mask.cls, params.num_classes).mean_foreground;
  }
  return acc / double(split.size());
}

}  // namespace

LossBreakdown train_step(SegmentorParams& params, Adam& adam, const Sample& a, const Sample& b,
                         const TrainConfig& cfg, RngStream step_rng) {
  cfg.validate();
  check(a.image.shape == b.image.shape, "train_step: paired samples have different shapes ",
        shape_str(a.image.shape), " vs ", shape_str(b.image.shape));
  const int H = a.image.shape[1], W = a.image.shape[2];
  const LossWeights& lw = cfg.weights;
  const bool puzzle = cfg.mix_strategy == "puzzle";
  const bool mixing = cfg.mix_strategy != "none" && (lw.lambda2 > 0.0f || lw.lambda3 > 0.0f);
  const OcclusionLabelPolicy policy = cfg.occlusion_policy();
  const NcsMode mode = cfg.ncs_mode();

  GraphF g;
  const SegmentorNodes ids = push_segmentor(g, params);
  const int x1 = g.leaf(a.image, puzzle && mixing);
  const int x2 = g.leaf(b.image, puzzle && mixing);
  const int pred1 = wire_segmentor(g, ids, x1);
  const int pred2 = wire_segmentor(g, ids, x2);
  const int ce1 = g.partial_ce(pred1, a.scribble);
  const int ce2 = g.partial_ce(pred2, b.scribble);
  const int unmix = pair_mean(g, ce1, ce2);

  MixPlan plan12, plan21;
  OcclusionMask occ12 = OcclusionMask::none(H, W), occ21 = OcclusionMask::none(H, W);
  double lam12 = 1.0, lam21 = 1.0;
  CutRect rect12, rect21;
  int pred_o12 = -1, pred_o21 = -1;
  MixedTarget y12, y21;
  int64_t labeled_mix = 0;

  if (mixing) {
    if (cfg.occlusion) {
      RngStream r12 = step_rng.derive(0), r21 = step_rng.derive(1);
      occ12 = sample_occlusion(r12, H, W, cfg.side_frac);
      occ21 = sample_occlusion(r21, H, W, cfg.side_frac);
    }
    Tensor xm12, xm21;
    if (puzzle) {
      // Input-gradient saliency from the plain CE terms; parameter gradients
      // stay untouched so the tape can be reused for the real update.
      g.backward(ce1, {.into_params = false});
      g.backward(ce2, {.into_params = false});
      const SaliencyMap s1 = saliency_from_grad(g.grad_of(x1), 1, H, W);
      const SaliencyMap s2 = saliency_from_grad(g.grad_of(x2), 1, H, W);
      g.zero_grads();
      const MixSearchConfig mcfg{cfg.block_size, cfg.window_radius, cfg.n_iter};
      plan12 = optimize_mix_plan(s1, s2, mcfg);
      plan21 = optimize_mix_plan(s2, s1, mcfg);
      xm12 = apply_mix(plan12, a.image, b.image);
      xm21 = apply_mix(plan21, b.image, a.image);
      ScribbleLabel h12 = apply_mix(plan12, a.scribble, b.scribble);
      ScribbleLabel h21 = apply_mix(plan21, b.scribble, a.scribble);
      if (cfg.occlusion) {
        h12 = apply_occlusion(occ12, h12, policy);
        h21 = apply_occlusion(occ21, h21, policy);
      }
      y12 = std::move(h12);
      y21 = std::move(h21);
    } else if (cfg.mix_strategy == "mixup") {
      RngStream r12 = step_rng.derive(2), r21 = step_rng.derive(3);
      MixupResult m12 = mixup_linear(r12, a.image, a.scribble, b.image, b.scribble,
                                     cfg.mixup_alpha);
      MixupResult m21 = mixup_linear(r21, b.image, b.scribble, a.image, a.scribble,
                                     cfg.mixup_alpha);
      lam12 = m12.lambda;
      lam21 = m21.lambda;
      xm12 = std::move(m12.image);
      xm21 = std::move(m21.image);
      SoftTarget t12 = std::move(m12.target), t21 = std::move(m21.target);
      if (cfg.occlusion) {
        t12 = apply_occlusion(occ12, t12, policy);
        t21 = apply_occlusion(occ21, t21, policy);
      }
      y12 = std::move(t12);
      y21 = std::move(t21);
    } else {  // cutmix
      RngStream r12 = step_rng.derive(4), r21 = step_rng.derive(5);
      CutmixResult c12 = cutmix(r12, a.image, a.scribble, b.image, b.scribble);
      CutmixResult c21 = cutmix(r21, b.image, b.scribble, a.image, a.scribble);
      rect12 = c12.rect;
      rect21 = c21.rect;
      xm12 = std::move(c12.image);
      xm21 = std::move(c21.image);
      ScribbleLabel h12 = std::move(c12.label), h21 = std::move(c21.label);
      if (cfg.occlusion) {
        h12 = apply_occlusion(occ12, h12, policy);
        h21 = apply_occlusion(occ21, h21, policy);
      }
      y12 = std::move(h12);
      y21 = std::move(h21);
    }
    if (cfg.occlusion) {
      xm12 = apply_occlusion(occ12, xm12);
      xm21 = apply_occlusion(occ21, xm21);
    }
    labeled_mix = labeled_of(y12) + labeled_of(y21);
    pred_o12 = wire_segmentor(g, ids, g.constant(std::move(xm12)));
    pred_o21 = wire_segmentor(g, ids, g.constant(std::move(xm21)));
  }

  int mix_node = -1, cong_node = -1, conl_node = -1;
  if (mixing && lw.lambda2 > 0.0f) mix_node = loss_mix(g, pred_o12, y12, pred_o21, y21);
  if (mixing && lw.lambda3 > 0.0f) {
    if (puzzle) {
      cong_node = global_consistency(g, plan12, occ12, plan21, occ21, pred1, pred2, pred_o12,
                                     pred_o21, cfg.stopgrad, mode);
    } else {
      const int a1 = cfg.stopgrad ? g.detach(pred1) : pred1;
      const int a2 = cfg.stopgrad ? g.detach(pred2) : pred2;
      auto mixed_pred = [&](int pa, int pb, int dir) {
        if (cfg.mix_strategy == "mixup") {
          const float l = float(dir == 0 ? lam12 : lam21);
          return g.add(g.scale(pa, l), g.scale(pb, 1.0f - l));
        }
        return g.pixel_select(pa, pb, cutmix_table(H, W, dir == 0 ? rect12 : rect21));
      };
      const int p12 = g.occlude(mixed_pred(a1, a2, 0), occ12.raster);
      const int p21 = g.occlude(mixed_pred(a2, a1, 1), occ21.raster);
      cong_node = pair_mean(g, ncs_node(g, p12, pred_o12, mode),
                            ncs_node(g, p21, pred_o21, mode));
    }
  }
  if (lw.lambda4 > 0.0f) conl_node = local_consistency(g, pred1, pred2, mode);

  const int total = total_loss_node(g, lw.lambda1 > 0.0f ? unmix : -1, mix_node, cong_node,
                                    conl_node, lw);
  check(total >= 0, "train_step: every loss term is disabled");

  LossBreakdown out;
  out.unmix = double(g.val(unmix).data[0]);
  if (mix_node >= 0) out.mix = double(g.val(mix_node).data[0]);
  if (cong_node >= 0) out.con_g = double(g.val(cong_node).data[0]);
  if (conl_node >= 0) out.con_l = double(g.val(conl_node).data[0]);
  out.total = double(g.val(total).data[0]);
  out.labeled_unmix = a.scribble.labeled_count() + b.scribble.labeled_count();
  out.labeled_mix = labeled_mix;
  if (!std::isfinite(out.total)) {
    std::string diag;
    if (puzzle && mixing)
      diag = "\nplan 1->2:\n" + plan_to_string(plan12) + "plan 2->1:\n" + plan_to_string(plan21);
    fail("train_step: non-finite total loss (unmix=", out.unmix, " mix=", out.mix,
         " con_g=", out.con_g, " con_l=", out.con_l, ")", diag);
  }

  g.backward(total);
  adam.begin_step();
  auto update = [&](int node_id, Tensor& param, int slot) {
    const std::vector<float>& gr = g.grad_of(node_id);
    if (gr.empty()) {
      const std::vector<float> zeros(param.data.size(), 0.0f);
      adam.step_param(slot, param.data, zeros);
    } else {
      adam.step_param(slot, param.data, gr);
    }
  };
  for (size_t l = 0; l < params.weights.size(); ++l) {
    update(ids.w_ids[l], params.weights[l], int(2 * l));
    update(ids.b_ids[l], params.biases[l], int(2 * l + 1));
  }
  return out;
}

RunResult train(const TrainConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  check(!ec, "train: cannot create ", out_dir, ": ", ec.message());

  const auto manifest = read_manifest(data_dir);
  auto load_split = [&](const char* sp) {
    std::vector<Sample> out;
    for (const ManifestRow& row : filter_split(manifest, sp))
      out.push_back(load_sample(data_dir, row, cfg.num_classes));
    return out;
  };
  const std::vector<Sample> train_set = load_split("train");
  const std::vector<Sample> val_set = load_split("val");
  check(train_set.size() >= 2, "train: need at least 2 training samples, found ",
        train_set.size());
  check(!val_set.empty(), "train: val split is empty");

  RngStream root(cfg.seed, 0);
  SegmentorParams params = init_segmentor(cfg.num_classes, cfg.base_channels, root.derive(4, 0));
  Adam adam(cfg.lr);
  for (size_t l = 0; l < params.weights.size(); ++l) {
    adam.register_param(params.weights[l].data.size());
    adam.register_param(params.biases[l].data.size());
  }

  RunResult res;
  res.cfg = cfg;
  const fs::path out(out_dir);
  std::ofstream trace(out / "trace.csv", std::ios::binary);
  check(trace.good(), "train: cannot open ", (out / "trace.csv").string());
  trace << "epoch,unmix,mix,con_g,con_l,total,val_dice\n";

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t(0));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    seeded_shuffle(order, root.derive(5, uint64_t(epoch)));
    LossBreakdown sum;
    int steps = 0;
    for (size_t i = 0; i + 1 < order.size(); i += 2) {
      const RngStream srng = root.derive(6, uint64_t(epoch) * 1000003ull + uint64_t(steps));
      const LossBreakdown lb =
          train_step(params, adam, train_set[order[i]], train_set[order[i + 1]], cfg, srng);
      sum.unmix += lb.unmix;
      sum.mix += lb.mix;
      sum.con_g += lb.con_g;
      sum.con_l += lb.con_l;
      sum.total += lb.total;
      ++steps;
    }
    EpochStats es;
    es.mean = {sum.unmix / steps, sum.mix / steps,   sum.con_g / steps,
               sum.con_l / steps, sum.total / steps, 0,
               0};
    es.val_dice = mean_split_dice(params, val_set);
    res.trace.push_back(es);
    trace << epoch << ',' << fmt6(es.mean.unmix) << ',' << fmt6(es.mean.mix) << ','
          << fmt6(es.mean.con_g) << ',' << fmt6(es.mean.con_l) << ',' << fmt6(es.mean.total)
          << ',' << fmt6(es.val_dice) << '\n';
    trace.flush();
    if (res.best_epoch < 0 || es.val_dice > res.best_val_dice) {
      res.best_epoch = epoch;
      res.best_val_dice = es.val_dice;
      save_checkpoint((out / "best.ckpt").string(), params);
    }
    std::fprintf(stderr, "[train] epoch %d/%d total %.4f val_dice %.4f\n", epoch + 1, cfg.epochs,
                 es.mean.total, es.val_dice);
  }
  trace.close();
  res.final_val_dice = res.trace.back().val_dice;
  save_checkpoint((out / "final.ckpt").string(), params);

  const SegmentorParams best = load_checkpoint((out / "best.ckpt").string());
  const EvalSummary test =
      evaluate(best, data_dir, "test", (out / "test_report.csv").string());
  res.test_dice = test.mean_foreground;
  res.test_per_class = test.mean_per_class;
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::string rep = config_to_string(cfg);
  rep += "\n";
  rep += "train_samples " + std::to_string(train_set.size()) + "\n";
  rep += "val_samples " + std::to_string(val_set.size()) + "\n";
  rep += "pairs_per_epoch " + std::to_string(train_set.size() / 2) + "\n";
  rep += "best_epoch " + std::to_string(res.best_epoch) + "\n";
  rep += "best_val_dice " + fmt6(res.best_val_dice) + "\n";
  rep += "final_val_dice " + fmt6(res.final_val_dice) + "\n";
  rep += "test_dice_best " + fmt6(res.test_dice) + "\n";
  for (size_t c = 0; c < res.test_per_class.size(); ++c)
    rep += "test_dice_class" + std::to_string(c + 1) + " " + fmt6(res.test_per_class[c]) + "\n";
  rep += "wall_seconds " + fmt6(res.wall_seconds) + "\n";
  write_text(out / "report.txt", rep);
  return res;
}

EvalSummary evaluate(const SegmentorParams& params, const std::string& data_dir,
                     const std::string& split, const std::string& report_csv) {
  params.validate();
  const auto rows = filter_split(read_manifest(data_dir), split);
  check(!rows.empty(), "evaluate: split '", split, "' is empty");
  const int k = params.num_classes;
  EvalSummary sum;
  sum.mean_per_class.assign(size_t(k - 1), 0.0);
  sum.std_per_class.assign(size_t(k - 1), 0.0);
  std::vector<double> sq_per_class(size_t(k - 1), 0.0);
  double sq_fg = 0.0;
  std::string csv = "id";
  for (int c = 1; c < k; ++c) csv += ",dice_" + std::to_string(c);
  csv += ",mean_fg\n";
  for (const ManifestRow& row : rows) {
    const Sample s = load_sample(data_dir, row, k);
    const Prediction pr = segmentor_forward(params, s.image);
    const DiceResult d = dice_score(argmax_classes(pr.probs), s.mask.cls, k);
    csv += row.id;
    for (int c = 0; c < k - 1; ++c) {
      csv += ",";
      csv += fmt6(d.per_class[size_t(c)]);
      sum.mean_per_class[size_t(c)] += d.per_class[size_t(c)];
      sq_per_class[size_t(c)] += d.per_class[size_t(c)] * d.per_class[size_t(c)];
    }
    csv += ",";
    csv += fmt6(d.mean_foreground);
    csv += "\n";
    sum.mean_foreground += d.mean_foreground;
    sq_fg += d.mean_foreground * d.mean_foreground;
    ++sum.images;
  }
  const double n = double(sum.images);
  for (int c = 0; c < k - 1; ++c) {
    sum.mean_per_class[size_t(c)] /= n;
    const double var =
        sq_per_class[size_t(c)] / n - sum.mean_per_class[size_t(c)] * sum.mean_per_class[size_t(c)];
    sum.std_per_class[size_t(c)] = std::sqrt(std::max(0.0, var));
  }
  sum.mean_foreground /= n;
  sum.std_foreground =
      std::sqrt(std::max(0.0, sq_fg / n - sum.mean_foreground * sum.mean_foreground));
  if (!report_csv.empty()) write_text(report_csv, csv);
  return sum;
}

TrainConfig ablation_config(const TrainConfig& base, int row) {
  check(row >= 1 && row <= 5, "ablation: row ", row, " outside 1..5");
  TrainConfig c = base;
  c.weights.lambda2 = row >= 2 ? base.weights.lambda2 : 0.0f;
  c.weights.lambda3 = row >= 3 ? base.weights.lambda3 : 0.0f;
  c.weights.lambda4 = row >= 5 ? base.weights.lambda4 : 0.0f;
  c.mix_strategy = row >= 2 ? "puzzle" : "none";
  c.occlusion = row >= 4;
  return c;
}

std::vector<AblationRow> ablate(const TrainConfig& base, const std::string& data_dir,
                                const std::vector<int>& rows, int seeds,
                                const std::string& out_dir) {
  check(seeds >= 1, "ablate: need at least one seed");
  check(!rows.empty(), "ablate: no rows requested");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  check(!ec, "ablate: cannot create ", out_dir, ": ", ec.message());

  std::string csv = "row,lambda_unmix,lambda_mix,lambda_con_g,lambda_con_l,mix_strategy,"
                    "occlusion,mean_test_dice";
  for (int s = 0; s < seeds; ++s) csv += ",dice_seed" + std::to_string(s);
  csv += "\n";

  std::vector<AblationRow> out;
  for (int row : rows) {
    AblationRow ar;
    ar.row = row;
    ar.cfg = ablation_config(base, row);
    for (int s = 0; s < seeds; ++s) {
      TrainConfig c = ar.cfg;
      c.seed = base.seed + uint64_t(s);
      const std::string run_dir =
          (fs::path(out_dir) / ("row" + std::to_string(row) + "_seed" + std::to_string(s)))
              .string();
      std::fprintf(stderr, "[ablate] row %d seed %d -> %s\n", row, s, run_dir.c_str());
      const RunResult rr = train(c, data_dir, run_dir);
      ar.seed_dice.push_back(rr.test_dice);
      std::fprintf(stderr, "[ablate] row %d seed %d test_dice %.6f (%.1fs)\n", row, s,
                   rr.test_dice, rr.wall_seconds);
    }
    ar.mean_dice = std::accumulate(ar.seed_dice.begin(), ar.seed_dice.end(), 0.0) /
                   double(ar.seed_dice.size());
    out.push_back(ar);

    csv += std::to_string(row);
    csv += "," + fmt6(ar.cfg.weights.lambda1) + "," + fmt6(ar.cfg.weights.lambda2) + "," +
           fmt6(ar.cfg.weights.lambda3) + "," + fmt6(ar.cfg.weights.lambda4);
    csv += "," + ar.cfg.mix_strategy;
    csv += ar.cfg.occlusion ? ",on" : ",off";
    csv += "," + fmt6(ar.mean_dice);
    for (double d : ar.seed_dice) csv += "," + fmt6(d);
    csv += "\n";
    // rewritten after every row so partial progress is already on disk
    write_text(fs::path(out_dir) / "ablation.csv", csv);
  }
  return out;
}

void mix_demo(const std::string& data_dir, const std::string& out_dir, uint64_t seed,
              const std::string& strategy) {
  check(strategy == "none" || strategy == "mixup" || strategy == "cutmix" ||
            strategy == "puzzle",
        "mix-demo: unknown strategy '", strategy, "'");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  check(!ec, "mix-demo: cannot create ", out_dir, ": ", ec.message());

  const TrainConfig defaults;
  const auto train_rows = filter_split(read_manifest(data_dir), "train");
  check(train_rows.size() >= 2, "mix-demo: need at least two training samples");
  const Sample a = load_sample(data_dir, train_rows[0], defaults.num_classes);
  const Sample b = load_sample(data_dir, train_rows[1], defaults.num_classes);
  const int H = a.image.shape[1], W = a.image.shape[2];
  const int K = defaults.num_classes;
  RngStream root(seed, 0);

  Tensor xm;
  MixedTarget ym;
  std::string plan_text;
  if (strategy == "puzzle") {
    const SegmentorParams params =
        init_segmentor(K, defaults.base_channels, root.derive(4, 0));
    const SaliencyMap s1 = compute_saliency(params, a.image, a.scribble);
    const SaliencyMap s2 = compute_saliency(params, b.image, b.scribble);
    const MixSearchConfig mcfg{defaults.block_size, defaults.window_radius, defaults.n_iter};
    const MixPlan plan = optimize_mix_plan(s1, s2, mcfg);
    xm = apply_mix(plan, a.image, b.image);
    ym = apply_mix(plan, a.scribble, b.scribble);
    plan_text = plan_to_string(plan);
  } else if (strategy == "none") {
    xm = a.image;
    ym = a.scribble;
    plan_text =
        plan_to_string(MixPlan::identity(defaults.block_size, H / defaults.block_size,
                                         W / defaults.block_size));
  } else if (strategy == "mixup") {
    RngStream r = root.derive(2, 0);
    MixupResult m = mixup_linear(r, a.image, a.scribble, b.image, b.scribble,
                                 defaults.mixup_alpha);
    xm = std::move(m.image);
    ym = std::move(m.target);
    plan_text = "strategy mixup\nlambda " + fmt6(m.lambda) + "\n";
  } else {
    RngStream r = root.derive(3, 0);
    CutmixResult cm = cutmix(r, a.image, a.scribble, b.image, b.scribble);
    xm = std::move(cm.image);
    ym = std::move(cm.label);
    plan_text = "strategy cutmix\nrect x0 " + std::to_string(cm.rect.x0) + " y0 " +
                std::to_string(cm.rect.y0) + " w " + std::to_string(cm.rect.w) + " h " +
                std::to_string(cm.rect.h) + "\n";
  }

  RngStream ro = root.derive(0, 0);
  const OcclusionMask occ = sample_occlusion(ro, H, W, defaults.side_frac);
  const Tensor xo = apply_occlusion(occ, xm);
  MixedTarget yo;
  if (const auto* hard = std::get_if<ScribbleLabel>(&ym))
    yo = apply_occlusion(occ, *hard, defaults.occlusion_policy());
  else
    yo = apply_occlusion(occ, std::get<SoftTarget>(ym), defaults.occlusion_policy());

  const fs::path out(out_dir);
  auto dump_image = [&](const std::string& stem, const Tensor& t) {
    write_nst_file((out / (stem + ".nst")).string(), t);
    write_pgm((out / (stem + ".pgm")).string(), t.data.data(), H, W);
  };
  auto label_u8 = [&](const MixedTarget& t) {
    if (const auto* hard = std::get_if<ScribbleLabel>(&t)) return hard->cls;
    // soft targets preview as the heaviest class per pixel (ties -> lowest)
    const SoftTarget& st = std::get<SoftTarget>(t);
    std::vector<uint8_t> cls(size_t(H) * W, kUnlabeled);
    std::vector<float> best(size_t(H) * W, 0.0f);
    for (size_t i = 0; i < st.entries(); ++i) {
      const size_t p = size_t(st.pix[i]);
      if (st.wgt[i] > best[p] || (st.wgt[i] == best[p] && st.cls[i] < cls[p])) {
        best[p] = st.wgt[i];
        cls[p] = st.cls[i];
      }
    }
    return cls;
  };
  auto dump_label = [&](const std::string& stem, const std::vector<uint8_t>& cls) {
    write_nst_file((out / (stem + ".nst")).string(), {H, W}, cls);
    std::vector<uint8_t> px(cls.size());
    for (size_t i = 0; i < cls.size(); ++i)
      px[i] = cls[i] == kUnlabeled ? 0 : uint8_t((int(cls[i]) + 1) * 255 / K);
    write_pgm_raw((out / (stem + ".pgm")).string(), px.data(), H, W);
  };

  dump_image("x1", a.image);
  dump_image("x2", b.image);
  dump_image("xm12", xm);
  dump_image("xo12", xo);
  dump_label("y1", a.scribble.cls);
  dump_label("y2", b.scribble.cls);
  dump_label("ym12", label_u8(ym));
  dump_label("yo12", label_u8(yo));
  write_text(out / "plan.txt", plan_text);
}

// ---- finite-difference suite --------------------------------------------------

namespace {

using TD = TensorT<double>;
constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;
// Full-network rows pass through many relu/maxpool kinks and near-zero
// gradient components where finite differences lose accuracy, so they get a
// wider tolerance than the single-op rows.
constexpr double kDeepTol = 1e-3;

TD rand_tensor(RngStream& rng, const std::vector<int>& shape, double lo, double hi) {
  TD t(shape);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

ScribbleLabel rand_scribble(RngStream& rng, int k, int h, int w, double frac) {
  ScribbleLabel y(k, h, w);
  for (uint8_t& c : y.cls)
    if (rng.next_double() < frac) c = uint8_t(rng.next_below(uint64_t(k)));
  y.set(0, 0, 1);  // never fully unlabeled
  return y;
}

std::vector<uint8_t> rand_raster(RngStream& rng, int h, int w, double frac) {
  std::vector<uint8_t> m(size_t(h) * w, 0);
  for (uint8_t& v : m) v = rng.next_double() < frac ? 1 : 0;
  m[0] = 0;  // never fully occluded
  return m;
}

// Projects a tensor node onto a fixed direction so every op check reduces to a
// scalar; pulls the gradient of node `xi` when asked.
double project(GraphD& g, int node, const TD& proj, int xi, std::vector<double>* go) {
  const int s = g.sum(g.mul(node, g.constant(proj)));
  if (go) {
    g.backward(s);
    const std::vector<double>& gr = g.grad_of(xi);
    if (!gr.empty()) *go = gr;
  }
  return g.val(s).data[0];
}

double scalar_of(GraphD& g, int s, int xi, std::vector<double>* go) {
  if (go) {
    g.backward(s);
    const std::vector<double>& gr = g.grad_of(xi);
    if (!gr.empty()) *go = gr;
  }
  return g.val(s).data[0];
}

template <typename MakeOne>
void run_check(std::vector<GradCheckRow>& rows, RngStream& rng, const std::string& name,
               int instances, MakeOne&& make, double tol = kTol) {
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    RngStream inst = rng.derive(uint64_t(i));
    worst = std::max(worst, make(inst).max_rel_err);
  }
  rows.push_back({name, worst, tol, worst < tol});
}

// Double-precision segmentor stack drawn directly (no float round-trip).
struct SegStackD {
  std::vector<TD> w, b;
};

SegStackD rand_stack(RngStream& rng, int num_classes, int base_channels) {
  SegStackD st;
  for (const LayerSpec& ls : segmentor_layers(num_classes, base_channels)) {
    const double lim = 1.0 / std::sqrt(double(ls.cin) * ls.k * ls.k);
    st.w.push_back(rand_tensor(rng, {ls.cout, ls.cin, ls.k, ls.k}, -lim, lim));
    st.b.push_back(rand_tensor(rng, {ls.cout}, -0.05, 0.05));
  }
  return st;
}

SegmentorNodes push_stack(GraphD& g, const SegStackD& st, int leaf_w = -1, int leaf_b = -1,
                          const TD* leaf_val = nullptr) {
  SegmentorNodes ids;
  for (size_t l = 0; l < st.w.size(); ++l) {
    ids.w_ids.push_back(int(l) == leaf_w ? g.leaf(*leaf_val, true) : g.constant(st.w[l]));
    ids.b_ids.push_back(int(l) == leaf_b ? g.leaf(*leaf_val, true) : g.constant(st.b[l]));
  }
  return ids;
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(uint64_t seed) {
  std::vector<GradCheckRow> rows;
  RngStream root(seed, 7);

  {
    RngStream r = root.derive(0);
    run_check(rows, r, "conv2d_dx", 5, [](RngStream& rr) {
      const TD w = rand_tensor(rr, {3, 2, 3, 3}, -0.5, 0.5);
      const TD b = rand_tensor(rr, {3}, -0.2, 0.2);
      const TD proj = rand_tensor(rr, {3, 6, 6}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 6, 6}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.conv2d(xi, g.constant(w), g.constant(b)), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(1);
    run_check(rows, r, "conv2d_dw", 5, [](RngStream& rr) {
      const TD x = rand_tensor(rr, {2, 6, 6}, -1.0, 1.0);
      const TD b = rand_tensor(rr, {3}, -0.2, 0.2);
      const TD proj = rand_tensor(rr, {3, 6, 6}, -1.0, 1.0);
      const TD w0 = rand_tensor(rr, {3, 2, 3, 3}, -0.5, 0.5);
      auto f = [&](const TD& w, std::vector<double>* go) {
        GraphD g;
        const int wi = g.leaf(w, true);
        return project(g, g.conv2d(g.constant(x), wi, g.constant(b)), proj, wi, go);
      };
      return finite_diff_gradcheck(f, w0, kStep);
    });
  }
  {
    RngStream r = root.derive(2);
    run_check(rows, r, "conv2d_db", 5, [](RngStream& rr) {
      const TD x = rand_tensor(rr, {2, 6, 6}, -1.0, 1.0);
      const TD w = rand_tensor(rr, {3, 2, 3, 3}, -0.5, 0.5);
      const TD proj = rand_tensor(rr, {3, 6, 6}, -1.0, 1.0);
      const TD b0 = rand_tensor(rr, {3}, -0.2, 0.2);
      auto f = [&](const TD& b, std::vector<double>* go) {
        GraphD g;
        const int bi = g.leaf(b, true);
        return project(g, g.conv2d(g.constant(x), g.constant(w), bi), proj, bi, go);
      };
      return finite_diff_gradcheck(f, b0, kStep);
    });
  }
  {
    RngStream r = root.derive(3);
    run_check(rows, r, "conv2d_1x1_dx", 5, [](RngStream& rr) {
      const TD w = rand_tensor(rr, {2, 3, 1, 1}, -0.8, 0.8);
      const TD b = rand_tensor(rr, {2}, -0.2, 0.2);
      const TD proj = rand_tensor(rr, {2, 5, 5}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {3, 5, 5}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.conv2d(xi, g.constant(w), g.constant(b)), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(4);
    run_check(rows, r, "relu", 5, [](RngStream& rr) {
      const TD proj = rand_tensor(rr, {2, 5, 5}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 5, 5}, -1.0, 1.0);
      std::vector<uint8_t> skip(x0.data.size(), 0);
      for (size_t i = 0; i < x0.data.size(); ++i) skip[i] = std::abs(x0.data[i]) < 1e-3;
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.relu(xi), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep, &skip);
    });
  }
  {
    RngStream r = root.derive(5);
    run_check(rows, r, "channel_softmax", 5, [](RngStream& rr) {
      const TD proj = rand_tensor(rr, {4, 3, 3}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {4, 3, 3}, -2.0, 2.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.channel_softmax(xi), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(6);
    run_check(rows, r, "maxpool2", 5, [](RngStream& rr) {
      const TD proj = rand_tensor(rr, {2, 3, 3}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 6, 6}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.maxpool2(xi), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(7);
    run_check(rows, r, "upsample2_nearest", 5, [](RngStream& rr) {
      const TD proj = rand_tensor(rr, {2, 6, 6}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 3, 3}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.upsample2_nearest(xi), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(8);
    run_check(rows, r, "concat_channels_a", 5, [](RngStream& rr) {
      const TD other = rand_tensor(rr, {3, 4, 4}, -1.0, 1.0);
      const TD proj = rand_tensor(rr, {5, 4, 4}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.concat_channels(xi, g.constant(other)), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(9);
    run_check(rows, r, "concat_channels_b", 5, [](RngStream& rr) {
      const TD other = rand_tensor(rr, {3, 4, 4}, -1.0, 1.0);
      const TD proj = rand_tensor(rr, {5, 4, 4}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.concat_channels(g.constant(other), xi), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(10);
    run_check(rows, r, "add", 5, [](RngStream& rr) {
      const TD other = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const TD proj = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.add(xi, g.constant(other)), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(11);
    run_check(rows, r, "mul", 5, [](RngStream& rr) {
      const TD other = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const TD proj = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.mul(xi, g.constant(other)), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(12);
    run_check(rows, r, "scale", 5, [](RngStream& rr) {
      const TD proj = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const double c = rr.uniform(-2.0, 2.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.scale(xi, c), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(13);
    run_check(rows, r, "sum", 5, [](RngStream& rr) {
      const TD x0 = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return scalar_of(g, g.sum(xi), xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(14);
    run_check(rows, r, "occlude", 5, [](RngStream& rr) {
      const std::vector<uint8_t> mask = rand_raster(rr, 4, 4, 0.3);
      const TD proj = rand_tensor(rr, {3, 4, 4}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {3, 4, 4}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.occlude(xi, mask), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(15);
    run_check(rows, r, "pixel_select_a", 5, [](RngStream& rr) {
      const int hw = 16;
      std::vector<int32_t> table(hw);
      for (int32_t& v : table) v = int32_t(rr.next_below(uint64_t(2 * hw)));
      const TD other = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const TD proj = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.pixel_select(xi, g.constant(other), table), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(16);
    run_check(rows, r, "mix_gather_b", 5, [](RngStream& rr) {
      MixPlan plan = MixPlan::identity(2, 2, 2);
      for (uint8_t& z : plan.z) z = uint8_t(rr.next_below(2));
      const auto perms = enumerate_window_perms(2, 2, 1);
      plan.pi1 = perms[size_t(rr.next_below(perms.size()))];
      plan.pi2 = perms[size_t(rr.next_below(perms.size()))];
      plan.z[0] = 1;  // keep a path into input 2
      const TD other = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const TD proj = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.mix_gather(g.constant(other), xi, plan), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(17);
    run_check(rows, r, "slice_channels", 5, [](RngStream& rr) {
      const TD proj = rand_tensor(rr, {2, 4, 4}, -1.0, 1.0);
      const TD x0 = rand_tensor(rr, {5, 4, 4}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return project(g, g.slice_channels(xi, 1, 3), proj, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(18);
    run_check(rows, r, "partial_ce_scribble", 5, [](RngStream& rr) {
      const ScribbleLabel y = rand_scribble(rr, 4, 4, 4, 0.5);
      const TD x0 = rand_tensor(rr, {4, 4, 4}, 0.05, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return scalar_of(g, g.partial_ce(xi, y), xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(19);
    run_check(rows, r, "partial_ce_soft", 5, [](RngStream& rr) {
      SoftTarget t(4, 4, 4);
      for (int e = 0; e < 10; ++e)
        t.add(int32_t(rr.next_below(16)), uint8_t(rr.next_below(4)),
              float(rr.uniform(0.1, 1.0)));
      const TD x0 = rand_tensor(rr, {4, 4, 4}, 0.05, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return scalar_of(g, g.partial_ce(xi, t), xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(20);
    run_check(rows, r, "ncs_p", 5, [](RngStream& rr) {
      const TD q = rand_tensor(rr, {3, 4, 4}, 0.1, 1.0);
      const TD x0 = rand_tensor(rr, {3, 4, 4}, 0.1, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return scalar_of(g, g.ncs(xi, g.constant(q)), xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(21);
    run_check(rows, r, "ncs_q", 5, [](RngStream& rr) {
      const TD p = rand_tensor(rr, {3, 4, 4}, 0.1, 1.0);
      const TD x0 = rand_tensor(rr, {3, 4, 4}, 0.1, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return scalar_of(g, g.ncs(g.constant(p), xi), xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(22);
    run_check(rows, r, "softmax_partial_ce", 5, [](RngStream& rr) {
      const ScribbleLabel y = rand_scribble(rr, 4, 4, 4, 0.5);
      const TD x0 = rand_tensor(rr, {4, 4, 4}, -2.0, 2.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        return scalar_of(g, g.partial_ce(g.channel_softmax(xi), y), xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(23);
    run_check(rows, r, "loss_unmix", 5, [](RngStream& rr) {
      const ScribbleLabel y1 = rand_scribble(rr, 4, 4, 4, 0.5);
      const ScribbleLabel y2 = rand_scribble(rr, 4, 4, 4, 0.5);
      const TD x0 = rand_tensor(rr, {8, 4, 4}, -2.0, 2.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        const int p1 = g.channel_softmax(g.slice_channels(xi, 0, 4));
        const int p2 = g.channel_softmax(g.slice_channels(xi, 4, 8));
        return scalar_of(g, loss_unmix(g, p1, y1, p2, y2), xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(24);
    run_check(rows, r, "loss_mix", 5, [](RngStream& rr) {
      SoftTarget t1(4, 4, 4);
      for (int e = 0; e < 8; ++e)
        t1.add(int32_t(rr.next_below(16)), uint8_t(rr.next_below(4)),
               float(rr.uniform(0.1, 1.0)));
      const MixedTarget m1 = t1;
      const MixedTarget m2 = rand_scribble(rr, 4, 4, 4, 0.5);
      const TD x0 = rand_tensor(rr, {8, 4, 4}, -2.0, 2.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        const int p1 = g.channel_softmax(g.slice_channels(xi, 0, 4));
        const int p2 = g.channel_softmax(g.slice_channels(xi, 4, 8));
        return scalar_of(g, loss_mix(g, p1, m1, p2, m2), xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  for (const bool per_class : {false, true}) {
    RngStream r = root.derive(per_class ? 26 : 25);
    const std::string name =
        per_class ? "global_consistency_per_class" : "global_consistency";
    const NcsMode mode = per_class ? NcsMode::kPerClass : NcsMode::kWhole;
    run_check(rows, r, name, 5, [mode](RngStream& rr) {
      const auto perms = enumerate_window_perms(2, 2, 1);
      auto rand_plan = [&]() {
        MixPlan p = MixPlan::identity(2, 2, 2);
        for (uint8_t& z : p.z) z = uint8_t(rr.next_below(2));
        p.pi1 = perms[size_t(rr.next_below(perms.size()))];
        p.pi2 = perms[size_t(rr.next_below(perms.size()))];
        return p;
      };
      const MixPlan plan12 = rand_plan(), plan21 = rand_plan();
      OcclusionMask occ12 = OcclusionMask::none(4, 4), occ21 = OcclusionMask::none(4, 4);
      occ12.raster = rand_raster(rr, 4, 4, 0.25);
      occ21.raster = rand_raster(rr, 4, 4, 0.25);
      const TD x0 = rand_tensor(rr, {12, 4, 4}, -2.0, 2.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        auto pred = [&](int i) {
          return g.channel_softmax(g.slice_channels(xi, 3 * i, 3 * i + 3));
        };
        const int node = global_consistency(g, plan12, occ12, plan21, occ21, pred(0), pred(1),
                                            pred(2), pred(3), false, mode);
        return scalar_of(g, node, xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  for (const bool per_class : {false, true}) {
    RngStream r = root.derive(per_class ? 28 : 27);
    const std::string name =
        per_class ? "local_consistency_per_class" : "local_consistency";
    const NcsMode mode = per_class ? NcsMode::kPerClass : NcsMode::kWhole;
    run_check(rows, r, name, 5, [mode](RngStream& rr) {
      const TD x0 = rand_tensor(rr, {8, 4, 4}, -2.0, 2.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const int xi = g.leaf(x, true);
        const int p1 = g.channel_softmax(g.slice_channels(xi, 0, 4));
        const int p2 = g.channel_softmax(g.slice_channels(xi, 4, 8));
        return scalar_of(g, local_consistency(g, p1, p2, mode), xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    });
  }
  {
    RngStream r = root.derive(29);
    run_check(rows, r, "segmentor_dx", 5, [](RngStream& rr) {
      const SegStackD st = rand_stack(rr, 2, 4);
      const ScribbleLabel y = rand_scribble(rr, 2, 8, 8, 0.5);
      const TD x0 = rand_tensor(rr, {1, 8, 8}, -1.0, 1.0);
      auto f = [&](const TD& x, std::vector<double>* go) {
        GraphD g;
        const SegmentorNodes ids = push_stack(g, st);
        const int xi = g.leaf(x, true);
        return scalar_of(g, g.partial_ce(wire_segmentor(g, ids, xi), y), xi, go);
      };
      return finite_diff_gradcheck(f, x0, kStep);
    }, kDeepTol);
  }
  {
    RngStream r = root.derive(30);
    run_check(rows, r, "segmentor_dw_head", 5, [](RngStream& rr) {
      const SegStackD st = rand_stack(rr, 2, 4);
      const ScribbleLabel y = rand_scribble(rr, 2, 8, 8, 0.5);
      const TD x = rand_tensor(rr, {1, 8, 8}, -1.0, 1.0);
      const TD w0 = st.w.back();
      auto f = [&](const TD& w, std::vector<double>* go) {
        GraphD g;
        const SegmentorNodes ids = push_stack(g, st, int(st.w.size()) - 1, -1, &w);
        const int wi = ids.w_ids.back();
        return scalar_of(g, g.partial_ce(wire_segmentor(g, ids, g.constant(x)), y), wi, go);
      };
      return finite_diff_gradcheck(f, w0, kStep);
    }, kDeepTol);
  }
  {
    RngStream r = root.derive(31);
    run_check(rows, r, "segmentor_db_mid", 5, [](RngStream& rr) {
      const SegStackD st = rand_stack(rr, 2, 4);
      const ScribbleLabel y = rand_scribble(rr, 2, 8, 8, 0.5);
      const TD x = rand_tensor(rr, {1, 8, 8}, -1.0, 1.0);
      const TD b0 = st.b[4];
      auto f = [&](const TD& b, std::vector<double>* go) {
        GraphD g;
        const SegmentorNodes ids = push_stack(g, st, -1, 4, &b);
        const int bi = ids.b_ids[4];
        return scalar_of(g, g.partial_ce(wire_segmentor(g, ids, g.constant(x)), y), bi, go);
      };
      return finite_diff_gradcheck(f, b0, kStep);
    }, kDeepTol);
  }

  return rows;
}

}  // namespace scribblemix
