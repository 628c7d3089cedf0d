#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scribblemix/adam.hpp"
#include "scribblemix/config.hpp"
#include "scribblemix/dataset.hpp"
#include "scribblemix/losses.hpp"
#include "scribblemix/rng.hpp"
#include "scribblemix/segmentor.hpp"

namespace scribblemix {

// One optimizer update on a pair of scribble-labeled samples: two plain
// forwards, the strategy's mixed forwards, consistency terms, one backward of
// the weighted total, one Adam step. step_rng seeds everything stochastic in
// the step (occlusion squares, mixup lambdas, cutmix rectangles).
LossBreakdown train_step(SegmentorParams& params, Adam& adam, const Sample& a, const Sample& b,
                         const TrainConfig& cfg, RngStream step_rng);

struct EpochStats {
  LossBreakdown mean;     // loss terms averaged over the epoch's steps
  double val_dice = 0.0;  // mean foreground dice on the val split
};

struct RunResult {
  TrainConfig cfg;
  std::vector<EpochStats> trace;
  int best_epoch = -1;  // epoch whose weights best.ckpt holds
  double best_val_dice = 0.0;
  double final_val_dice = 0.0;
  double test_dice = 0.0;                  // best checkpoint on the test split
  std::vector<double> test_per_class;      // foreground classes 1..K-1
  double wall_seconds = 0.0;
};

// Full run: init model, iterate epochs over shuffled consecutive pairs
// (odd sample out is skipped), validate each epoch, write trace.csv /
// best.ckpt / final.ckpt / report.txt under out_dir.
RunResult train(const TrainConfig& cfg, const std::string& data_dir, const std::string& out_dir);

struct EvalSummary {
  int images = 0;
  std::vector<double> mean_per_class;  // foreground classes 1..K-1
  std::vector<double> std_per_class;   // population std across images
  double mean_foreground = 0.0;
  double std_foreground = 0.0;
};

// Dice of argmax predictions against dense masks on one split; writes one CSV
// row per image when report_csv is nonempty.
EvalSummary evaluate(const SegmentorParams& params, const std::string& data_dir,
                     const std::string& split, const std::string& report_csv);

// Rows of the component knock-out board:
//   1 scribble CE only   2 +mixed CE   3 +global consistency
//   4 +occlusion         5 +local consistency (full method)
TrainConfig ablation_config(const TrainConfig& base, int row);

struct AblationRow {
  int row = 0;
  TrainConfig cfg;
  std::vector<double> seed_dice;  // test dice of each seed's best checkpoint
  double mean_dice = 0.0;
};

// Trains every requested row with `seeds` replicas (seed = base.seed + s) and
// writes ablation.csv plus per-run artifacts under out_dir.
std::vector<AblationRow> ablate(const TrainConfig& base, const std::string& data_dir,
                                const std::vector<int>& rows, int seeds,
                                const std::string& out_dir);

// Mixes the first two training samples and writes inputs, mixed/occluded
// outputs and label overlays as NST + PGM, plus the plan text, under out_dir.
void mix_demo(const std::string& data_dir, const std::string& out_dir, uint64_t seed,
              const std::string& strategy);

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Central finite differences (double precision) against the tape's gradients
// for every differentiable op and every loss, several random instances each.
std::vector<GradCheckRow> run_gradcheck_suite(uint64_t seed);

}  // namespace scribblemix
