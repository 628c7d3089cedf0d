#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scribblemix/config.hpp"
#include "scribblemix/dataset.hpp"
#include "scribblemix/rings.hpp"
#include "scribblemix/train.hpp"

namespace sm = scribblemix;

namespace {

// "1-5", "1,3,5" or "2" -> sorted unique row list
std::vector<int> parse_rows(const std::string& spec) {
  std::vector<int> rows;
  size_t pos = 0;
  while (pos < spec.size()) {
    size_t end = spec.find(',', pos);
    if (end == std::string::npos) end = spec.size();
    const std::string item = spec.substr(pos, end - pos);
    const size_t dash = item.find('-');
    try {
      if (dash == std::string::npos) {
        rows.push_back(std::stoi(item));
      } else {
        const int lo = std::stoi(item.substr(0, dash));
        const int hi = std::stoi(item.substr(dash + 1));
        sm::check(lo <= hi, "rows: bad range '", item, "'");
        for (int r = lo; r <= hi; ++r) rows.push_back(r);
      }
    } catch (const sm::Error&) {
      throw;
    } catch (const std::exception&) {
      sm::fail("rows: cannot parse '", item, "'");
    }
    pos = end + 1;
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  sm::check(!rows.empty(), "rows: empty selection");
  return rows;
}

sm::TrainConfig config_from(const std::string& config_path,
                            const std::vector<std::string>& overrides) {
  sm::TrainConfig cfg;
  if (!config_path.empty()) cfg = sm::load_config(config_path);
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    sm::check(eq != std::string::npos, "override '", kv, "' is not key=value");
    sm::apply_config_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scribble-supervised segmentation with mix augmentation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic rings dataset");
  std::string gen_out;
  int gen_n = 200, gen_size = 64;
  uint64_t gen_seed = 7;
  std::string gen_cov;
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--n", gen_n, "number of samples");
  gen->add_option("--size", gen_size, "image side length (multiple of 4)");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--coverage", gen_cov, "per-class scribble coverage a,b,c,d");

  auto* train = app.add_subcommand("train", "train a segmentor");
  std::string tr_data, tr_config, tr_out = "run";
  std::vector<std::string> tr_kv;
  train->add_option("--data", tr_data, "dataset directory")->required();
  train->add_option("--config", tr_config, "key=value config file");
  train->add_option("--out", tr_out, "output directory for artifacts");
  train->add_option("overrides", tr_kv, "key=value config overrides");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_report;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "split to evaluate (train|val|test)");
  ev->add_option("--report", ev_report, "per-image CSV output path");

  auto* ab = app.add_subcommand("ablate", "run the component knock-out board");
  std::string ab_data, ab_rows = "1-5", ab_out = "ablation", ab_config;
  int ab_seeds = 3;
  std::vector<std::string> ab_kv;
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--rows", ab_rows, "rows to run, e.g. 1-5 or 1,3,5");
  ab->add_option("--seeds", ab_seeds, "seed replicas per row");
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--config", ab_config, "base config file");
  ab->add_option("overrides", ab_kv, "key=value config overrides");

  auto* demo = app.add_subcommand("mix-demo", "write mix previews for two samples");
  std::string dm_data, dm_out, dm_strategy = "puzzle";
  uint64_t dm_seed = 7;
  demo->add_option("--data", dm_data, "dataset directory")->required();
  demo->add_option("--out", dm_out, "output directory")->required();
  demo->add_option("--seed", dm_seed, "demo seed");
  demo->add_option("--strategy", dm_strategy, "none|mixup|cutmix|puzzle");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  uint64_t gc_seed = 42;
  gc->add_option("--seed", gc_seed, "suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      std::vector<double> cov = sm::kDefaultCoverage;
      if (!gen_cov.empty()) {
        cov.clear();
        size_t pos = 0;
        while (pos <= gen_cov.size()) {
          size_t end = gen_cov.find(',', pos);
          if (end == std::string::npos) end = gen_cov.size();
          try {
            cov.push_back(std::stod(gen_cov.substr(pos, end - pos)));
          } catch (const std::exception&) {
            sm::fail("coverage: cannot parse '", gen_cov.substr(pos, end - pos), "'");
          }
          pos = end + 1;
        }
        sm::check(cov.size() == 4, "coverage: expected 4 values, got ", cov.size());
      }
      const auto rows = sm::build_dataset(gen_out, gen_n, gen_size, gen_seed, cov);
      std::printf("wrote %zu samples to %s\n", rows.size(), gen_out.c_str());
    } else if (train->parsed()) {
      const sm::TrainConfig cfg = config_from(tr_config, tr_kv);
      const sm::RunResult res = sm::train(cfg, tr_data, tr_out);
      std::printf("best_epoch %d best_val_dice %.6f final_val_dice %.6f test_dice %.6f\n",
                  res.best_epoch, res.best_val_dice, res.final_val_dice, res.test_dice);
    } else if (ev->parsed()) {
      const sm::SegmentorParams params = sm::load_checkpoint(ev_ckpt);
      const sm::EvalSummary s = sm::evaluate(params, ev_data, ev_split, ev_report);
      for (size_t c = 0; c < s.mean_per_class.size(); ++c)
        std::printf("class %zu dice %.6f +- %.6f\n", c + 1, s.mean_per_class[c],
                    s.std_per_class[c]);
      std::printf("mean_foreground %.6f +- %.6f over %d images\n", s.mean_foreground,
                  s.std_foreground, s.images);
    } else if (ab->parsed()) {
      const sm::TrainConfig base = config_from(ab_config, ab_kv);
      const auto rows = sm::ablate(base, ab_data, parse_rows(ab_rows), ab_seeds, ab_out);
      for (const sm::AblationRow& r : rows)
        std::printf("row %d mean_test_dice %.6f\n", r.row, r.mean_dice);
    } else if (demo->parsed()) {
      sm::mix_demo(dm_data, dm_out, dm_seed, dm_strategy);
      std::printf("wrote previews to %s\n", dm_out.c_str());
    } else if (gc->parsed()) {
      const auto rows = sm::run_gradcheck_suite(gc_seed);
      bool all = true;
      for (const sm::GradCheckRow& r : rows) {
        std::printf("%-32s max_rel_err %.3e tol %.0e %s\n", r.name.c_str(), r.max_rel_err,
                    r.tol, r.pass ? "pass" : "FAIL");
        all = all && r.pass;
      }
      std::printf("gradcheck: %zu checks, %s\n", rows.size(), all ? "all pass" : "FAILURES");
      if (!all) return 3;
    }
  } catch (const sm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
