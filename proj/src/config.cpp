#include "scribblemix/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace scribblemix {

void TrainConfig::validate() const {
  check(epochs >= 1, "config: epochs must be >= 1");
  check(lr > 0.0f, "config: lr must be positive");
  weights.validate();
  check(mix_strategy == "none" || mix_strategy == "mixup" || mix_strategy == "cutmix" ||
            mix_strategy == "puzzle",
        "config: mix_strategy \"", mix_strategy, "\" not in {none, mixup, cutmix, puzzle}");
  check(side_frac > 0.0 && side_frac < 1.0, "config: side_frac must be in (0,1)");
  check(occlusion_label == "background" || occlusion_label == "zero",
        "config: occlusion_label \"", occlusion_label, "\" not in {background, zero}");
  check(ncs == "whole" || ncs == "per_class", "config: ncs \"", ncs,
        "\" not in {whole, per_class}");
  check(block_size >= 1, "config: block_size must be >= 1");
  check(window_radius >= 0, "config: window_radius must be >= 0");
  check(n_iter >= 1, "config: n_iter must be >= 1");
  check(mixup_alpha > 0.0, "config: mixup_alpha must be positive");
  check(num_classes >= 2, "config: num_classes must be >= 2");
  check(base_channels >= 4, "config: base_channels must be >= 4");
}

OcclusionLabelPolicy TrainConfig::occlusion_policy() const {
  return occlusion_label == "zero" ? OcclusionLabelPolicy::kZero
                                   : OcclusionLabelPolicy::kBackground;
}

NcsMode TrainConfig::ncs_mode() const {
  return ncs == "per_class" ? NcsMode::kPerClass : NcsMode::kWhole;
}

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  fail("config: ", key, "=", v, " is not a boolean (use on/off)");
}

std::string fmt_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "epochs")
      cfg.epochs = std::stoi(value);
    else if (key == "lr")
      cfg.lr = std::stof(value);
    else if (key == "lambda1")
      cfg.weights.lambda1 = std::stof(value);
    else if (key == "lambda2")
      cfg.weights.lambda2 = std::stof(value);
    else if (key == "lambda3")
      cfg.weights.lambda3 = std::stof(value);
    else if (key == "lambda4")
      cfg.weights.lambda4 = std::stof(value);
    else if (key == "mix_strategy")
      cfg.mix_strategy = value;
    else if (key == "occlusion")
      cfg.occlusion = parse_bool(key, value);
    else if (key == "side_frac")
      cfg.side_frac = std::stod(value);
    else if (key == "stopgrad")
      cfg.stopgrad = parse_bool(key, value);
    else if (key == "occlusion_label")
      cfg.occlusion_label = value;
    else if (key == "ncs")
      cfg.ncs = value;
    else if (key == "seed")
      cfg.seed = std::stoull(value);
    else if (key == "block_size")
      cfg.block_size = std::stoi(value);
    else if (key == "window_radius")
      cfg.window_radius = std::stoi(value);
    else if (key == "n_iter")
      cfg.n_iter = std::stoi(value);
    else if (key == "mixup_alpha")
      cfg.mixup_alpha = std::stod(value);
    else if (key == "num_classes")
      cfg.num_classes = std::stoi(value);
    else if (key == "base_channels")
      cfg.base_channels = std::stoi(value);
    else
      fail("config: unknown key \"", key, "\"");
  } catch (const std::invalid_argument&) {
    fail("config: cannot parse ", key, "=", value);
  } catch (const std::out_of_range&) {
    fail("config: value out of range for ", key, "=", value);
  }
}

TrainConfig load_config(const std::string& path) {
  std::ifstream is(path);
  check(bool(is), "config: cannot open ", path);
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.pop_back();
    size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    const auto eq = line.find('=', start);
    check(eq != std::string::npos, "config: line ", lineno, " is not key=value: \"", line,
          "\"");
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    const auto vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? std::string() : value.substr(vstart);
    apply_config_kv(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

void save_config(std::ostream& os, const TrainConfig& cfg) {
  os << "epochs=" << cfg.epochs << "\n";
  os << "lr=" << fmt_float(cfg.lr) << "\n";
  os << "lambda1=" << fmt_float(cfg.weights.lambda1) << "\n";
  os << "lambda2=" << fmt_float(cfg.weights.lambda2) << "\n";
  os << "lambda3=" << fmt_float(cfg.weights.lambda3) << "\n";
  os << "lambda4=" << fmt_float(cfg.weights.lambda4) << "\n";
  os << "mix_strategy=" << cfg.mix_strategy << "\n";
  os << "occlusion=" << (cfg.occlusion ? "on" : "off") << "\n";
  os << "side_frac=" << fmt_float(cfg.side_frac) << "\n";
  os << "stopgrad=" << (cfg.stopgrad ? "on" : "off") << "\n";
  os << "occlusion_label=" << cfg.occlusion_label << "\n";
  os << "ncs=" << cfg.ncs << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "block_size=" << cfg.block_size << "\n";
  os << "window_radius=" << cfg.window_radius << "\n";
  os << "n_iter=" << cfg.n_iter << "\n";
  os << "mixup_alpha=" << fmt_float(cfg.mixup_alpha) << "\n";
  os << "num_classes=" << cfg.num_classes << "\n";
  os << "base_channels=" << cfg.base_channels << "\n";
}

std::string config_to_string(const TrainConfig& cfg) {
  std::ostringstream os;
  save_config(os, cfg);
  return os.str();
}

}  // namespace scribblemix
