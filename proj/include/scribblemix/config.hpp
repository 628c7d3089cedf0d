#pragma once

#include <iosfwd>
#include <string>

#include "scribblemix/losses.hpp"
#include "scribblemix/mixplan.hpp"

namespace scribblemix {

// Flat key=value settings; `#` starts a comment. CLI key=value pairs override
// file values. Serialization round-trips losslessly through save/load.
struct TrainConfig {
  int epochs = 200;
  float lr = 1e-4f;
  LossWeights weights;
  std::string mix_strategy = "puzzle";  // none|mixup|cutmix|puzzle
  bool occlusion = true;
  double side_frac = 0.15;
  bool stopgrad = false;
  std::string occlusion_label = "background";  // background|zero
  std::string ncs = "whole";                   // whole|per_class
  uint64_t seed = 42;
  int block_size = 8;
  int window_radius = 1;
  int n_iter = 4;
  double mixup_alpha = 1.0;
  int num_classes = 4;
  int base_channels = 8;

  void validate() const;
  OcclusionLabelPolicy occlusion_policy() const;
  NcsMode ncs_mode() const;

  bool operator==(const TrainConfig&) const = default;
};

void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig load_config(const std::string& path);
void save_config(std::ostream& os, const TrainConfig& cfg);
std::string config_to_string(const TrainConfig& cfg);

}  // namespace scribblemix
