#include "scribblemix/segmentor.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "scribblemix/nst.hpp"

namespace scribblemix {

std::vector<LayerSpec> segmentor_layers(int num_classes, int base_channels) {
  const int c = base_channels, k = num_classes;
  return {
      {1, c}, {c, c},                  // encoder stage 1
      {c, 2 * c}, {2 * c, 2 * c},      // encoder stage 2
      {2 * c, 4 * c}, {4 * c, 4 * c},  // bottleneck
      {6 * c, 2 * c}, {2 * c, 2 * c},  // decoder stage 2 (4c up + 2c skip)
      {3 * c, c}, {c, c},              // decoder stage 1 (2c up + c skip)
      {c, k, 1, false},                // 1x1 head
  };
}

int64_t SegmentorParams::param_count() const {
  int64_t n = 0;
  for (const auto& w : weights) n += w.numel();
  for (const auto& b : biases) n += b.numel();
  return n;
}

void SegmentorParams::validate() const {
  const auto layers = segmentor_layers(num_classes, base_channels);
  check(weights.size() == layers.size() && biases.size() == layers.size(),
        "segmentor params: expected ", layers.size(), " layers, have ", weights.size());
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::vector<int> ws{l.cout, l.cin, l.k, l.k};
    check(weights[i].shape == ws, "segmentor params: layer ", i, " kernel shape ",
          shape_str(weights[i].shape), " != ", shape_str(ws));
    check(biases[i].shape == std::vector<int>{l.cout}, "segmentor params: layer ", i,
          " bias shape mismatch");
    check(all_finite(weights[i].data) && all_finite(biases[i].data),
          "segmentor params: non-finite values in layer ", i);
  }
}

SegmentorParams init_segmentor(int num_classes, int base_channels, RngStream rng) {
  check(num_classes >= 2, "init_segmentor: K=", num_classes, " < 2");
  check(base_channels >= 4, "init_segmentor: base channels ", base_channels, " < 4");
  SegmentorParams p;
  p.num_classes = num_classes;
  p.base_channels = base_channels;
  for (const auto& l : segmentor_layers(num_classes, base_channels)) {
    Tensor w({l.cout, l.cin, l.k, l.k});
    const double limit = 1.0 / std::sqrt(double(l.cin) * l.k * l.k);
    for (auto& v : w.data) v = float(rng.uniform(-limit, limit));
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(std::vector<int>{l.cout});
  }
  return p;
}

Prediction segmentor_forward(const SegmentorParams& p, const Tensor& x) {
  GraphF g;
  const auto ids = push_segmentor(g, p);
  const int out = wire_segmentor(g, ids, g.constant(x));
  return Prediction{g.val(out)};
}

std::vector<uint8_t> argmax_classes(const Tensor& probs) {
  check(probs.shape.size() == 3, "argmax_classes: expected [K,H,W]");
  const int k = probs.shape[0];
  const int64_t hw = int64_t(probs.shape[1]) * probs.shape[2];
  std::vector<uint8_t> out(static_cast<size_t>(hw));
  for (int64_t p = 0; p < hw; ++p) {
    int best = 0;
    float bv = probs.data[p];
    for (int c = 1; c < k; ++c)
      if (probs.data[c * hw + p] > bv) {
        bv = probs.data[c * hw + p];
        best = c;
      }
    out[size_t(p)] = uint8_t(best);
  }
  return out;
}

void save_checkpoint(const std::string& path, const SegmentorParams& p) {
  p.validate();
  std::ofstream os(path, std::ios::binary);
  check(bool(os), "checkpoint: cannot open ", path, " for writing");
  os << "scribblemix-ckpt v1 K=" << p.num_classes << " c=" << p.base_channels << "\n";
  for (size_t i = 0; i < p.weights.size(); ++i) {
    write_nst(os, p.weights[i]);
    write_nst(os, p.biases[i]);
  }
  check(bool(os), "checkpoint: write failed");
}

SegmentorParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(bool(is), "checkpoint: cannot open ", path);
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string tag, ver, kkv, ckv;
  hs >> tag >> ver >> kkv >> ckv;
  check(tag == "scribblemix-ckpt" && ver == "v1", "checkpoint: bad header \"", header, "\"");
  check(kkv.rfind("K=", 0) == 0 && ckv.rfind("c=", 0) == 0, "checkpoint: bad header \"", header,
        "\"");
  SegmentorParams p;
  p.num_classes = std::stoi(kkv.substr(2));
  p.base_channels = std::stoi(ckv.substr(2));
  const auto layers = segmentor_layers(p.num_classes, p.base_channels);
  for (size_t i = 0; i < layers.size(); ++i) {
    p.weights.push_back(read_nst(is).as_tensor());
    p.biases.push_back(read_nst(is).as_tensor());
  }
  p.validate();
  return p;
}

}  // namespace scribblemix
