#pragma once

#include <string>
#include <vector>

#include "scribblemix/graph.hpp"
#include "scribblemix/rng.hpp"
#include "scribblemix/tensor.hpp"

namespace scribblemix {

// Mini encoder-decoder producing per-pixel class probabilities. Topology is
// fixed by (K, base channels c): two conv3x3+relu encoder stages at c and 2c
// with maxpool2 between, a 4c bottleneck, a mirrored decoder with nearest
// upsampling and skip concats, and a 1x1 head into channel_softmax.
struct LayerSpec {
  int cin = 0, cout = 0, k = 3;
  bool relu = true;
};

struct SegmentorParams {
  int num_classes = 0;
  int base_channels = 0;
  uint64_t init_seed = 0;
  std::vector<Tensor> weights;  // one [cout,cin,k,k] per layer
  std::vector<Tensor> biases;   // one [cout] per layer

  int64_t param_count() const;
  void validate() const;
};

std::vector<LayerSpec> segmentor_layers(int num_classes, int base_channels);

SegmentorParams init_segmentor(int num_classes, int base_channels, RngStream rng);

// Parameter leaves of one graph; reused across every forward wired into it.
struct SegmentorNodes {
  std::vector<int> w_ids, b_ids;
};

template <typename T>
SegmentorNodes push_segmentor(Graph<T>& g, const SegmentorParams& p) {
  p.validate();
  SegmentorNodes ids;
  for (size_t i = 0; i < p.weights.size(); ++i) {
    ids.w_ids.push_back(g.param(p.weights[i].template cast<T>()));
    ids.b_ids.push_back(g.param(p.biases[i].template cast<T>()));
  }
  return ids;
}

// Builds the forward pass on an existing graph; x_id must be a [1,H,W] node
// with H and W divisible by 4. Returns the probability node.
template <typename T>
int wire_segmentor(Graph<T>& g, const SegmentorNodes& ids, int x_id) {
  const auto& xs = g.val(x_id).shape;
  check(xs.size() == 3 && xs[0] == 1, "segmentor: input must be [1,H,W], got ", shape_str(xs));
  check(xs[1] % 4 == 0 && xs[2] % 4 == 0, "segmentor: extents ", xs[1], "x", xs[2],
        " not divisible by 4");
  check(all_finite(g.val(x_id).data), "segmentor: non-finite input");
  auto block = [&](int in, int l) {
    int c = g.conv2d(in, ids.w_ids[l], ids.b_ids[l]);
    return g.relu(c);
  };
  int e1 = block(block(x_id, 0), 1);
  int e2 = block(block(g.maxpool2(e1), 2), 3);
  int bo = block(block(g.maxpool2(e2), 4), 5);
  int d2 = block(block(g.concat_channels(g.upsample2_nearest(bo), e2), 6), 7);
  int d1 = block(block(g.concat_channels(g.upsample2_nearest(d2), e1), 8), 9);
  int logits = g.conv2d(d1, ids.w_ids[10], ids.b_ids[10]);
  return g.channel_softmax(logits);
}

struct Prediction {
  Tensor probs;  // [K,H,W]
};

// Standalone forward on a throwaway graph (evaluation path).
Prediction segmentor_forward(const SegmentorParams& p, const Tensor& x);

// Argmax class map; ties resolve to the lowest class index.
std::vector<uint8_t> argmax_classes(const Tensor& probs);

void save_checkpoint(const std::string& path, const SegmentorParams& p);
SegmentorParams load_checkpoint(const std::string& path);

}  // namespace scribblemix
