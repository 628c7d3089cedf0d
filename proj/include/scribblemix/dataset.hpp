#pragma once

#include <string>
#include <vector>

#include "scribblemix/labels.hpp"
#include "scribblemix/rings.hpp"
#include "scribblemix/tensor.hpp"

namespace scribblemix {

struct Sample {
  std::string id;
  std::string split;  // train|val|test
  Tensor image;       // [1,H,W], normalized
  ScribbleLabel scribble;
  DenseMask mask;
};

struct ManifestRow {
  std::string id, split, image, scribble, mask;  // paths relative to the dataset dir
};

// Writes images/, scribbles/, masks/ plus manifest.tsv; split is 70/15/15 by
// proportion, assigned by a seeded shuffle so geometry and split draw from
// independent streams. Returns the manifest rows in id order.
std::vector<ManifestRow> build_dataset(const std::string& out_dir, int n, int size,
                                       uint64_t seed, const std::vector<double>& coverage);

std::vector<ManifestRow> read_manifest(const std::string& dir);
std::vector<ManifestRow> filter_split(const std::vector<ManifestRow>& rows,
                                      const std::string& split);

Sample load_sample(const std::string& dir, const ManifestRow& row, int num_classes);

}  // namespace scribblemix
