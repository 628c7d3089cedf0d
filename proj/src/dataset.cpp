#include "scribblemix/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "scribblemix/nst.hpp"

namespace scribblemix {

namespace fs = std::filesystem;

namespace {

std::string sample_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%04d", i);
  return buf;
}

}  // namespace

std::vector<ManifestRow> build_dataset(const std::string& out_dir, int n, int size,
                                       uint64_t seed, const std::vector<double>& coverage) {
  check(n >= 10, "dataset: n=", n, " too small (need >= 10)");
  std::error_code ec;
  for (const char* sub : {"", "/images", "/scribbles", "/masks"}) {
    fs::create_directories(out_dir + sub, ec);
    check(!ec, "dataset: cannot create ", out_dir + sub, ": ", ec.message());
  }
  RngStream root(seed, 0);

  // split sizes by proportion, assignment by seeded shuffle
  const int n_train = int(std::lround(0.70 * n));
  const int n_val = int(std::lround(0.15 * n));
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;
  seeded_shuffle(order, root.derive(3, 0));
  std::vector<std::string> split_of(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r)
    split_of[size_t(order[size_t(r)])] = r < n_train ? "train" : r < n_train + n_val ? "val"
                                                                                     : "test";

  std::vector<ManifestRow> rows;
  int scribble_warnings = 0;
  for (int i = 0; i < n; ++i) {
    const std::string id = sample_id(i);
    const RawSample raw = gen_rings_sample(root.derive(1, uint64_t(i)), size, 4);
    bool warned = false;
    const ScribbleLabel scr =
        gen_scribble(raw.mask, root.derive(2, uint64_t(i)), coverage, &warned);
    scribble_warnings += warned;
    const Tensor img = normalize_image(raw.image);

    ManifestRow row;
    row.id = id;
    row.split = split_of[size_t(i)];
    row.image = "images/" + id + ".nst";
    row.scribble = "scribbles/" + id + ".nst";
    row.mask = "masks/" + id + ".nst";
    write_nst_file(out_dir + "/" + row.image, img);
    write_nst_file(out_dir + "/" + row.scribble, {size, size}, scr.cls);
    write_nst_file(out_dir + "/" + row.mask, {size, size}, raw.mask.cls);
    rows.push_back(std::move(row));
  }

  std::ofstream mf(out_dir + "/manifest.tsv");
  check(bool(mf), "dataset: cannot write manifest in ", out_dir);
  mf << "id\tsplit\timage\tscribble\tmask\n";
  for (const auto& r : rows)
    mf << r.id << "\t" << r.split << "\t" << r.image << "\t" << r.scribble << "\t" << r.mask
       << "\n";
  check(bool(mf), "dataset: manifest write failed");
  if (scribble_warnings > 0)
    std::fprintf(stderr, "warning: %d/%d scribbles shrank below their coverage target\n",
                 scribble_warnings, n);
  return rows;
}

std::vector<ManifestRow> read_manifest(const std::string& dir) {
  std::ifstream is(dir + "/manifest.tsv");
  check(bool(is), "dataset: cannot open ", dir, "/manifest.tsv");
  std::string line;
  std::getline(is, line);
  check(line == "id\tsplit\timage\tscribble\tmask", "dataset: unexpected manifest header \"",
        line, "\"");
  std::vector<ManifestRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestRow r;
    check(bool(std::getline(ls, r.id, '\t')) && bool(std::getline(ls, r.split, '\t')) &&
              bool(std::getline(ls, r.image, '\t')) &&
              bool(std::getline(ls, r.scribble, '\t')) && bool(std::getline(ls, r.mask, '\t')),
          "dataset: malformed manifest line \"", line, "\"");
    check(r.split == "train" || r.split == "val" || r.split == "test",
          "dataset: unknown split \"", r.split, "\" for id ", r.id);
    rows.push_back(std::move(r));
  }
  check(!rows.empty(), "dataset: manifest has no samples");
  return rows;
}

std::vector<ManifestRow> filter_split(const std::vector<ManifestRow>& rows,
                                      const std::string& split) {
  std::vector<ManifestRow> out;
  for (const auto& r : rows)
    if (r.split == split) out.push_back(r);
  return out;
}

Sample load_sample(const std::string& dir, const ManifestRow& row, int num_classes) {
  Sample s;
  s.id = row.id;
  s.split = row.split;
  s.image = read_nst_file(dir + "/" + row.image).as_tensor();
  check(s.image.shape.size() == 3 && s.image.shape[0] == 1, "dataset: image ", row.id,
        " must be [1,H,W], got ", shape_str(s.image.shape));
  const int h = s.image.shape[1], w = s.image.shape[2];

  const NstValue scr = read_nst_file(dir + "/" + row.scribble);
  check(scr.dtype == 1 && scr.shape == std::vector<int>{h, w}, "dataset: scribble ", row.id,
        " does not match image geometry");
  s.scribble.num_classes = num_classes;
  s.scribble.h = h;
  s.scribble.w = w;
  s.scribble.cls = scr.u8;
  s.scribble.validate();

  const NstValue msk = read_nst_file(dir + "/" + row.mask);
  check(msk.dtype == 1 && msk.shape == std::vector<int>{h, w}, "dataset: mask ", row.id,
        " does not match image geometry");
  s.mask.num_classes = num_classes;
  s.mask.h = h;
  s.mask.w = w;
  s.mask.cls = msk.u8;
  s.mask.validate();
  return s;
}

}  // namespace scribblemix
