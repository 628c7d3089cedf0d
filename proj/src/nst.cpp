#include "scribblemix/nst.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "scribblemix/common.hpp"

namespace scribblemix {

namespace {

constexpr char kMagic[4] = {'N', 'S', 'T', '1'};
constexpr int kMaxDims = 8;

void put_u32_le(std::ostream& os, uint32_t v) {
  const uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32_le(std::istream& is) {
  uint8_t b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  check(is.gcount() == 4, "nst: truncated header (extent bytes missing)");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

void write_header(std::ostream& os, uint8_t dtype, const std::vector<int>& shape) {
  check(shape.size() <= kMaxDims, "nst: ", shape.size(), " dims exceed the format limit of ",
        kMaxDims);
  os.write(kMagic, 4);
  os.put(char(dtype));
  os.put(char(shape.size()));
  for (int e : shape) {
    check(e >= 0, "nst: negative extent ", e);
    put_u32_le(os, uint32_t(e));
  }
}

}  // namespace

Tensor NstValue::as_tensor() const {
  check(dtype == 0, "nst: expected f32 payload, file holds dtype ", int(dtype));
  return Tensor(shape, f32);
}

void write_nst(std::ostream& os, const Tensor& t) {
  write_header(os, 0, t.shape);
  static_assert(sizeof(float) == 4);
  if (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.data.data()),
             std::streamsize(t.data.size() * 4));
  } else {
    for (float f : t.data) {
      uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32_le(os, u);
    }
  }
  check(bool(os), "nst: write failed");
}

void write_nst(std::ostream& os, const std::vector<int>& shape,
               const std::vector<uint8_t>& data) {
  check(numel_of(shape) == int64_t(data.size()), "nst: shape ", shape_str(shape),
        " does not match payload length ", data.size());
  write_header(os, 1, shape);
  os.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  check(bool(os), "nst: write failed");
}

NstValue read_nst(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  check(is.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0, "nst: bad magic");
  const int dtype = is.get();
  const int ndim = is.get();
  check(dtype != EOF && ndim != EOF, "nst: truncated header");
  check(dtype == 0 || dtype == 1, "nst: unknown dtype byte ", dtype);
  check(ndim <= kMaxDims, "nst: dim count ", ndim, " exceeds the format limit of ", kMaxDims);
  NstValue v;
  v.dtype = uint8_t(dtype);
  v.shape.resize(size_t(ndim));
  int64_t numel = 1;
  for (int i = 0; i < ndim; ++i) {
    const uint32_t e = get_u32_le(is);
    check(e <= uint32_t(std::numeric_limits<int>::max()), "nst: extent ", e, " overflows");
    v.shape[i] = int(e);
    numel *= e;
    check(numel <= (int64_t(1) << 33), "nst: payload of ", numel, " elements overflows");
  }
  if (dtype == 0) {
    v.f32.resize(size_t(numel));
    if (std::endian::native == std::endian::little) {
      is.read(reinterpret_cast<char*>(v.f32.data()), std::streamsize(numel * 4));
      check(is.gcount() == std::streamsize(numel * 4), "nst: truncated payload");
    } else {
      for (int64_t i = 0; i < numel; ++i) {
        const uint32_t u = get_u32_le(is);
        std::memcpy(&v.f32[size_t(i)], &u, 4);
      }
    }
  } else {
    v.u8.resize(size_t(numel));
    is.read(reinterpret_cast<char*>(v.u8.data()), std::streamsize(numel));
    check(is.gcount() == std::streamsize(numel), "nst: truncated payload");
  }
  return v;
}

void write_nst_file(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  check(bool(os), "nst: cannot open ", path, " for writing");
  write_nst(os, t);
}

void write_nst_file(const std::string& path, const std::vector<int>& shape,
                    const std::vector<uint8_t>& data) {
  std::ofstream os(path, std::ios::binary);
  check(bool(os), "nst: cannot open ", path, " for writing");
  write_nst(os, shape, data);
}

NstValue read_nst_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(bool(is), "nst: cannot open ", path);
  return read_nst(is);
}

void write_pgm(const std::string& path, const float* data, int h, int w) {
  const int64_t n = int64_t(h) * w;
  float lo = data[0], hi = data[0];
  for (int64_t i = 1; i < n; ++i) {
    lo = std::min(lo, data[i]);
    hi = std::max(hi, data[i]);
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  std::vector<uint8_t> bytes(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    bytes[size_t(i)] = uint8_t(std::min(255.0f, std::max(0.0f, (data[i] - lo) / span * 255.0f)));
  write_pgm_raw(path, bytes.data(), h, w);
}

void write_pgm_raw(const std::string& path, const uint8_t* data, int h, int w) {
  std::ofstream os(path, std::ios::binary);
  check(bool(os), "pgm: cannot open ", path, " for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(data), std::streamsize(int64_t(h) * w));
  check(bool(os), "pgm: write failed");
}

}  // namespace scribblemix
