#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "scribblemix/tensor.hpp"

namespace scribblemix {

// NST container: magic "NST1", 1 byte dtype (0 = f32 little-endian, 1 = u8),
// 1 byte ndim, ndim x u32 little-endian extents, row-major payload.
struct NstValue {
  uint8_t dtype = 0;  // 0 = f32, 1 = u8
  std::vector<int> shape;
  std::vector<float> f32;
  std::vector<uint8_t> u8;

  Tensor as_tensor() const;
};

void write_nst(std::ostream& os, const Tensor& t);
void write_nst(std::ostream& os, const std::vector<int>& shape, const std::vector<uint8_t>& data);
NstValue read_nst(std::istream& is);

void write_nst_file(const std::string& path, const Tensor& t);
void write_nst_file(const std::string& path, const std::vector<int>& shape,
                    const std::vector<uint8_t>& data);
NstValue read_nst_file(const std::string& path);

// 8-bit binary PGM with linear [min,max] -> [0,255] rescale.
void write_pgm(const std::string& path, const float* data, int h, int w);
void write_pgm_raw(const std::string& path, const uint8_t* data, int h, int w);

}  // namespace scribblemix
