#pragma once

#include <string>

#include "axwin/tensor.hpp"

namespace axwin {

// AXTF tensor file: magic "AXTF", u16 LE version = 1, u8 dtype (0=f32,
// 1=f64), u8 rank = 4, four u32 LE extents (n,h,w,c), then raw
// little-endian values in row-major (n,h,w,c) order. No padding.
void write_axtf(const std::string& path, const Tensor& t);
Tensor read_axtf(const std::string& path);

}  // namespace axwin
