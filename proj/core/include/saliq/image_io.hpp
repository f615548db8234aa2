#pragma once

#include <string>

#include "saliq/tensor.hpp"

namespace saliq {

/// Read a binary PPM (P6) into a [3,H,W] tensor scaled to [0,1]. Supports
/// 1- and 2-byte samples per the maxval; throws on malformed files.
Tensor read_ppm(const std::string& path);

/// Write a [3,H,W] tensor in [0,1] as a binary PPM with maxval 255.
void write_ppm(const Tensor& image, const std::string& path);

/// Bilinear resize with half-pixel centers; identity when sizes match.
Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

}  // namespace saliq
