#pragma once

#include <string>

#include "mixseg/tensor.hpp"

namespace mixseg {

// PNM readers/writers (PGM P2/P5 grayscale, PPM P3/P6 color), 8-bit only.
// Loaded pixels are scaled to [0,1]; shape is (h,w,c) with c in {1,3}.
Tensor<float> load_pnm(const std::string& path);

// Writes (h,w,1) as P5 or (h,w,3) as P6, rounding [0,1] values to bytes.
void save_pnm(const std::string& path, const Tensor<float>& image);

// Writes a binary mask (h,w,1) with values {0,1} as a P5 file of {0,255}.
void save_mask_pnm(const std::string& path, const Tensor<float>& mask);

}  // namespace mixseg
