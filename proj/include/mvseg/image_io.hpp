#pragma once

#include <string>

#include "mvseg/tensor.hpp"

namespace mvseg::io {

// RGB image as ⟨3,H,W⟩ doubles in [0,1].
Tensor load_image(const std::string& path);
// Grayscale map ⟨H,W⟩ in [0,1] (8-bit value / 255).
Tensor load_grayscale(const std::string& path);
// 8-bit mask binarized at >= 128 -> ⟨H,W⟩ of {0,1}.
Tensor load_mask(const std::string& path);

// Quantizes [0,1] to 8-bit with round(v*255) and writes a grayscale image.
void save_grayscale(const std::string& path, const Tensor& map);

uint8_t quantize8(double v);

} // namespace mvseg::io
