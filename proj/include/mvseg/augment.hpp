#pragma once

#include <random>

#include "mvseg/tensor.hpp"

namespace mvseg::augment {

struct AugmentConfig {
    bool hflip = true;
    bool crop = true;
    bool rotation = true;
    double crop_area_min = 0.75; // area fraction lower bound
    double rotation_max_deg = 15.0;
};

// Identical geometric transform applied to image (bilinear, reflection
// padding) and mask (nearest, stays binary). Order: hflip, crop, rotation.
void apply(Tensor& image /*⟨3,H,W⟩*/, Tensor& mask /*⟨1,H,W⟩*/, const AugmentConfig& cfg,
           std::mt19937_64& rng);

Tensor nearest_resize(const Tensor& x /*⟨C,H,W⟩*/, int64_t out_h, int64_t out_w);
Tensor hflip(const Tensor& x /*⟨C,H,W⟩*/);
Tensor rotate(const Tensor& x /*⟨C,H,W⟩*/, double degrees, bool nearest);

} // namespace mvseg::augment
