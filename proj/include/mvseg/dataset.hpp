#pragma once

#include <string>
#include <vector>

#include "mvseg/tensor.hpp"

namespace mvseg {

struct DatasetSpec {
    std::string image_dir;
    std::string mask_dir;
};

struct SamplePaths {
    std::string stem;
    std::string image_path;
    std::string mask_path;
};

struct Sample {
    Tensor image; // ⟨3,H,W⟩ in [0,1]
    Tensor mask;  // ⟨1,H,W⟩ in {0,1}
};

// Stem-matched pairs, sorted by stem. Throws DataError if any image lacks a
// mask or vice versa (all offenders listed).
std::vector<SamplePaths> list_pairs(const DatasetSpec& spec);

// Loads and resizes to the working resolution: bilinear for the image,
// nearest for the mask (stays binary).
Sample load_sample(const SamplePaths& paths, int64_t work_h, int64_t work_w);

} // namespace mvseg
