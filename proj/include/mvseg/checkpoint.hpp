#pragma once

#include <string>

#include "mvseg/model.hpp"

namespace mvseg {

// Versioned binary container: format tag, full model config, named parameter
// blobs with shapes and per-blob checksums. Loading verifies version, shape
// and checksum and names the offending entry on mismatch.
void save_checkpoint(const SegModel& model, const std::string& path);

// Rebuilds the model from the stored config.
SegModel load_checkpoint(const std::string& path);

// Loads parameters into an existing model; the stored config must match the
// model's config key-for-key (the first mismatch is reported).
void load_checkpoint_into(SegModel& model, const std::string& path);

uint64_t fnv1a64(const void* data, size_t n);

} // namespace mvseg
