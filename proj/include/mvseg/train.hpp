#pragma once

#include <ostream>
#include <vector>

#include "mvseg/config.hpp"
#include "mvseg/dataset.hpp"

namespace mvseg {

struct TrainResult {
    std::string checkpoint_path;
    std::vector<double> step_losses;
    std::vector<double> epoch_mean_loss;
    std::vector<double> epoch_train_mae;
    double final_train_mae = 1.0;
    int64_t steps_run = 0;
};

// Trains from scratch on the stem-matched dataset; writes periodic and final
// checkpoints under tcfg.checkpoint_dir. Deterministic for a fixed seed.
TrainResult train(const DatasetSpec& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  std::ostream* log = nullptr);

// Runs the checkpointed model over every readable image in image_dir and
// writes 8-bit grayscale prediction maps (stem.png) into out_dir.
void predict(const std::string& checkpoint_path, const std::string& image_dir,
             const std::string& out_dir, std::ostream* log = nullptr);

// Deterministic per-sample seed derivation.
uint64_t derive_seed(uint64_t base, uint64_t epoch, uint64_t index);

} // namespace mvseg
