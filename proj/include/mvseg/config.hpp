#pragma once

#include <map>
#include <string>

#include "mvseg/augment.hpp"
#include "mvseg/loss.hpp"
#include "mvseg/model.hpp"

namespace mvseg {

struct TrainConfig {
    int epochs = 80;
    int batch_size = 2;
    double lr_new = 2e-4;
    double lr_pretrained_divisor = 10.0;
    bool freeze_backbone = true;
    uint64_t seed = 0;
    augment::AugmentConfig aug;
    std::string checkpoint_dir = "checkpoints";
    double weight_decay = 1e-4;
    int checkpoint_interval = 10; // epochs
    int64_t max_steps = 0;        // 0 = run all epochs
    int log_every = 1;
    LossConfig loss;

    void validate() const;
};

using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(const std::string& text);
KvMap parse_kv_file(const std::string& path);

// Applies recognized keys from the flat key=value map; throws ConfigError on
// keys unknown to both configs or on malformed values.
void apply_config(const KvMap& kv, ModelConfig& model, TrainConfig& train);

// Canonical sorted key=value serialization of the model config (used for
// checkpoint identity checks).
std::string serialize_model_config(const ModelConfig& cfg);
ModelConfig model_config_from_text(const std::string& text);

} // namespace mvseg
