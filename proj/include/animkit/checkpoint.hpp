#pragma once

#include <memory>
#include <string>

#include "animkit/model.hpp"

namespace animkit {

struct TrainConfig {
    int frames = 8;
    int size = 32;
    int batch_size = 4;
    double learning_rate = 1e-4;
    int pretrain_ae_steps = 1500;
    int pretrain_unet_steps = 2000;
    int train_steps = 2200;
    double text_drop_prob = 0.5;
    uint64_t seed = 0;
    int timesteps = 100;
    double beta_start = 0.001;
    double beta_end = 0.2;
    bool separate_visual_xattn = true;
    int log_every = 100;
    int checkpoint_every = 1000;

    void validate() const;
    ModelConfig model_config() const;
};

TrainConfig load_train_config(const std::string& path);
TrainConfig train_config_from_json_text(const std::string& text);

// Checkpoint directory layout (byte layout of params.bin is normative):
//   manifest.json  — every parameter: name, module, group, shape, dtype, offset
//   params.bin     — raw little-endian float32, concatenated in manifest order
//   buckets.json, vocab.json, config.json
void save_checkpoint(const Model& model, const TrainConfig& train_cfg, const std::string& dir);

struct LoadedCheckpoint {
    std::unique_ptr<Model> model;
    TrainConfig train_cfg;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace animkit
