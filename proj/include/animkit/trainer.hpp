#pragma once

#include "animkit/checkpoint.hpp"
#include "animkit/rng.hpp"
#include "animkit/synthetic.hpp"

namespace animkit {

// Per-clip tensors precomputed through the frozen stack.
struct ClipCache {
    Tensor latents;         // [F,4,h,w], diffusion scale
    Tensor ref_latent;      // [4,h,w]
    Tensor backbone_feats;  // [Nv,Dv]
    std::string prompt;
    int level = 5;
    double intensity = 1.0;
};

struct TrainingData {
    DatasetManifest manifest;
    std::vector<VideoClip> clips;  // preprocessed to the training size/frames
    std::vector<double> intensities;

    // clips with index % 10 == 9 are held out from optimization
    bool is_holdout(size_t i) const { return i % 10 == 9; }
    std::vector<size_t> train_indices() const;
};

TrainingData load_training_data(const std::string& data_dir, int size, int frames);

// classifier-free-guidance text dropping; one uniform draw per sample
bool should_drop_text(RandomStream& rng, double drop_prob);

struct PretrainReport {
    double ae_psnr = 0.0;
    double latent_scale = 1.0;
    std::vector<double> ae_losses;
    std::vector<double> unet_losses;
};

// Phase 1: trains the autoencoder, gates on held-out round-trip PSNR >= 25 dB,
// then trains the spatial UNet as a single-frame image denoiser. Fits the
// intensity bucket table and saves everything as the frozen-stack checkpoint.
PretrainReport pretrain_frozen_stack(const TrainConfig& cfg, const std::string& data_dir,
                                     const std::string& out_ckpt);

// Phase 2 stepper over motion modules, visual projection, re-weighting head.
class Phase2Trainer {
public:
    Phase2Trainer(Model& model, const TrainConfig& cfg, const TrainingData& data);

    struct StepOptions {
        bool update = true;
        bool force_perfect_prediction = false;  // diagnostic: loss of eps vs eps
    };

    double step() { return step(StepOptions{}); }
    double step(const StepOptions& opt);
    int64_t steps_done() const { return steps_; }
    const std::vector<ClipCache>& cache() const { return cache_; }

private:
    Model& model_;
    TrainConfig cfg_;
    std::vector<ClipCache> cache_;
    std::vector<size_t> train_idx_;
    nn::Adam opt_;
    RandomStream rng_;
    int64_t steps_ = 0;
};

struct TrainReport {
    std::vector<double> losses;
};

TrainReport train(const TrainConfig& cfg, const std::string& data_dir,
                  const std::string& init_ckpt, const std::string& out_ckpt);

std::vector<ClipCache> build_clip_caches(const Model& model, const TrainingData& data);

double psnr_from_mse(double mse);

}  // namespace animkit
