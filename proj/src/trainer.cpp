#include "animkit/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace animkit {

std::vector<size_t> TrainingData::train_indices() const {
    std::vector<size_t> out;
    for (size_t i = 0; i < clips.size(); ++i)
        if (!is_holdout(i)) out.push_back(i);
    return out;
}

TrainingData load_training_data(const std::string& data_dir, int size, int frames) {
    TrainingData data;
    data.manifest = load_dataset_manifest(data_dir);
    if (data.manifest.entries.empty()) throw Error("load_training_data: empty dataset");
    data.clips.reserve(data.manifest.entries.size());
    for (const auto& e : data.manifest.entries) {
        VideoClip raw = load_clip((fs::path(data_dir) / e.clip_dir).string());
        data.clips.push_back(preprocess_clip(raw, size, frames));
        data.intensities.push_back(motion_intensity(data.clips.back()).value);
    }
    return data;
}

bool should_drop_text(RandomStream& rng, double drop_prob) {
    return rng.uniform() < drop_prob;
}

double psnr_from_mse(double mse) {
    if (mse <= 0.0) return 99.0;
    return 10.0 * std::log10(1.0 / mse);
}

std::vector<ClipCache> build_clip_caches(const Model& model, const TrainingData& data) {
    if (!model.has_buckets) throw Error("build_clip_caches: fit buckets first");
    std::vector<ClipCache> caches;
    caches.reserve(data.clips.size());
    for (size_t i = 0; i < data.clips.size(); ++i) {
        const VideoClip& clip = data.clips[i];
        ClipCache c;
        c.prompt = data.manifest.entries[i].prompt;
        c.intensity = data.intensities[i];
        c.level = intensity_to_level(MotionIntensity{c.intensity}, model.buckets);
        Tensor frames = clip.frames;  // [F,3,S,S]
        c.latents = model.ae.encode(frames);
        StillImage ref = frame_of(clip, 0);
        c.ref_latent = model.ae.encode_reference(ref).data;
        Tensor feats = model.backbone.extract(ref);
        c.backbone_feats = feats;
        caches.push_back(std::move(c));
    }
    return caches;
}

namespace {

void write_loss_log(const std::string& dir, const char* name, const std::vector<double>& losses) {
    json j;
    j["losses"] = losses;
    std::ofstream f(fs::path(dir) / name, std::ios::trunc);
    f << j.dump() << "\n";
}

}  // namespace

PretrainReport pretrain_frozen_stack(const TrainConfig& cfg, const std::string& data_dir,
                                     const std::string& out_ckpt) {
    cfg.validate();
    TrainingData data = load_training_data(data_dir, cfg.size, cfg.frames);

    std::vector<std::string> prompts;
    for (const auto& e : data.manifest.entries) prompts.push_back(e.prompt);
    Vocabulary vocab = Vocabulary::build(prompts);

    Model model(cfg.model_config(), vocab);
    model.buckets = fit_buckets(data.intensities);
    model.has_buckets = true;

    const std::vector<size_t> train_idx = data.train_indices();
    std::vector<size_t> holdout_idx;
    for (size_t i = 0; i < data.clips.size(); ++i)
        if (data.is_holdout(i)) holdout_idx.push_back(i);
    if (train_idx.empty()) throw Error("pretrain: no training clips");

    PretrainReport report;
    const int S = cfg.size, F = cfg.frames;
    const int hs = S / 4;

    // ---- phase 1a: autoencoder ----
    {
        model.reg.set_trainable_modules({"autoencoder"});
        nn::Adam opt(cfg.learning_rate);
        RandomStream rng(derive_seed(cfg.seed, "phase1a"));
        for (int step = 0; step < cfg.pretrain_ae_steps; ++step) {
            Tensor batch(Shape{cfg.batch_size, 3, S, S});
            for (int b = 0; b < cfg.batch_size; ++b) {
                const size_t ci = train_idx[(size_t)rng.randint((int64_t)train_idx.size())];
                const int fi = (int)rng.randint(F);
                const VideoClip& clip = data.clips[ci];
                std::copy_n(clip.frames.data.begin() + (int64_t)fi * 3 * S * S,
                            (int64_t)3 * S * S, batch.data.begin() + (int64_t)b * 3 * S * S);
            }
            nn::Graph g;
            nn::Var x = g.constant(batch);
            nn::Var rec = model.ae.decode_var(g, model.ae.encode_var(g, x));
            nn::Var loss = ad::mse(rec, x);
            model.reg.zero_grads();
            g.backward(loss);
            opt.step(model.reg);
            report.ae_losses.push_back(loss.val()[0]);
            if (cfg.log_every > 0 && step % cfg.log_every == 0)
                std::fprintf(stderr, "[pretrain ae] step %d loss %.6f\n", step, loss.val()[0]);
        }
    }

    // ---- PSNR gate on held-out frames ----
    {
        const auto& eval_idx = holdout_idx.empty() ? train_idx : holdout_idx;
        double total_se = 0.0;
        int64_t count = 0;
        for (size_t ci : eval_idx) {
            const Tensor& frames = data.clips[ci].frames;
            nn::Graph g;
            nn::Var x = g.constant(frames);
            Tensor rec = model.ae.decode_var(g, model.ae.encode_var(g, x)).val();
            for (size_t k = 0; k < rec.data.size(); ++k) {
                const double d = std::clamp(rec.data[k], 0.0, 1.0) - frames.data[k];
                total_se += d * d;
            }
            count += rec.numel();
        }
        report.ae_psnr = psnr_from_mse(total_se / (double)count);
        std::fprintf(stderr, "[pretrain ae] held-out PSNR %.2f dB\n", report.ae_psnr);
        if (report.ae_psnr < 25.0)
            throw Error("pretrain: autoencoder round-trip PSNR " +
                        std::to_string(report.ae_psnr) +
                        " dB below the 25 dB gate; raise pretrain_ae_steps or check the data");
    }

    // ---- latent scale from the training latent spread ----
    {
        double sq = 0.0;
        int64_t count = 0;
        for (size_t i = 0; i < train_idx.size() && i < 64; ++i) {
            nn::Graph g;
            Tensor z = model.ae.encode_var(g, g.constant(data.clips[train_idx[i]].frames)).val();
            for (double v : z.data) sq += v * v;
            count += z.numel();
        }
        const double std_dev = std::sqrt(sq / (double)count);
        model.ae.latent_scale = std_dev > 0.0 ? 1.0 / std_dev : 1.0;
        model.cfg.latent_scale = model.ae.latent_scale;
        report.latent_scale = model.ae.latent_scale;
    }

    // ---- phase 1b: spatial UNet as a single-frame image denoiser ----
    {
        std::vector<ClipCache> cache = build_clip_caches(model, data);
        model.reg.set_trainable_modules({"spatial_unet", "visual_projection"});
        nn::Adam opt(cfg.learning_rate);
        RandomStream rng(derive_seed(cfg.seed, "phase1b"));
        const int64_t plane = (int64_t)hs * hs;
        for (int step = 0; step < cfg.pretrain_unet_steps; ++step) {
            const int B = cfg.batch_size;
            Tensor noise(Shape{B, 1, 4, hs, hs});
            Tensor eps(Shape{B, 1, 4, hs, hs});
            Tensor ref(Shape{B, 4, hs, hs});
            Tensor feats(Shape{B, model.backbone.token_count(), model.backbone.dim()});
            std::vector<int> levels((size_t)B), ts((size_t)B);
            std::vector<double> fpos((size_t)B);
            std::vector<std::string> batch_prompts((size_t)B);
            for (int b = 0; b < B; ++b) {
                const size_t ci = train_idx[(size_t)rng.randint((int64_t)train_idx.size())];
                const int fi = (int)rng.randint(F);
                const ClipCache& c = cache[ci];
                const int t = (int)rng.randint(model.sched.timesteps);
                Tensor e(Shape{4, hs, hs});
                rng.fill_normal(e);
                for (int64_t k = 0; k < 4 * plane; ++k) {
                    const double z0 = c.latents.data[(size_t)((int64_t)fi * 4 * plane + k)];
                    const double abar = model.sched.alpha_bar[(size_t)t];
                    noise.data[(size_t)((int64_t)b * 4 * plane + k)] =
                        std::sqrt(abar) * z0 + std::sqrt(1.0 - abar) * e.data[(size_t)k];
                    eps.data[(size_t)((int64_t)b * 4 * plane + k)] = e.data[(size_t)k];
                }
                std::copy_n(c.ref_latent.data.begin(), 4 * plane,
                            ref.data.begin() + (int64_t)b * 4 * plane);
                std::copy_n(c.backbone_feats.data.begin(), c.backbone_feats.numel(),
                            feats.data.begin() + (int64_t)b * c.backbone_feats.numel());
                levels[(size_t)b] = c.level;
                ts[(size_t)b] = t;
                fpos[(size_t)b] = F == 1 ? 0.0 : (double)fi / (double)(F - 1);
                batch_prompts[(size_t)b] = should_drop_text(rng, cfg.text_drop_prob) ? "" : c.prompt;
            }
            Tensor input = assemble_input(noise, ref, levels, 1, &fpos);
            nn::Graph g;
            nn::Var text_ctx = model.text_context_var(g, batch_prompts, 1);
            nn::Var vis = model.visual_context_var(g, feats);
            nn::Var pred = model.denoiser.fwd(g, g.constant(input), ts, text_ctx, vis,
                                              /*include_motion=*/false);
            nn::Var loss = ad::mse(pred, g.constant(eps));
            model.reg.zero_grads();
            g.backward(loss);
            opt.step(model.reg);
            report.unet_losses.push_back(loss.val()[0]);
            if (cfg.log_every > 0 && step % cfg.log_every == 0)
                std::fprintf(stderr, "[pretrain unet] step %d loss %.6f\n", step, loss.val()[0]);
        }
    }

    model.reg.set_trainable_modules({});
    save_checkpoint(model, cfg, out_ckpt);
    write_loss_log(out_ckpt, "pretrain_log.json", report.unet_losses);
    return report;
}

Phase2Trainer::Phase2Trainer(Model& model, const TrainConfig& cfg, const TrainingData& data)
    : model_(model),
      cfg_(cfg),
      opt_(cfg.learning_rate),
      rng_(derive_seed(cfg.seed, "phase2")) {
    if (!model_.has_buckets) throw Error("Phase2Trainer: fit buckets first");
    cache_ = build_clip_caches(model_, data);
    train_idx_ = data.train_indices();
    if (train_idx_.empty()) throw Error("Phase2Trainer: no training clips");
    model_.reg.set_trainable_modules({"motion", "visual_projection", "reweight_head"});
}

double Phase2Trainer::step(const StepOptions& opt) {
    const int B = cfg_.batch_size, F = cfg_.frames;
    const int hs = model_.cfg.latent_size();
    const int64_t plane = (int64_t)hs * hs;
    const int64_t fvol = (int64_t)4 * plane;

    Tensor noise(Shape{B, F, 4, hs, hs});
    Tensor eps(Shape{B, F, 4, hs, hs});
    Tensor ref(Shape{B, 4, hs, hs});
    Tensor feats(Shape{B, model_.backbone.token_count(), model_.backbone.dim()});
    std::vector<int> levels((size_t)B), ts((size_t)B);
    std::vector<std::string> prompts((size_t)B);

    for (int b = 0; b < B; ++b) {
        const size_t ci = train_idx_[(size_t)rng_.randint((int64_t)train_idx_.size())];
        const ClipCache& c = cache_[ci];
        const int t = (int)rng_.randint(model_.sched.timesteps);
        const double abar = model_.sched.alpha_bar[(size_t)t];
        const double sa = std::sqrt(abar), sb = std::sqrt(1.0 - abar);
        for (int f = 0; f < F; ++f)
            for (int64_t k = 0; k < fvol; ++k) {
                const double e = rng_.normal();
                const double z0 = c.latents.data[(size_t)((int64_t)f * fvol + k)];
                const int64_t at = ((int64_t)b * F + f) * fvol + k;
                eps.data[(size_t)at] = e;
                noise.data[(size_t)at] = sa * z0 + sb * e;
            }
        std::copy_n(c.ref_latent.data.begin(), fvol, ref.data.begin() + (int64_t)b * fvol);
        std::copy_n(c.backbone_feats.data.begin(), c.backbone_feats.numel(),
                    feats.data.begin() + (int64_t)b * c.backbone_feats.numel());
        levels[(size_t)b] = c.level;
        ts[(size_t)b] = t;
        prompts[(size_t)b] = should_drop_text(rng_, cfg_.text_drop_prob) ? "" : c.prompt;
    }

    ++steps_;
    if (opt.force_perfect_prediction) return training_loss(eps, eps);

    Tensor input = assemble_input(noise, ref, levels, F);
    nn::Graph g;
    nn::Var text_ctx = model_.text_context_var(g, prompts, F);
    nn::Var vis = model_.visual_context_var(g, feats);
    nn::Var pred = model_.denoiser.fwd(g, g.constant(input), ts, text_ctx, vis,
                                       /*include_motion=*/true);
    nn::Var loss = ad::mse(pred, g.constant(eps));
    if (opt.update) {
        model_.reg.zero_grads();
        g.backward(loss);
        opt_.step(model_.reg);
    }
    return loss.val()[0];
}

TrainReport train(const TrainConfig& cfg, const std::string& data_dir,
                  const std::string& init_ckpt, const std::string& out_ckpt) {
    cfg.validate();
    LoadedCheckpoint loaded = load_checkpoint(init_ckpt);
    Model& model = *loaded.model;
    if (model.cfg.frames != cfg.frames || model.cfg.size != cfg.size ||
        model.cfg.timesteps != cfg.timesteps)
        throw Error("train: config frames/size/timesteps must match the pretrained checkpoint");

    TrainingData data = load_training_data(data_dir, cfg.size, cfg.frames);
    Phase2Trainer trainer(model, cfg, data);

    TrainReport report;
    for (int step = 0; step < cfg.train_steps; ++step) {
        const double loss = trainer.step();
        if (!std::isfinite(loss))
            throw Error("train: non-finite loss at step " + std::to_string(step) +
                        "; lower the learning rate");
        report.losses.push_back(loss);
        if (cfg.log_every > 0 && step % cfg.log_every == 0)
            std::fprintf(stderr, "[train] step %d loss %.6f\n", step, loss);
        if (cfg.checkpoint_every > 0 && step > 0 && step % cfg.checkpoint_every == 0) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "periodic/step_%06d", step);
            save_checkpoint(model, cfg, (fs::path(out_ckpt) / buf).string());
        }
    }
    save_checkpoint(model, cfg, out_ckpt);
    write_loss_log(out_ckpt, "training_log.json", report.losses);
    return report;
}

}  // namespace animkit
