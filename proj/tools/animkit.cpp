#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "animkit/evaluation.hpp"
#include "animkit/pipeline.hpp"
#include "animkit/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace animkit;
using nlohmann::json;

namespace {

TrainConfig config_from_file_or_default(const std::string& path) {
    if (path.empty()) return TrainConfig{};
    return load_train_config(path);
}

// side-by-side frame grid for quick inspection
StillImage frame_grid(const VideoClip& clip) {
    const int F = clip.frame_count(), H = clip.height(), W = clip.width();
    const int pad = 2;
    StillImage grid;
    grid.pixels = Tensor(Shape{3, H + 2 * pad, F * (W + pad) + pad}, 1.0);
    for (int f = 0; f < F; ++f)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    grid.pixels.at3(c, y + pad, pad + f * (W + pad) + x) =
                        clip.frames.at4(f, c, y, x);
    return grid;
}

int run(int argc, char** argv) {
    CLI::App app{"animkit: text-controlled image animation at desk scale"};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic moving-shapes dataset");
    std::string gen_out;
    DatasetConfig dcfg;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--per-class", dcfg.per_class, "clips per motion class");
    gen->add_option("--frames", dcfg.frames, "frames per clip");
    gen->add_option("--size", dcfg.size, "canvas size");
    gen->add_option("--seed", dcfg.seed, "generation seed");
    gen->add_option("--speed-min", dcfg.speed_min, "minimum speed unit");
    gen->add_option("--speed-max", dcfg.speed_max, "maximum speed unit");
    gen->callback([&]() {
        DatasetManifest m = generate_dataset(dcfg, gen_out);
        std::printf("wrote %zu clips to %s\n", m.entries.size(), gen_out.c_str());
    });

    // ---- fit-buckets ----
    auto* fitb = app.add_subcommand("fit-buckets", "fit the 10-level intensity bucket table");
    std::string fit_data, fit_out = "buckets.json";
    fitb->add_option("--data", fit_data, "dataset directory")->required();
    fitb->add_option("--out", fit_out, "output JSON path");
    fitb->callback([&]() {
        DatasetManifest m = load_dataset_manifest(fit_data);
        std::vector<double> intensities;
        for (const auto& e : m.entries) {
            VideoClip clip = load_clip((fs::path(fit_data) / e.clip_dir).string());
            intensities.push_back(motion_intensity(clip).value);
        }
        BucketTable t = fit_buckets(intensities);
        save_buckets(t, fit_out);
        std::printf("fitted %d-sample bucket table -> %s\n", t.corpus_size, fit_out.c_str());
    });

    // ---- estimate-intensity ----
    auto* est = app.add_subcommand("estimate-intensity", "measure a clip's motion intensity");
    std::string est_clip, est_buckets;
    est->add_option("--clip", est_clip, "clip directory")->required();
    est->add_option("--buckets", est_buckets, "bucket table JSON (adds the level)");
    est->callback([&]() {
        VideoClip clip = load_clip(est_clip);
        MotionIntensity mi = motion_intensity(clip);
        std::printf("intensity %.6f\n", mi.value);
        if (!est_buckets.empty()) {
            BucketTable t = load_buckets(est_buckets);
            std::printf("level %d\n", intensity_to_level(mi, t));
        }
    });

    // ---- pretrain ----
    auto* pre = app.add_subcommand("pretrain", "pretrain and freeze the image stack");
    std::string pre_data, pre_out, pre_cfg;
    pre->add_option("--data", pre_data, "dataset directory")->required();
    pre->add_option("--out", pre_out, "output checkpoint directory")->required();
    pre->add_option("--config", pre_cfg, "train config JSON");
    pre->callback([&]() {
        TrainConfig cfg = config_from_file_or_default(pre_cfg);
        PretrainReport r = pretrain_frozen_stack(cfg, pre_data, pre_out);
        std::printf("pretrained frozen stack: held-out PSNR %.2f dB, latent scale %.4f -> %s\n",
                    r.ae_psnr, r.latent_scale, pre_out.c_str());
    });

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train motion modules, visual projection, re-weighting");
    std::string tr_data, tr_init, tr_out, tr_cfg;
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--init", tr_init, "pretrained checkpoint")->required();
    tr->add_option("--out", tr_out, "output checkpoint directory")->required();
    tr->add_option("--config", tr_cfg, "train config JSON");
    tr->callback([&]() {
        TrainConfig cfg = config_from_file_or_default(tr_cfg);
        TrainReport r = train(cfg, tr_data, tr_init, tr_out);
        const double last = r.losses.empty() ? 0.0 : r.losses.back();
        std::printf("trained %zu steps, final loss %.6f -> %s\n", r.losses.size(), last,
                    tr_out.c_str());
    });

    // ---- animate ----
    auto* an = app.add_subcommand("animate", "animate an image from text + intensity level");
    std::string an_ckpt, an_image, an_text, an_out;
    AnimateParams ap;
    an->add_option("--ckpt", an_ckpt, "checkpoint directory")->required();
    an->add_option("--image", an_image, "reference image (PNG)")->required();
    an->add_option("--text", an_text, "motion prompt")->required();
    an->add_option("--level", ap.level, "intensity level 1..10");
    an->add_option("--steps", ap.steps, "DDIM steps");
    an->add_option("--scale", ap.scale, "guidance scale");
    an->add_option("--seed", ap.seed, "sampling seed");
    an->add_option("--out", an_out, "output clip directory")->required();
    an->callback([&]() {
        LoadedCheckpoint ck = load_checkpoint(an_ckpt);
        StillImage img = preprocess_image(load_image(an_image), ck.model->cfg.size);
        ap.text = an_text;
        VideoClip clip = animate(*ck.model, img, ap);
        save_clip(clip, an_out);
        save_image(frame_grid(clip), (fs::path(an_out) / "grid.png").string());
        std::printf("animated %d frames -> %s\n", clip.frame_count(), an_out.c_str());
    });

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "run the intensity-obedience evaluation suite");
    std::string ev_ckpt, ev_suite, ev_out = "report.json";
    ev->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
    ev->add_option("--suite", ev_suite, "suite JSON")->required();
    ev->add_option("--out", ev_out, "output report path");
    ev->callback([&]() {
        LoadedCheckpoint ck = load_checkpoint(ev_ckpt);
        if (!ck.model->has_buckets) throw Error("evaluate: checkpoint has no bucket table");
        std::ifstream f(ev_suite);
        if (!f) throw Error("evaluate: cannot open suite " + ev_suite);
        json suite;
        f >> suite;
        const int steps = suite.value("steps", 30);
        const double scale = suite.value("scale", 2.0);
        std::vector<std::pair<VideoClip, int>> clips;
        for (const auto& c : suite.at("cases")) {
            const int level = c.value("level", 5);
            if (c.contains("clip")) {
                clips.emplace_back(load_clip(c.at("clip").get<std::string>()), level);
                continue;
            }
            AnimateParams p;
            p.text = c.value("text", "");
            p.level = level;
            p.steps = steps;
            p.scale = scale;
            p.seed = c.value("seed", (uint64_t)0);
            StillImage img =
                preprocess_image(load_image(c.at("image").get<std::string>()), ck.model->cfg.size);
            clips.emplace_back(animate(*ck.model, img, p), level);
        }
        ObedienceReport r = intensity_obedience(clips, ck.model->buckets, ck.model->backbone);
        std::ofstream out(ev_out, std::ios::trunc);
        out << r.to_json_text();
        std::printf("evaluated %zu clips: mean |level error| %.2f, spearman %.3f -> %s\n",
                    clips.size(), r.mean_abs_error, r.spearman, ev_out.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints usage or help text
        return code == 0 ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "animkit: %s\n", e.what());
        return 2;
    }
}
