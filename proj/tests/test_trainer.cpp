#include <filesystem>
#include <fstream>

#include "animkit/pipeline.hpp"
#include "animkit/trainer.hpp"
#include "doctest.h"

using namespace animkit;
namespace fs = std::filesystem;

namespace {

std::vector<uint8_t> file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.frames = 4;
    cfg.size = 16;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e-3;
    cfg.pretrain_ae_steps = 900;
    cfg.pretrain_unet_steps = 60;
    cfg.train_steps = 20;
    cfg.timesteps = 50;
    cfg.seed = 123;
    cfg.log_every = 0;
    cfg.checkpoint_every = 0;
    return cfg;
}

// dataset + pretrained checkpoint shared by the trainer tests
struct TrainFixture {
    fs::path root;
    TrainConfig cfg = tiny_config();
    PretrainReport report;

    TrainFixture() {
        root = fs::temp_directory_path() / "animkit_tests" / "trainer_fixture";
        fs::remove_all(root);
        fs::create_directories(root);
        DatasetConfig d;
        d.per_class = 13;  // 104 clips, enough for bucket fitting
        d.frames = cfg.frames;
        d.size = cfg.size;
        d.speed_min = 0.0;
        d.speed_max = 1.5;
        d.seed = 9;
        generate_dataset(d, data_dir());
        report = pretrain_frozen_stack(cfg, data_dir(), ckpt_dir());
    }

    std::string data_dir() const { return (root / "data").string(); }
    std::string ckpt_dir() const { return (root / "pretrained").string(); }

    static TrainFixture& get() {
        static TrainFixture fx;
        return fx;
    }
};

}  // namespace

TEST_CASE("trainer: pretrain passes the held-out PSNR gate and fits buckets") {
    TrainFixture& fx = TrainFixture::get();
    CHECK(fx.report.ae_psnr >= 25.0);
    CHECK(fx.report.latent_scale > 0.0);
    LoadedCheckpoint ck = load_checkpoint(fx.ckpt_dir());
    CHECK(ck.model->has_buckets);
    CHECK(ck.model->buckets.corpus_size == 104);
    CHECK(ck.model->ae.latent_scale == doctest::Approx(fx.report.latent_scale));
}

TEST_CASE("trainer: pretrain gate failure carries a diagnostic") {
    TrainFixture& fx = TrainFixture::get();
    TrainConfig bad = fx.cfg;
    bad.pretrain_ae_steps = 0;
    bad.pretrain_unet_steps = 0;
    const std::string out =
        (fs::temp_directory_path() / "animkit_tests" / "gate_fail").string();
    CHECK_THROWS_WITH_AS(pretrain_frozen_stack(bad, fx.data_dir(), out),
                         doctest::Contains("PSNR"), Error);
}

TEST_CASE("trainer: checkpoint reload is bit-identical") {
    TrainFixture& fx = TrainFixture::get();
    LoadedCheckpoint ck = load_checkpoint(fx.ckpt_dir());
    const std::string copy =
        (fs::temp_directory_path() / "animkit_tests" / "ckpt_copy").string();
    save_checkpoint(*ck.model, ck.train_cfg, copy);
    CHECK(file_bytes(fx.ckpt_dir() + "/params.bin") == file_bytes(copy + "/params.bin"));
    CHECK(file_bytes(fx.ckpt_dir() + "/manifest.json") == file_bytes(copy + "/manifest.json"));
    CHECK(file_bytes(fx.ckpt_dir() + "/vocab.json") == file_bytes(copy + "/vocab.json"));
}

TEST_CASE("trainer: checkpoint manifest partitions the frozen stack") {
    TrainFixture& fx = TrainFixture::get();
    LoadedCheckpoint ck = load_checkpoint(fx.ckpt_dir());
    auto [frozen, trainable] = parameter_partition(ck.model->reg);
    bool saw_ae = false, saw_unet = false, saw_embedder = false, saw_backbone = false;
    for (const auto& name : frozen) {
        saw_ae = saw_ae || name.rfind("autoencoder.", 0) == 0;
        saw_unet = saw_unet || name.rfind("unet.", 0) == 0;
        saw_embedder = saw_embedder || name.rfind("text_embedder.", 0) == 0;
        saw_backbone = saw_backbone || name.rfind("patch_backbone.", 0) == 0;
    }
    CHECK(saw_ae);
    CHECK(saw_unet);
    CHECK(saw_embedder);
    CHECK(saw_backbone);
    bool saw_motion = false, saw_proj = false, saw_head = false;
    for (const auto& name : trainable) {
        saw_motion = saw_motion || name.rfind("motion.", 0) == 0;
        saw_proj = saw_proj || name.rfind("visual_projection.", 0) == 0;
        saw_head = saw_head || name.rfind("reweight_head.", 0) == 0;
    }
    CHECK(saw_motion);
    CHECK(saw_proj);
    CHECK(saw_head);
}

TEST_CASE("trainer: 100 phase-2 steps keep frozen params bit-identical") {
    TrainFixture& fx = TrainFixture::get();
    LoadedCheckpoint ck = load_checkpoint(fx.ckpt_dir());
    TrainingData data = load_training_data(fx.data_dir(), fx.cfg.size, fx.cfg.frames);

    std::vector<std::pair<std::string, Tensor>> frozen_before;
    std::vector<std::pair<std::string, Tensor>> trainable_before;
    for (const auto& p : ck.model->reg.all()) {
        if (is_frozen_module(p->module))
            frozen_before.emplace_back(p->name, p->value);
        else
            trainable_before.emplace_back(p->name, p->value);
    }

    TrainConfig cfg = fx.cfg;
    cfg.batch_size = 2;
    Phase2Trainer trainer(*ck.model, cfg, data);
    for (int i = 0; i < 100; ++i) {
        const double loss = trainer.step();
        CHECK(std::isfinite(loss));
        CHECK(loss >= 0.0);
    }

    for (const auto& [name, before] : frozen_before) {
        const Parameter* p = ck.model->reg.find(name);
        REQUIRE(p != nullptr);
        CHECK(max_abs_diff(p->value, before) == 0.0);
    }
    // every trainable group moved somewhere
    for (const std::string group : {"motion", "visual_projection", "reweight_head"}) {
        bool changed = false;
        for (const auto& [name, before] : trainable_before) {
            const Parameter* p = ck.model->reg.find(name);
            if (p->module == group && max_abs_diff(p->value, before) > 0.0) changed = true;
        }
        INFO("group ", group);
        CHECK(changed);
    }
}

TEST_CASE("trainer: perfect prediction drives the step loss to zero") {
    TrainFixture& fx = TrainFixture::get();
    LoadedCheckpoint ck = load_checkpoint(fx.ckpt_dir());
    TrainingData data = load_training_data(fx.data_dir(), fx.cfg.size, fx.cfg.frames);
    Phase2Trainer trainer(*ck.model, fx.cfg, data);
    Phase2Trainer::StepOptions opt;
    opt.update = false;
    opt.force_perfect_prediction = true;
    CHECK(trainer.step(opt) == 0.0);
}

TEST_CASE("trainer: text-drop frequency over 10k seeded draws") {
    RandomStream rng(derive_seed(77, "drop-test"));
    int drops = 0;
    for (int i = 0; i < 10000; ++i)
        if (should_drop_text(rng, 0.5)) ++drops;
    const double freq = drops / 10000.0;
    CHECK(freq >= 0.48);
    CHECK(freq <= 0.52);
}

TEST_CASE("trainer: fixed seed reproduces the loss sequence bit-identically") {
    TrainFixture& fx = TrainFixture::get();
    TrainingData data = load_training_data(fx.data_dir(), fx.cfg.size, fx.cfg.frames);
    std::vector<double> run1, run2;
    for (auto* out : {&run1, &run2}) {
        LoadedCheckpoint ck = load_checkpoint(fx.ckpt_dir());
        Phase2Trainer trainer(*ck.model, fx.cfg, data);
        for (int i = 0; i < 5; ++i) out->push_back(trainer.step());
    }
    CHECK(run1 == run2);
}

TEST_CASE("trainer: reloaded checkpoints give identical predictions") {
    TrainFixture& fx = TrainFixture::get();
    LoadedCheckpoint a = load_checkpoint(fx.ckpt_dir());
    LoadedCheckpoint b = load_checkpoint(fx.ckpt_dir());
    RandomStream rs(31);
    const int hs = a.model->cfg.latent_size();
    Tensor input(Shape{1, fx.cfg.frames, 10, hs, hs});
    rs.fill_normal(input);
    StillImage img;
    img.pixels = Tensor(Shape{3, fx.cfg.size, fx.cfg.size}, 0.4);
    const Tensor feats_a = a.model->backbone_features(img);
    const Tensor feats_b = b.model->backbone_features(img);
    Tensor pa = a.model->predict_noise(input, {7}, {"the red square moves left"}, feats_a, true);
    Tensor pb = b.model->predict_noise(input, {7}, {"the red square moves left"}, feats_b, true);
    CHECK(max_abs_diff(pa, pb) == 0.0);
}

TEST_CASE("trainer: full train() run writes logs and preserves frozen bytes") {
    TrainFixture& fx = TrainFixture::get();
    const std::string out = (fx.root / "trained").string();
    TrainReport report = train(fx.cfg, fx.data_dir(), fx.ckpt_dir(), out);
    REQUIRE((int)report.losses.size() == fx.cfg.train_steps);
    CHECK(fs::exists(fs::path(out) / "training_log.json"));

    // frozen parameter bytes identical between the pretrained and final checkpoints
    LoadedCheckpoint before = load_checkpoint(fx.ckpt_dir());
    LoadedCheckpoint after = load_checkpoint(out);
    for (const auto& p : before.model->reg.all()) {
        if (!is_frozen_module(p->module)) continue;
        const Parameter* q = after.model->reg.find(p->name);
        REQUIRE(q != nullptr);
        CHECK(max_abs_diff(p->value, q->value) == 0.0);
    }
}

TEST_CASE("trainer: phase-2 requires a fitted bucket table") {
    TrainFixture& fx = TrainFixture::get();
    LoadedCheckpoint ck = load_checkpoint(fx.ckpt_dir());
    ck.model->has_buckets = false;
    TrainingData data = load_training_data(fx.data_dir(), fx.cfg.size, fx.cfg.frames);
    CHECK_THROWS_WITH_AS(Phase2Trainer(*ck.model, fx.cfg, data),
                         doctest::Contains("fit buckets first"), Error);
}
