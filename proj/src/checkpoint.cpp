#include "animkit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian float32");

namespace animkit {

void TrainConfig::validate() const {
    if (frames < 1 || size < 8 || size % 4 != 0) throw Error("TrainConfig: bad frames/size");
    if (batch_size < 1 || learning_rate <= 0.0) throw Error("TrainConfig: bad optimizer config");
    if (text_drop_prob < 0.0 || text_drop_prob > 1.0)
        throw Error("TrainConfig: text_drop_prob must be in [0,1]");
    if (pretrain_ae_steps < 0 || pretrain_unet_steps < 0 || train_steps < 0)
        throw Error("TrainConfig: step counts must be non-negative");
    if (timesteps < 2) throw Error("TrainConfig: timesteps must be >= 2");
}

ModelConfig TrainConfig::model_config() const {
    ModelConfig m;
    m.frames = frames;
    m.size = size;
    m.timesteps = timesteps;
    m.beta_start = beta_start;
    m.beta_end = beta_end;
    m.separate_visual_xattn = separate_visual_xattn;
    m.init_seed = seed;
    return m;
}

namespace {

json train_config_to_json(const TrainConfig& c) {
    json j;
    j["frames"] = c.frames;
    j["size"] = c.size;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["pretrain_ae_steps"] = c.pretrain_ae_steps;
    j["pretrain_unet_steps"] = c.pretrain_unet_steps;
    j["train_steps"] = c.train_steps;
    j["text_drop_prob"] = c.text_drop_prob;
    j["seed"] = c.seed;
    j["timesteps"] = c.timesteps;
    j["beta_start"] = c.beta_start;
    j["beta_end"] = c.beta_end;
    j["separate_visual_xattn"] = c.separate_visual_xattn;
    j["log_every"] = c.log_every;
    j["checkpoint_every"] = c.checkpoint_every;
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.frames = j.value("frames", c.frames);
    c.size = j.value("size", c.size);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.pretrain_ae_steps = j.value("pretrain_ae_steps", c.pretrain_ae_steps);
    c.pretrain_unet_steps = j.value("pretrain_unet_steps", c.pretrain_unet_steps);
    c.train_steps = j.value("train_steps", c.train_steps);
    c.text_drop_prob = j.value("text_drop_prob", c.text_drop_prob);
    c.seed = j.value("seed", c.seed);
    c.timesteps = j.value("timesteps", c.timesteps);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    c.separate_visual_xattn = j.value("separate_visual_xattn", c.separate_visual_xattn);
    c.log_every = j.value("log_every", c.log_every);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.validate();
    return c;
}

json model_config_to_json(const ModelConfig& c) {
    json j;
    j["frames"] = c.frames;
    j["size"] = c.size;
    j["text_len"] = c.text_len;
    j["text_dim"] = c.text_dim;
    j["patch"] = c.patch;
    j["backbone_dim"] = c.backbone_dim;
    j["schedule"] = {{"T", c.timesteps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
    j["separate_visual_xattn"] = c.separate_visual_xattn;
    j["latent_scale"] = c.latent_scale;
    j["prior_alpha_first"] = c.prior_alpha_first;
    j["prior_alpha_last"] = c.prior_alpha_last;
    j["init_seed"] = c.init_seed;
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.frames = j.at("frames").get<int>();
    c.size = j.at("size").get<int>();
    c.text_len = j.at("text_len").get<int>();
    c.text_dim = j.at("text_dim").get<int>();
    c.patch = j.at("patch").get<int>();
    c.backbone_dim = j.at("backbone_dim").get<int>();
    c.timesteps = j.at("schedule").at("T").get<int>();
    c.beta_start = j.at("schedule").at("beta_start").get<double>();
    c.beta_end = j.at("schedule").at("beta_end").get<double>();
    c.separate_visual_xattn = j.at("separate_visual_xattn").get<bool>();
    c.latent_scale = j.at("latent_scale").get<double>();
    c.prior_alpha_first = j.at("prior_alpha_first").get<double>();
    c.prior_alpha_last = j.at("prior_alpha_last").get<double>();
    c.init_seed = j.at("init_seed").get<uint64_t>();
    return c;
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("load_train_config: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw Error("load_train_config: bad JSON in " + path + ": " + e.what());
    }
    return train_config_from_json(j);
}

TrainConfig train_config_from_json_text(const std::string& text) {
    return train_config_from_json(json::parse(text));
}

void save_checkpoint(const Model& model, const TrainConfig& train_cfg, const std::string& dir) {
    fs::create_directories(dir);

    json manifest;
    manifest["format"] = "animkit-checkpoint-v1";
    json params = json::array();
    int64_t offset = 0;
    std::vector<float> blob;
    for (const auto& p : model.reg.all()) {
        json jp;
        jp["name"] = p->name;
        jp["module"] = p->module;
        jp["group"] = is_trainable_module(p->module) ? "trainable" : "frozen";
        jp["shape"] = p->value.shape;
        jp["dtype"] = "f32";
        jp["offset"] = offset;
        params.push_back(std::move(jp));
        for (double v : p->value.data) blob.push_back((float)v);
        offset += p->value.numel() * 4;
    }
    manifest["params"] = std::move(params);
    manifest["total_bytes"] = offset;

    {
        std::ofstream f(fs::path(dir) / "manifest.json", std::ios::trunc);
        if (!f) throw Error("save_checkpoint: cannot write manifest in " + dir);
        f << manifest.dump(2) << "\n";
    }
    {
        std::ofstream f(fs::path(dir) / "params.bin", std::ios::binary | std::ios::trunc);
        if (!f) throw Error("save_checkpoint: cannot write params.bin in " + dir);
        f.write(reinterpret_cast<const char*>(blob.data()), (std::streamsize)(blob.size() * 4));
    }
    {
        json v;
        for (const auto& [word, id] : model.vocab.word_to_id) v[word] = id;
        std::ofstream f(fs::path(dir) / "vocab.json", std::ios::trunc);
        f << v.dump(2) << "\n";
    }
    if (model.has_buckets) save_buckets(model.buckets, (fs::path(dir) / "buckets.json").string());
    {
        ModelConfig mc = model.cfg;
        mc.latent_scale = model.ae.latent_scale;
        json j;
        j["model"] = model_config_to_json(mc);
        j["train"] = train_config_to_json(train_cfg);
        std::ofstream f(fs::path(dir) / "config.json", std::ios::trunc);
        f << j.dump(2) << "\n";
    }
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    std::ifstream cf(fs::path(dir) / "config.json");
    if (!cf) throw Error("load_checkpoint: missing config.json in " + dir);
    json jc;
    cf >> jc;
    const ModelConfig mc = model_config_from_json(jc.at("model"));
    const TrainConfig tc = train_config_from_json(jc.at("train"));

    std::ifstream vf(fs::path(dir) / "vocab.json");
    if (!vf) throw Error("load_checkpoint: missing vocab.json in " + dir);
    json jv;
    vf >> jv;
    Vocabulary vocab;
    for (auto it = jv.begin(); it != jv.end(); ++it) vocab.word_to_id[it.key()] = it.value();

    LoadedCheckpoint out;
    out.train_cfg = tc;
    out.model = std::make_unique<Model>(mc, vocab);
    out.model->ae.latent_scale = mc.latent_scale;

    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw Error("load_checkpoint: missing manifest.json in " + dir);
    json jm;
    mf >> jm;
    std::ifstream pf(fs::path(dir) / "params.bin", std::ios::binary);
    if (!pf) throw Error("load_checkpoint: missing params.bin in " + dir);
    std::vector<char> bytes((std::istreambuf_iterator<char>(pf)),
                            std::istreambuf_iterator<char>());
    if ((int64_t)bytes.size() != jm.at("total_bytes").get<int64_t>())
        throw Error("load_checkpoint: params.bin length does not match manifest");

    const auto& params = jm.at("params");
    if (params.size() != out.model->reg.all().size())
        throw Error("load_checkpoint: parameter count mismatch");
    size_t i = 0;
    for (const auto& up : out.model->reg.all()) {
        const json& jp = params[i++];
        if (jp.at("name").get<std::string>() != up->name)
            throw Error("load_checkpoint: parameter order mismatch at " + up->name);
        const Shape shape = jp.at("shape").get<Shape>();
        if (!same_shape(shape, up->value.shape))
            throw Error("load_checkpoint: shape mismatch for " + up->name);
        const int64_t off = jp.at("offset").get<int64_t>();
        if (off + up->value.numel() * 4 > (int64_t)bytes.size())
            throw Error("load_checkpoint: blob overrun for " + up->name);
        const float* src = reinterpret_cast<const float*>(bytes.data() + off);
        for (int64_t k = 0; k < up->value.numel(); ++k) up->value.data[(size_t)k] = (double)src[k];
    }

    const fs::path bp = fs::path(dir) / "buckets.json";
    if (fs::exists(bp)) {
        out.model->buckets = load_buckets(bp.string());
        out.model->has_buckets = true;
    }
    return out;
}

}  // namespace animkit
