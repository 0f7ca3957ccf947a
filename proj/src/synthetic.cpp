#include "animkit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "animkit/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace animkit {

const char* shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::Square: return "square";
        case ShapeKind::Circle: return "circle";
        case ShapeKind::Triangle: return "triangle";
    }
    return "?";
}

namespace {
const char* kColorNames[6] = {"red", "green", "blue", "yellow", "purple", "orange"};
const double kColorValues[6][3] = {
    {0.85, 0.10, 0.10}, {0.10, 0.75, 0.15}, {0.15, 0.25, 0.90},
    {0.95, 0.85, 0.10}, {0.60, 0.15, 0.80}, {0.95, 0.55, 0.10},
};
const double kBackground[3] = {0.16, 0.16, 0.18};
}  // namespace

const char* color_name(int color) {
    if (color < 0 || color > 5) throw Error("color index out of range");
    return kColorNames[color];
}

const char* motion_phrase(MotionKind m) {
    switch (m) {
        case MotionKind::MovesLeft: return "moves left";
        case MotionKind::MovesRight: return "moves right";
        case MotionKind::MovesUp: return "moves up";
        case MotionKind::MovesDown: return "moves down";
        case MotionKind::Rotates: return "rotates";
        case MotionKind::Grows: return "grows";
        case MotionKind::Shrinks: return "shrinks";
        case MotionKind::StaysStill: return "stays still";
    }
    return "?";
}

MotionKind motion_from_index(int i) {
    if (i < 0 || i >= kMotionClassCount) throw Error("motion index out of range");
    return static_cast<MotionKind>(i);
}

void MotionSpec::validate(int canvas) const {
    if (speed < 0.0) throw Error("MotionSpec: speed must be >= 0");
    if (motion == MotionKind::StaysStill && speed != 0.0)
        throw Error("MotionSpec: stays_still requires speed 0");
    const bool translational = motion == MotionKind::MovesLeft || motion == MotionKind::MovesRight ||
                               motion == MotionKind::MovesUp || motion == MotionKind::MovesDown;
    if (translational && speed > canvas / 4.0)
        throw Error("MotionSpec: speed exceeds canvas/4 per frame");
}

namespace {

struct Vec2 {
    double x = 0.0, y = 0.0;
};

double sd_square(Vec2 p, double r, double theta) {
    const double c = std::cos(-theta), s = std::sin(-theta);
    const double px = std::fabs(c * p.x - s * p.y) - r;
    const double py = std::fabs(s * p.x + c * p.y) - r;
    const double ox = std::max(px, 0.0), oy = std::max(py, 0.0);
    return std::sqrt(ox * ox + oy * oy) + std::min(std::max(px, py), 0.0);
}

double sd_circle(Vec2 p, double r) { return std::sqrt(p.x * p.x + p.y * p.y) - r; }

// equilateral triangle, r = circumradius, vertex up at theta = 0
double sd_triangle(Vec2 p, double r, double theta) {
    const double c = std::cos(-theta), s = std::sin(-theta);
    double px = c * p.x - s * p.y;
    double py = s * p.x + c * p.y;
    const double k = std::sqrt(3.0);
    const double half_side = r * k / 2.0;
    px = std::fabs(px) - half_side;
    py = py + half_side / k;
    if (px + k * py > 0.0) {
        const double nx = (px - k * py) / 2.0;
        const double ny = (-k * px - py) / 2.0;
        px = nx;
        py = ny;
    }
    px -= std::clamp(px, -2.0 * half_side, 0.0);
    return -std::sqrt(px * px + py * py) * (py < 0.0 ? -1.0 : 1.0);
}

struct FramePose {
    Vec2 center;
    double radius = 0.0;
    double theta = 0.0;
};

double half_extent(ShapeKind shape, double r, double theta) {
    switch (shape) {
        case ShapeKind::Square:
            return r * (std::fabs(std::cos(theta)) + std::fabs(std::sin(theta)));
        case ShapeKind::Circle:
            return r;
        case ShapeKind::Triangle:
            return r;  // circumradius bounds the rotated triangle
    }
    return r;
}

}  // namespace

GeneratedClip generate_clip(const MotionSpec& spec, int frames, int size, uint64_t seed) {
    if (frames < 2) throw Error("generate_clip: need at least 2 frames");
    if (size < 16) throw Error("generate_clip: size must be >= 16");
    spec.validate(size);

    RandomStream rs(derive_seed(seed, "render"));
    const double base_r = size * rs.uniform(0.14, 0.19);
    const double theta0 = spec.motion == MotionKind::Rotates ? rs.uniform(0.0, 2.0 * M_PI) : 0.0;

    // per-frame pose
    Vec2 velocity{0.0, 0.0};
    double omega = 0.0, grow = 0.0;
    switch (spec.motion) {
        case MotionKind::MovesLeft: velocity = {-spec.speed, 0.0}; break;
        case MotionKind::MovesRight: velocity = {spec.speed, 0.0}; break;
        case MotionKind::MovesUp: velocity = {0.0, -spec.speed}; break;
        case MotionKind::MovesDown: velocity = {0.0, spec.speed}; break;
        case MotionKind::Rotates: omega = spec.speed * M_PI / 180.0; break;
        case MotionKind::Grows: grow = spec.speed; break;
        case MotionKind::Shrinks: grow = -spec.speed; break;
        case MotionKind::StaysStill: break;
    }

    // start so the full trajectory is centered on the canvas
    const Vec2 start{size / 2.0 - velocity.x * (frames - 1) / 2.0,
                     size / 2.0 - velocity.y * (frames - 1) / 2.0};
    std::vector<FramePose> poses(static_cast<size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        FramePose& p = poses[(size_t)f];
        p.center = {start.x + velocity.x * f, start.y + velocity.y * f};
        p.theta = theta0 + omega * f;
        const double scale = 1.0 + grow * f;
        if (scale <= 0.05) throw Error("generate_clip: shrink collapses the object");
        p.radius = base_r * scale;
        const double ext = half_extent(spec.shape, p.radius, p.theta) + 0.5;
        if (p.center.x - ext < 0.0 || p.center.x + ext > size || p.center.y - ext < 0.0 ||
            p.center.y + ext > size)
            throw Error("generate_clip: trajectory out of bounds");
    }

    const double* obj = kColorValues[spec.color];
    VideoClip clip;
    clip.frames = Tensor(Shape{frames, 3, size, size});
    for (int f = 0; f < frames; ++f) {
        const FramePose& p = poses[(size_t)f];
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const Vec2 q{x + 0.5 - p.center.x, y + 0.5 - p.center.y};
                double d = 0.0;
                switch (spec.shape) {
                    case ShapeKind::Square: d = sd_square(q, p.radius, p.theta); break;
                    case ShapeKind::Circle: d = sd_circle(q, p.radius); break;
                    case ShapeKind::Triangle: d = sd_triangle(q, p.radius, p.theta); break;
                }
                const double cov = std::clamp(0.5 - d, 0.0, 1.0);
                for (int c = 0; c < 3; ++c)
                    clip.frames.at4(f, c, y, x) =
                        kBackground[c] + cov * (obj[c] - kBackground[c]);
            }
    }

    GeneratedClip out;
    out.clip = std::move(clip);
    out.prompt = std::string("the ") + color_name(spec.color) + " " + shape_name(spec.shape) +
                 " " + motion_phrase(spec.motion);
    out.content_tokens = {color_name(spec.color), shape_name(spec.shape)};
    {
        std::string phrase = motion_phrase(spec.motion);
        size_t sp = phrase.find(' ');
        if (sp == std::string::npos) {
            out.motion_tokens = {phrase};
        } else {
            out.motion_tokens = {phrase.substr(0, sp), phrase.substr(sp + 1)};
        }
    }
    return out;
}

namespace {

constexpr double kRotateDegPerUnit = 12.0;   // deg/frame per sampled speed unit
constexpr double kGrowFracPerUnit = 0.024;   // scale-fraction/frame per unit

std::string clip_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clips/clip_%05d", index);
    return buf;
}

}  // namespace

DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
    if (cfg.per_class < 1) throw Error("generate_dataset: need at least 1 clip per class");
    if (cfg.speed_max < cfg.speed_min || cfg.speed_min < 0.0)
        throw Error("generate_dataset: bad speed range");

    DatasetManifest m;
    m.seed = cfg.seed;
    m.frames = cfg.frames;
    m.size = cfg.size;

    for (int cls = 0; cls < kMotionClassCount; ++cls) {
        for (int j = 0; j < cfg.per_class; ++j) {
            const int index = cls * cfg.per_class + j;
            const uint64_t sub = derive_seed(cfg.seed, "clip", (uint64_t)index);
            RandomStream rs(derive_seed(sub, "spec"));

            MotionSpec spec;
            spec.motion = motion_from_index(cls);
            spec.color = (int)rs.randint(6);
            // a rotating circle renders as static; keep rotation on polygons
            spec.shape = spec.motion == MotionKind::Rotates
                             ? (rs.randint(2) == 0 ? ShapeKind::Square : ShapeKind::Triangle)
                             : static_cast<ShapeKind>(rs.randint(3));
            const double unit = spec.motion == MotionKind::StaysStill
                                    ? 0.0
                                    : rs.uniform(cfg.speed_min, cfg.speed_max);
            switch (spec.motion) {
                case MotionKind::Rotates: spec.speed = unit * kRotateDegPerUnit; break;
                case MotionKind::Grows:
                case MotionKind::Shrinks: spec.speed = unit * kGrowFracPerUnit; break;
                default: spec.speed = unit; break;
            }

            GeneratedClip gen = generate_clip(spec, cfg.frames, cfg.size, sub);
            gen.clip.fps = cfg.fps;

            DatasetEntry e;
            e.clip_dir = clip_dir_name(index);
            e.spec = spec;
            e.speed = spec.speed;
            e.prompt = gen.prompt;
            e.content_tokens = gen.content_tokens;
            e.motion_tokens = gen.motion_tokens;
            // speed adverb by tercile of the sampled range
            if (spec.motion != MotionKind::StaysStill && cfg.speed_max > cfg.speed_min) {
                const double t = (unit - cfg.speed_min) / (cfg.speed_max - cfg.speed_min);
                if (t < 1.0 / 3.0) {
                    e.prompt += " slowly";
                    e.motion_tokens.push_back("slowly");
                } else if (t > 2.0 / 3.0) {
                    e.prompt += " quickly";
                    e.motion_tokens.push_back("quickly");
                }
            }
            save_clip(gen.clip, (fs::path(out_dir) / e.clip_dir).string());
            m.entries.push_back(std::move(e));
        }
    }
    save_dataset_manifest(m, out_dir);
    return m;
}

void save_dataset_manifest(const DatasetManifest& m, const std::string& dir) {
    json j;
    j["seed"] = m.seed;
    j["frames"] = m.frames;
    j["size"] = m.size;
    json entries = json::array();
    for (const auto& e : m.entries) {
        json je;
        je["clip"] = e.clip_dir;
        je["prompt"] = e.prompt;
        je["shape"] = shape_name(e.spec.shape);
        je["color"] = color_name(e.spec.color);
        je["motion"] = (int)e.spec.motion;
        je["speed"] = e.speed;
        je["content_tokens"] = e.content_tokens;
        je["motion_tokens"] = e.motion_tokens;
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    std::ofstream f(fs::path(dir) / "dataset_manifest.json", std::ios::trunc);
    if (!f) throw Error("save_dataset_manifest: cannot write in " + dir);
    f << j.dump(2) << "\n";
}

DatasetManifest load_dataset_manifest(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "dataset_manifest.json");
    if (!f) throw Error("load_dataset_manifest: missing dataset_manifest.json in " + dir);
    json j;
    f >> j;
    DatasetManifest m;
    m.seed = j.at("seed").get<uint64_t>();
    m.frames = j.at("frames").get<int>();
    m.size = j.at("size").get<int>();
    for (const auto& je : j.at("entries")) {
        DatasetEntry e;
        e.clip_dir = je.at("clip").get<std::string>();
        e.prompt = je.at("prompt").get<std::string>();
        const std::string shape = je.at("shape").get<std::string>();
        e.spec.shape = shape == "square" ? ShapeKind::Square
                       : shape == "circle" ? ShapeKind::Circle
                                           : ShapeKind::Triangle;
        const std::string color = je.at("color").get<std::string>();
        for (int c = 0; c < 6; ++c)
            if (color == kColorNames[c]) e.spec.color = c;
        e.spec.motion = motion_from_index(je.at("motion").get<int>());
        e.speed = je.at("speed").get<double>();
        e.spec.speed = e.speed;
        e.content_tokens = je.at("content_tokens").get<std::vector<std::string>>();
        e.motion_tokens = je.at("motion_tokens").get<std::vector<std::string>>();
        m.entries.push_back(std::move(e));
    }
    return m;
}

}  // namespace animkit
