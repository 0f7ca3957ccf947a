#include <cmath>
#include <filesystem>
#include <fstream>

#include "animkit/intensity.hpp"
#include "animkit/synthetic.hpp"
#include "doctest.h"

using namespace animkit;
namespace fs = std::filesystem;

namespace {

// coverage-mass centroid of the object against the plain background
std::pair<double, double> centroid(const VideoClip& clip, int frame) {
    const int H = clip.height(), W = clip.width();
    double mx = 0.0, my = 0.0, mass = 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double d = 0.0;
            for (int c = 0; c < 3; ++c)
                d += std::fabs(clip.frames.at4(frame, c, y, x) - clip.frames.at4(frame, c, 0, 0));
            mx += d * (x + 0.5);
            my += d * (y + 0.5);
            mass += d;
        }
    return {mx / mass, my / mass};
}

}  // namespace

TEST_CASE("synthetic: zero speed renders pixel-identical frames") {
    MotionSpec spec;
    spec.motion = MotionKind::StaysStill;
    spec.shape = ShapeKind::Circle;
    spec.color = 2;
    GeneratedClip gen = generate_clip(spec, 6, 32, 1);
    const int64_t n = (int64_t)3 * 32 * 32;
    for (int f = 1; f < 6; ++f)
        for (int64_t i = 0; i < n; ++i)
            REQUIRE(gen.clip.frames.data[(size_t)(f * n + i)] ==
                    gen.clip.frames.data[(size_t)i]);
}

TEST_CASE("synthetic: moves_right speed 2 over 8 frames displaces 14 px") {
    MotionSpec spec;
    spec.motion = MotionKind::MovesRight;
    spec.shape = ShapeKind::Square;
    spec.color = 0;
    spec.speed = 2.0;
    GeneratedClip gen = generate_clip(spec, 8, 48, 3);
    const auto [x0, y0] = centroid(gen.clip, 0);
    const auto [x7, y7] = centroid(gen.clip, 7);
    CHECK(x7 - x0 == doctest::Approx(14.0).epsilon(0.02));
    CHECK(std::fabs(y7 - y0) < 0.1);
}

TEST_CASE("synthetic: per-frame centroid displacement matches speed within 0.5 px") {
    for (MotionKind m : {MotionKind::MovesLeft, MotionKind::MovesRight, MotionKind::MovesUp,
                         MotionKind::MovesDown}) {
        MotionSpec spec;
        spec.motion = m;
        spec.shape = ShapeKind::Triangle;
        spec.color = 4;
        spec.speed = 1.5;
        GeneratedClip gen = generate_clip(spec, 6, 48, 9);
        for (int f = 0; f + 1 < 6; ++f) {
            const auto [xa, ya] = centroid(gen.clip, f);
            const auto [xb, yb] = centroid(gen.clip, f + 1);
            const double d = std::sqrt((xb - xa) * (xb - xa) + (yb - ya) * (yb - ya));
            CHECK(std::fabs(d - 1.5) < 0.5);
        }
    }
}

TEST_CASE("synthetic: prompt template") {
    MotionSpec spec;
    spec.motion = MotionKind::MovesLeft;
    spec.shape = ShapeKind::Square;
    spec.color = 0;  // red
    spec.speed = 1.0;
    GeneratedClip gen = generate_clip(spec, 4, 32, 0);
    CHECK(gen.prompt == "the red square moves left");
    CHECK(gen.content_tokens == std::vector<std::string>{"red", "square"});
    CHECK(gen.motion_tokens == std::vector<std::string>{"moves", "left"});
}

TEST_CASE("synthetic: out-of-bounds trajectory rejected") {
    MotionSpec spec;
    spec.motion = MotionKind::MovesRight;
    spec.shape = ShapeKind::Square;
    spec.color = 1;
    spec.speed = 8.0;  // 56 px of travel cannot fit a 32 px canvas
    CHECK_THROWS_WITH_AS(generate_clip(spec, 8, 32, 0),
                         doctest::Contains("trajectory out of bounds"), Error);
}

TEST_CASE("synthetic: clip generation deterministic per seed") {
    MotionSpec spec;
    spec.motion = MotionKind::Rotates;
    spec.shape = ShapeKind::Triangle;
    spec.color = 5;
    spec.speed = 15.0;
    GeneratedClip a = generate_clip(spec, 5, 32, 77);
    GeneratedClip b = generate_clip(spec, 5, 32, 77);
    CHECK(max_abs_diff(a.clip.frames, b.clip.frames) == 0.0);
    GeneratedClip c = generate_clip(spec, 5, 32, 78);
    CHECK(max_abs_diff(a.clip.frames, c.clip.frames) > 0.0);
}

TEST_CASE("synthetic: dataset counts, determinism, token split") {
    const fs::path root = fs::temp_directory_path() / "animkit_tests" / "dataset";
    fs::remove_all(root);
    DatasetConfig cfg;
    cfg.per_class = 2;
    cfg.frames = 4;
    cfg.size = 32;
    cfg.seed = 5;
    DatasetManifest m = generate_dataset(cfg, (root / "a").string());
    CHECK(m.entries.size() == 16);  // 2 per class x 8 classes

    DatasetManifest m2 = generate_dataset(cfg, (root / "b").string());
    REQUIRE(m2.entries.size() == m.entries.size());
    for (size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(m.entries[i].prompt == m2.entries[i].prompt);
        CHECK(m.entries[i].speed == m2.entries[i].speed);
        VideoClip a = load_clip((root / "a" / m.entries[i].clip_dir).string());
        VideoClip b = load_clip((root / "b" / m2.entries[i].clip_dir).string());
        CHECK(max_abs_diff(a.frames, b.frames) == 0.0);
    }

    // motion tokens disjoint from content tokens, both present in the prompt
    for (const auto& e : m.entries) {
        for (const auto& mt : e.motion_tokens)
            for (const auto& ct : e.content_tokens) CHECK(mt != ct);
        for (const auto& tok : e.motion_tokens)
            CHECK(e.prompt.find(tok) != std::string::npos);
    }

    // manifest round trip
    DatasetManifest loaded = load_dataset_manifest((root / "a").string());
    REQUIRE(loaded.entries.size() == m.entries.size());
    CHECK(loaded.entries[3].prompt == m.entries[3].prompt);
    CHECK(loaded.entries[3].speed == doctest::Approx(m.entries[3].speed));
}

TEST_CASE("synthetic: degenerate speed range yields static clips") {
    const fs::path root = fs::temp_directory_path() / "animkit_tests" / "static_ds";
    fs::remove_all(root);
    DatasetConfig cfg;
    cfg.per_class = 1;
    cfg.frames = 4;
    cfg.size = 32;
    cfg.speed_min = 0.0;
    cfg.speed_max = 0.0;
    DatasetManifest m = generate_dataset(cfg, root.string());
    for (const auto& e : m.entries) {
        VideoClip clip = load_clip((root / e.clip_dir).string());
        CHECK(motion_intensity(clip).value == doctest::Approx(1.0));
    }
}

TEST_CASE("synthetic: stays_still requires zero speed") {
    MotionSpec spec;
    spec.motion = MotionKind::StaysStill;
    spec.speed = 1.0;
    CHECK_THROWS_AS(generate_clip(spec, 4, 32, 0), Error);
}
