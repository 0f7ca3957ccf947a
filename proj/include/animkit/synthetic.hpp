#pragma once

#include <string>
#include <vector>

#include "animkit/media_io.hpp"

namespace animkit {

enum class ShapeKind { Square, Circle, Triangle };
enum class MotionKind {
    MovesLeft,
    MovesRight,
    MovesUp,
    MovesDown,
    Rotates,
    Grows,
    Shrinks,
    StaysStill
};

constexpr int kMotionClassCount = 8;

const char* shape_name(ShapeKind s);
const char* color_name(int color);      // 6 named colors, index 0..5
const char* motion_phrase(MotionKind m);  // e.g. "moves left"
MotionKind motion_from_index(int i);

// speed unit depends on the motion: px/frame for translations, deg/frame for
// rotation, scale-fraction/frame for grow/shrink; 0 iff StaysStill.
struct MotionSpec {
    ShapeKind shape = ShapeKind::Square;
    int color = 0;
    MotionKind motion = MotionKind::StaysStill;
    double speed = 0.0;

    void validate(int canvas) const;
};

struct DatasetEntry {
    std::string clip_dir;  // relative to dataset root
    std::string prompt;
    MotionSpec spec;
    double speed = 0.0;
    // token-level ground truth, disjoint by construction
    std::vector<std::string> content_tokens;
    std::vector<std::string> motion_tokens;
};

struct DatasetManifest {
    std::vector<DatasetEntry> entries;
    uint64_t seed = 0;
    int frames = 8;
    int size = 32;
};

struct GeneratedClip {
    VideoClip clip;
    std::string prompt;
    std::vector<std::string> content_tokens;
    std::vector<std::string> motion_tokens;
};

// Renders an anti-aliased shape following the spec's trajectory. The start
// position is chosen so the whole trajectory stays on canvas; impossible
// trajectories raise "trajectory out of bounds".
GeneratedClip generate_clip(const MotionSpec& spec, int frames, int size, uint64_t seed);

struct DatasetConfig {
    int per_class = 25;
    int frames = 8;
    int size = 32;
    double speed_min = 0.0;
    double speed_max = 2.5;  // px/frame for translations; scaled per class
    uint64_t seed = 0;
    int fps = 8;
};

DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::string& out_dir);

DatasetManifest load_dataset_manifest(const std::string& dir);
void save_dataset_manifest(const DatasetManifest& m, const std::string& dir);

}  // namespace animkit
