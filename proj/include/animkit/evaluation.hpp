#pragma once

#include "animkit/conditioning.hpp"
#include "animkit/intensity.hpp"

namespace animkit {

// Mean cosine similarity of mean-pooled frozen patch tokens over adjacent
// frame pairs; in [-1,1], 1 for a static clip.
double frame_consistency(const VideoClip& clip, const PatchBackbone& backbone);

// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct ObedienceEntry {
    std::string id;
    double intensity = 1.0;
    int level = 1;
    int requested = 1;
    int abs_error = 0;
    double consistency = 1.0;
};

struct ObedienceReport {
    std::vector<ObedienceEntry> per_clip;
    double mean_abs_error = 0.0;
    double spearman = 0.0;
    double mean_consistency = 0.0;

    std::string to_json_text() const;
};

ObedienceReport intensity_obedience(const std::vector<std::pair<VideoClip, int>>& clips,
                                    const BucketTable& table, const PatchBackbone& backbone);

}  // namespace animkit
