#pragma once

#include <vector>

#include "animkit/media_io.hpp"

namespace animkit {

// Exponents and stabilizers of the three-factor structural similarity.
// Defaults: alpha=beta=gamma=1, C1=(0.01 L)^2, C2=(0.03 L)^2, C3=C2/2, L=1.
struct SSIMParams {
    double alpha = 1.0, beta = 1.0, gamma = 1.0;
    double c1 = 0.0001, c2 = 0.0009, c3 = 0.00045;
    int window = 11;       // odd Gaussian window, clipped to 7 when min dim < 32
    double window_sigma = 1.5;
};

struct MotionIntensity {
    double value = 1.0;  // mean adjacent-frame SSIM; 1 for a static clip
};

// 9 strictly decreasing decile boundaries over the corpus intensity
// distribution; level 1 = highest SSIM (least motion), level 10 = most motion.
struct BucketTable {
    std::vector<double> boundaries;  // size 9, strictly descending
    int corpus_size = 0;

    void validate() const;
};

// Mean over sliding Gaussian-weighted windows (valid positions only) of
// l^alpha * c^beta * s^gamma. Inputs are [H,W] grayscale in [0,1].
double ssim(const Tensor& x, const Tensor& y, const SSIMParams& params = {});

Tensor to_luma(const StillImage& img);  // ITU-R BT.601 weights

MotionIntensity motion_intensity(const VideoClip& clip, const SSIMParams& params = {});

BucketTable fit_buckets(std::vector<double> intensities);

int intensity_to_level(const MotionIntensity& intensity, const BucketTable& table);

Tensor level_to_map(int level, int height, int width);  // constant level/10 map

BucketTable load_buckets(const std::string& path);
void save_buckets(const BucketTable& table, const std::string& path);

}  // namespace animkit
