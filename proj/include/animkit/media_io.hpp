#pragma once

#include <string>

#include "animkit/tensor.hpp"

namespace animkit {

// F ordered RGB frames, values in [0,1], layout [F,3,H,W].
struct VideoClip {
    Tensor frames;
    int fps = 8;

    int frame_count() const { return frames.ndim() == 4 ? frames.dim(0) : 0; }
    int height() const { return frames.dim(2); }
    int width() const { return frames.dim(3); }

    void validate() const;
};

// Single RGB image, values in [0,1], layout [3,H,W].
struct StillImage {
    Tensor pixels;

    int height() const { return pixels.dim(1); }
    int width() const { return pixels.dim(2); }

    void validate() const;
};

StillImage frame_of(const VideoClip& clip, int index);
VideoClip clip_from_frames(const std::vector<StillImage>& frames, int fps);

// Clip directory format: manifest.json {frames,height,width,fps} plus one
// lossless frame_%04d.png per frame.
VideoClip load_clip(const std::string& dir);
void save_clip(const VideoClip& clip, const std::string& dir);

StillImage load_image(const std::string& path);
void save_image(const StillImage& img, const std::string& path);

// Center-crop to the largest square, bilinear-resize to size x size, then take
// n_frames frames at uniform stride from frame 0 (stride = F / n_frames).
VideoClip preprocess_clip(const VideoClip& clip, int size, int n_frames);
StillImage preprocess_image(const StillImage& img, int size);

}  // namespace animkit
