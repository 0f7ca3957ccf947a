#include "animkit/media_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "animkit/png_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace animkit {

void VideoClip::validate() const {
    if (frames.ndim() != 4 || frames.dim(1) != 3) throw Error("VideoClip: expects [F,3,H,W]");
    if (frames.dim(0) < 1) throw Error("VideoClip: needs at least one frame");
    if (fps <= 0) throw Error("VideoClip: fps must be positive");
    for (double v : frames.data)
        if (!(v >= 0.0 && v <= 1.0)) throw Error("VideoClip: value outside [0,1]");
}

void StillImage::validate() const {
    if (pixels.ndim() != 3 || pixels.dim(0) != 3) throw Error("StillImage: expects [3,H,W]");
    for (double v : pixels.data)
        if (!(v >= 0.0 && v <= 1.0)) throw Error("StillImage: value outside [0,1]");
}

StillImage frame_of(const VideoClip& clip, int index) {
    if (index < 0 || index >= clip.frame_count()) throw Error("frame_of: index out of range");
    const int H = clip.height(), W = clip.width();
    StillImage img;
    img.pixels = Tensor(Shape{3, H, W});
    const int64_t n = (int64_t)3 * H * W;
    std::copy_n(clip.frames.data.begin() + (int64_t)index * n, n, img.pixels.data.begin());
    return img;
}

VideoClip clip_from_frames(const std::vector<StillImage>& frames, int fps) {
    if (frames.empty()) throw Error("clip_from_frames: no frames");
    const int H = frames[0].height(), W = frames[0].width();
    VideoClip clip;
    clip.fps = fps;
    clip.frames = Tensor(Shape{(int)frames.size(), 3, H, W});
    const int64_t n = (int64_t)3 * H * W;
    for (size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].height() != H || frames[i].width() != W)
            throw Error("clip_from_frames: inconsistent frame sizes");
        std::copy_n(frames[i].pixels.data.begin(), n, clip.frames.data.begin() + (int64_t)i * n);
    }
    return clip;
}

namespace {

std::string frame_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04d.png", index);
    return buf;
}

RgbImage to_rgb8(const Tensor& chw) {
    const int H = chw.dim(1), W = chw.dim(2);
    RgbImage img;
    img.width = W;
    img.height = H;
    img.pixels.resize((size_t)H * W * 3);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double v = chw.at3(c, y, x);
                img.pixels[((size_t)y * W + x) * 3 + c] =
                    (uint8_t)std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
            }
    return img;
}

Tensor from_rgb8(const RgbImage& img) {
    Tensor t(Shape{3, img.height, img.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t.at3(c, y, x) = img.pixels[((size_t)y * img.width + x) * 3 + c] / 255.0;
    return t;
}

}  // namespace

VideoClip load_clip(const std::string& dir) {
    const fs::path root(dir);
    const fs::path manifest_path = root / "manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw Error("load_clip: missing manifest " + manifest_path.string());
    json m;
    try {
        mf >> m;
    } catch (const std::exception& e) {
        throw Error("load_clip: bad manifest " + manifest_path.string() + ": " + e.what());
    }
    const int F = m.at("frames").get<int>();
    const int H = m.at("height").get<int>();
    const int W = m.at("width").get<int>();
    const int fps = m.at("fps").get<int>();
    if (F < 1) throw Error("load_clip: manifest frame count < 1");

    VideoClip clip;
    clip.fps = fps;
    clip.frames = Tensor(Shape{F, 3, H, W});
    for (int i = 0; i < F; ++i) {
        const fs::path p = root / frame_name(i);
        if (!fs::exists(p)) throw Error("load_clip: missing frame " + std::to_string(i) + " (" +
                                        p.string() + ")");
        RgbImage img = read_png(p.string());
        if (img.width != W || img.height != H)
            throw Error("load_clip: inconsistent frame size in " + p.string());
        Tensor t = from_rgb8(img);
        std::copy_n(t.data.begin(), t.numel(), clip.frames.data.begin() + (int64_t)i * t.numel());
    }
    return clip;
}

void save_clip(const VideoClip& clip, const std::string& dir) {
    clip.validate();
    const fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw Error("save_clip: cannot create directory " + dir);

    json m;
    m["frames"] = clip.frame_count();
    m["height"] = clip.height();
    m["width"] = clip.width();
    m["fps"] = clip.fps;
    std::ofstream mf(root / "manifest.json", std::ios::trunc);
    if (!mf) throw Error("save_clip: cannot write manifest in " + dir);
    mf << m.dump(2) << "\n";

    for (int i = 0; i < clip.frame_count(); ++i) {
        StillImage frame = frame_of(clip, i);
        write_png((root / frame_name(i)).string(), to_rgb8(frame.pixels));
    }
}

StillImage load_image(const std::string& path) {
    StillImage img;
    img.pixels = from_rgb8(read_png(path));
    return img;
}

void save_image(const StillImage& img, const std::string& path) {
    write_png(path, to_rgb8(img.pixels));
}

namespace {

// Bilinear sample with half-pixel centers; identity when src and dst agree.
Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w) {
    const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    Tensor out(Shape{C, out_h, out_w});
    const double sy = (double)H / out_h, sx = (double)W / out_w;
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < out_h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            fy = std::clamp(fy, 0.0, (double)(H - 1));
            const int y0 = (int)fy, y1 = std::min(y0 + 1, H - 1);
            const double wy = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                fx = std::clamp(fx, 0.0, (double)(W - 1));
                const int x0 = (int)fx, x1 = std::min(x0 + 1, W - 1);
                const double wx = fx - x0;
                out.at3(c, y, x) = (1 - wy) * ((1 - wx) * chw.at3(c, y0, x0) + wx * chw.at3(c, y0, x1)) +
                                   wy * ((1 - wx) * chw.at3(c, y1, x0) + wx * chw.at3(c, y1, x1));
            }
        }
    return out;
}

Tensor center_crop_square(const Tensor& chw) {
    const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    const int side = std::min(H, W);
    const int oy = (H - side) / 2, ox = (W - side) / 2;
    Tensor out(Shape{C, side, side});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) out.at3(c, y, x) = chw.at3(c, oy + y, ox + x);
    return out;
}

Tensor clamp01(Tensor t) {
    for (auto& v : t.data) v = std::clamp(v, 0.0, 1.0);
    return t;
}

}  // namespace

VideoClip preprocess_clip(const VideoClip& clip, int size, int n_frames) {
    if (size < 8) throw Error("preprocess_clip: size must be >= 8");
    if (n_frames < 1) throw Error("preprocess_clip: n_frames must be >= 1");
    const int F = clip.frame_count();
    if (F < n_frames)
        throw Error("preprocess_clip: clip has " + std::to_string(F) + " frames, need " +
                    std::to_string(n_frames));
    const int stride = std::max(1, F / n_frames);
    VideoClip out;
    out.fps = clip.fps;
    out.frames = Tensor(Shape{n_frames, 3, size, size});
    const int64_t n = (int64_t)3 * size * size;
    for (int i = 0; i < n_frames; ++i) {
        StillImage f = frame_of(clip, i * stride);
        Tensor r = clamp01(resize_bilinear(center_crop_square(f.pixels), size, size));
        std::copy_n(r.data.begin(), n, out.frames.data.begin() + (int64_t)i * n);
    }
    return out;
}

StillImage preprocess_image(const StillImage& img, int size) {
    StillImage out;
    out.pixels = clamp01(resize_bilinear(center_crop_square(img.pixels), size, size));
    return out;
}

}  // namespace animkit
