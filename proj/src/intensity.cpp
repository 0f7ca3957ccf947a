#include "animkit/intensity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

using nlohmann::json;

namespace animkit {

void BucketTable::validate() const {
    if (boundaries.size() != 9) throw Error("BucketTable: expects 9 boundaries");
    for (size_t i = 1; i < boundaries.size(); ++i)
        if (!(boundaries[i] < boundaries[i - 1]))
            throw Error("BucketTable: boundaries must be strictly decreasing");
}

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
    std::vector<double> k(static_cast<size_t>(window));
    const int half = window / 2;
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = i - half;
        k[(size_t)i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[(size_t)i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

double signed_pow(double base, double expo) {
    if (expo == 1.0) return base;
    return base < 0.0 ? -std::pow(-base, expo) : std::pow(base, expo);
}

}  // namespace

double ssim(const Tensor& x, const Tensor& y, const SSIMParams& params) {
    if (x.ndim() != 2 || y.ndim() != 2) throw Error("ssim: expects [H,W] grayscale inputs");
    check_same_shape(x, y, "ssim");
    const int H = x.dim(0), W = x.dim(1);
    int win = params.window;
    if (std::min(H, W) < 32) win = std::min(win, 7);
    if (win % 2 == 0) throw Error("ssim: window must be odd");
    if (H < win || W < win) throw Error("ssim: image smaller than window");

    const auto k = gaussian_kernel(win, params.window_sigma);
    const int OH = H - win + 1, OW = W - win + 1;

    // separable Gaussian-weighted local means at valid positions
    auto blur = [&](const std::vector<double>& src) {
        std::vector<double> tmp((size_t)H * OW, 0.0);
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < OW; ++c) {
                double acc = 0.0;
                for (int i = 0; i < win; ++i) acc += k[(size_t)i] * src[(size_t)r * W + c + i];
                tmp[(size_t)r * OW + c] = acc;
            }
        std::vector<double> out((size_t)OH * OW, 0.0);
        for (int r = 0; r < OH; ++r)
            for (int c = 0; c < OW; ++c) {
                double acc = 0.0;
                for (int i = 0; i < win; ++i) acc += k[(size_t)i] * tmp[(size_t)(r + i) * OW + c];
                out[(size_t)r * OW + c] = acc;
            }
        return out;
    };
    const auto mu_x = blur(x.data);
    const auto mu_y = blur(y.data);

    double total = 0.0;
    for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox) {
            const double mx = mu_x[(size_t)oy * OW + ox], my = mu_y[(size_t)oy * OW + ox];
            // centered second moments; non-negative variances by construction
            double vx = 0.0, vy = 0.0, cxy = 0.0;
            for (int wy = 0; wy < win; ++wy)
                for (int wx = 0; wx < win; ++wx) {
                    const double wgt = k[(size_t)wy] * k[(size_t)wx];
                    const double dx = x.at2(oy + wy, ox + wx) - mx;
                    const double dy = y.at2(oy + wy, ox + wx) - my;
                    vx += wgt * dx * dx;
                    vy += wgt * dy * dy;
                    cxy += wgt * dx * dy;
                }
            const double sxsy = std::sqrt(vx * vy);
            const double l = (2.0 * mx * my + params.c1) / (mx * mx + my * my + params.c1);
            const double c = (2.0 * sxsy + params.c2) / (vx + vy + params.c2);
            const double s = (cxy + params.c3) / (sxsy + params.c3);
            total += signed_pow(l, params.alpha) * signed_pow(c, params.beta) *
                     signed_pow(s, params.gamma);
        }
    }
    return total / (double)((int64_t)OH * OW);
}

Tensor to_luma(const StillImage& img) {
    const int H = img.height(), W = img.width();
    Tensor out(Shape{H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            out.at2(y, x) = 0.299 * img.pixels.at3(0, y, x) + 0.587 * img.pixels.at3(1, y, x) +
                            0.114 * img.pixels.at3(2, y, x);
    return out;
}

MotionIntensity motion_intensity(const VideoClip& clip, const SSIMParams& params) {
    const int F = clip.frame_count();
    if (F < 2) throw Error("motion_intensity: need at least two frames");
    std::vector<Tensor> luma(static_cast<size_t>(F));
    for (int f = 0; f < F; ++f) luma[(size_t)f] = to_luma(frame_of(clip, f));
    double total = 0.0;
    for (int f = 0; f + 1 < F; ++f) total += ssim(luma[(size_t)f], luma[(size_t)f + 1], params);
    return MotionIntensity{total / (double)(F - 1)};
}

BucketTable fit_buckets(std::vector<double> intensities) {
    if (intensities.size() < 100)
        throw Error("fit_buckets: need at least 100 samples, got " +
                    std::to_string(intensities.size()));
    std::sort(intensities.begin(), intensities.end());
    const size_t n = intensities.size();
    BucketTable table;
    table.corpus_size = (int)n;
    table.boundaries.resize(9);
    // quantiles with linear interpolation, stored descending
    for (int q = 1; q <= 9; ++q) {
        const double h = (double)(n - 1) * (double)q / 10.0;
        const size_t lo = (size_t)h;
        const double frac = h - (double)lo;
        const double v = lo + 1 < n
                             ? intensities[lo] * (1.0 - frac) + intensities[lo + 1] * frac
                             : intensities[lo];
        table.boundaries[(size_t)(9 - q)] = v;
    }
    for (size_t i = 1; i < table.boundaries.size(); ++i)
        if (!(table.boundaries[i] < table.boundaries[i - 1]))
            throw Error("fit_buckets: degenerate distribution (non-decreasing deciles)");
    return table;
}

int intensity_to_level(const MotionIntensity& intensity, const BucketTable& table) {
    table.validate();
    int above = 0;
    for (double b : table.boundaries)
        if (b > intensity.value) ++above;
    return 1 + above;
}

Tensor level_to_map(int level, int height, int width) {
    if (level < 1 || level > 10) throw Error("level_to_map: level must be in [1,10]");
    return Tensor::full(Shape{1, height, width}, level / 10.0);
}

BucketTable load_buckets(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("load_buckets: cannot open " + path);
    json j;
    f >> j;
    BucketTable t;
    t.boundaries = j.at("boundaries").get<std::vector<double>>();
    t.corpus_size = j.at("corpus_size").get<int>();
    t.validate();
    return t;
}

void save_buckets(const BucketTable& table, const std::string& path) {
    table.validate();
    json j;
    j["boundaries"] = table.boundaries;
    j["corpus_size"] = table.corpus_size;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("save_buckets: cannot write " + path);
    f << j.dump(2) << "\n";
}

}  // namespace animkit
