#include "animkit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

using nlohmann::json;

namespace animkit {

double frame_consistency(const VideoClip& clip, const PatchBackbone& backbone) {
    const int F = clip.frame_count();
    if (F < 2) throw Error("frame_consistency: need at least two frames");
    const int D = backbone.dim();
    std::vector<std::vector<double>> pooled((size_t)F, std::vector<double>((size_t)D, 0.0));
    for (int f = 0; f < F; ++f) {
        const Tensor tokens = backbone.extract(frame_of(clip, f));
        const int N = tokens.dim(0);
        for (int n = 0; n < N; ++n)
            for (int d = 0; d < D; ++d) pooled[(size_t)f][(size_t)d] += tokens.at2(n, d) / N;
    }
    double total = 0.0;
    for (int f = 0; f + 1 < F; ++f) {
        const auto &a = pooled[(size_t)f], &b = pooled[(size_t)f + 1];
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int d = 0; d < D; ++d) {
            dot += a[(size_t)d] * b[(size_t)d];
            na += a[(size_t)d] * a[(size_t)d];
            nb += b[(size_t)d] * b[(size_t)d];
        }
        const double denom = std::sqrt(na) * std::sqrt(nb);
        total += denom > 0.0 ? dot / denom : 1.0;
    }
    return total / (double)(F - 1);
}

namespace {

std::vector<double> ranks_of(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (double)(i + j) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw Error("spearman: need two equal-size lists");
    const auto ra = ranks_of(a), rb = ranks_of(b);
    const double n = (double)a.size();
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    const double denom = std::sqrt(va) * std::sqrt(vb);
    return denom > 0.0 ? cov / denom : 0.0;
}

ObedienceReport intensity_obedience(const std::vector<std::pair<VideoClip, int>>& clips,
                                    const BucketTable& table, const PatchBackbone& backbone) {
    table.validate();
    ObedienceReport report;
    std::vector<double> requested, measured;
    for (size_t i = 0; i < clips.size(); ++i) {
        const auto& [clip, req] = clips[i];
        ObedienceEntry e;
        e.id = "clip_" + std::to_string(i);
        e.intensity = motion_intensity(clip).value;
        e.level = intensity_to_level(MotionIntensity{e.intensity}, table);
        e.requested = req;
        e.abs_error = std::abs(e.level - req);
        e.consistency = frame_consistency(clip, backbone);
        report.mean_abs_error += e.abs_error;
        report.mean_consistency += e.consistency;
        requested.push_back((double)req);
        measured.push_back((double)e.level);
        report.per_clip.push_back(std::move(e));
    }
    if (!report.per_clip.empty()) {
        report.mean_abs_error /= (double)report.per_clip.size();
        report.mean_consistency /= (double)report.per_clip.size();
        report.spearman = clips.size() >= 2 ? spearman(requested, measured) : 0.0;
    }
    return report;
}

std::string ObedienceReport::to_json_text() const {
    json j;
    json per = json::array();
    for (const auto& e : per_clip) {
        per.push_back({{"id", e.id},
                       {"intensity", e.intensity},
                       {"level", e.level},
                       {"requested", e.requested},
                       {"abs_error", e.abs_error},
                       {"consistency", e.consistency}});
    }
    j["per_clip"] = std::move(per);
    j["aggregate"] = {{"mean_abs_error", mean_abs_error},
                      {"spearman", spearman},
                      {"mean_consistency", mean_consistency}};
    return j.dump(2) + "\n";
}

}  // namespace animkit
