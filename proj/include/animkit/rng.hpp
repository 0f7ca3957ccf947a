#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "animkit/tensor.hpp"

namespace animkit {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stable sub-seed derivation: independent streams per (label, index) so
// generation order never leaks into results.
inline uint64_t derive_seed(uint64_t base, std::string_view label, uint64_t index = 0) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) h = (h ^ static_cast<uint8_t>(c)) * 0x100000001b3ULL;
    return splitmix64(base ^ splitmix64(h ^ (0x9e3779b97f4a7c15ULL * (index + 1))));
}

// Deterministic random stream. mt19937_64 raw output is fully specified by
// the standard; doubles are built from the raw bits so no distribution
// implementation details leak in.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller (sine partner discarded)
    double normal() {
        double u1 = 1.0 - uniform();  // (0,1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    int64_t randint(int64_t n) {  // [0, n)
        return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
    }

    void fill_normal(Tensor& t) {
        for (auto& v : t.data) v = normal();
    }

    Tensor normal_tensor(Shape s) {
        Tensor t(std::move(s));
        fill_normal(t);
        return t;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace animkit
