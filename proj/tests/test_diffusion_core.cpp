#include <cmath>

#include "animkit/rng.hpp"
#include "animkit/schedule.hpp"
#include "doctest.h"

using namespace animkit;

namespace {

Tensor randn(Shape s, uint64_t seed) {
    RandomStream rs(seed);
    Tensor t(std::move(s));
    rs.fill_normal(t);
    return t;
}

}  // namespace

TEST_CASE("schedule: two-step arithmetic") {
    NoiseSchedule s = make_schedule(2, 0.1, 0.2);
    CHECK(s.alpha[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(s.alpha_bar[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar[1] == doctest::Approx(0.72).epsilon(1e-15));
    s.validate();
}

TEST_CASE("schedule: alpha_bar matches a brute-force product and is monotone") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    double prod = 1.0;
    for (int t = 0; t < 1000; ++t) {
        const double beta = 1e-4 + (0.02 - 1e-4) * t / 999.0;
        prod *= 1.0 - beta;
        CHECK(s.alpha_bar[(size_t)t] == doctest::Approx(prod).epsilon(1e-12));
        if (t > 0) CHECK(s.alpha_bar[(size_t)t] < s.alpha_bar[(size_t)t - 1]);
    }
    CHECK(s.alpha_bar.back() == doctest::Approx(4.0e-5).epsilon(0.02));
}

TEST_CASE("schedule: invalid ranges rejected") {
    CHECK_THROWS_AS(make_schedule(1, 0.1, 0.2), Error);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.2), Error);
    CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), Error);
    CHECK_THROWS_AS(make_schedule(10, 0.3, 1.0), Error);
}

TEST_CASE("q_sample: endpoints") {
    NoiseSchedule s = make_schedule(10, 1e-3, 0.4);
    const Tensor z0 = randn({2, 4, 3, 3}, 1), eps = randn({2, 4, 3, 3}, 2);
    // clean endpoint (alpha_bar = 1)
    Tensor out = q_sample(z0, -1, eps, s);
    CHECK(max_abs_diff(out, z0) == 0.0);
    // near-pure-noise endpoint
    NoiseSchedule deep = make_schedule(400, 0.02, 0.05);
    Tensor noisy = q_sample(z0, 399, eps, deep);
    CHECK(deep.alpha_bar.back() < 1e-6);
    CHECK(max_abs_diff(noisy, eps) < 2e-3);
}

TEST_CASE("q_sample: shape mismatch rejected") {
    NoiseSchedule s = make_schedule(10, 1e-3, 0.4);
    CHECK_THROWS_AS(q_sample(randn({2, 2}, 3), 5, randn({2, 3}, 4), s), Error);
}

TEST_CASE("q_sample: Monte-Carlo mean and variance") {
    NoiseSchedule s = make_schedule(100, 1e-3, 0.2);
    const int t = 60;
    const double abar = s.alpha_bar[(size_t)t];
    const Tensor z0 = randn({4, 4}, 5);
    const int n = 10000;
    Tensor mean(Shape{4, 4}), m2(Shape{4, 4});
    RandomStream rs(6);
    for (int i = 0; i < n; ++i) {
        Tensor eps(Shape{4, 4});
        rs.fill_normal(eps);
        Tensor zt = q_sample(z0, t, eps, s);
        for (int k = 0; k < 16; ++k) {
            mean[k] += zt[k];
            m2[k] += zt[k] * zt[k];
        }
    }
    const double se_mean = std::sqrt((1.0 - abar) / n);
    const double se_var = (1.0 - abar) * std::sqrt(2.0 / (n - 1));
    for (int k = 0; k < 16; ++k) {
        const double mu = mean[k] / n;
        const double var = m2[k] / n - mu * mu;
        CHECK(std::fabs(mu - std::sqrt(abar) * z0[k]) < 4.0 * se_mean);
        CHECK(std::fabs(var - (1.0 - abar)) < 4.0 * se_var);
    }
}

TEST_CASE("training_loss: contract and direct-sum oracle") {
    const Tensor a = randn({3, 5}, 7);
    CHECK(training_loss(a, a) == 0.0);
    Tensor b = a;
    for (auto& v : b.data) v += 1.0;
    CHECK(training_loss(b, a) == doctest::Approx(1.0).epsilon(1e-15));
    const Tensor c = randn({3, 5}, 8);
    double acc = 0.0;
    for (int k = 0; k < 15; ++k) acc += (a[k] - c[k]) * (a[k] - c[k]);
    CHECK(training_loss(a, c) == doctest::Approx(acc / 15.0).epsilon(1e-15));
    CHECK_THROWS_AS(training_loss(a, randn({5, 3}, 9)), Error);
}

TEST_CASE("ddim_step: algebraic inverse recovers z0 exactly") {
    NoiseSchedule s = make_schedule(50, 1e-3, 0.3);
    const Tensor z0 = randn({1, 4, 4, 4}, 10), eps = randn({1, 4, 4, 4}, 11);
    const int t = 37;
    Tensor zt = q_sample(z0, t, eps, s);
    Tensor rec = ddim_step(zt, eps, t, -1, s);  // straight to the clean endpoint
    CHECK(max_abs_diff(rec, z0) <= 1e-10);
}

TEST_CASE("ddim_step: chain with a constant-eps oracle returns to z0") {
    NoiseSchedule s = make_schedule(100, 1e-3, 0.2);
    const Tensor z0 = randn({2, 4}, 12), eps = randn({2, 4}, 13);
    Tensor z = q_sample(z0, 99, eps, s);
    const std::vector<int> ts = ddim_timesteps(10, s);
    for (size_t k = 0; k < ts.size(); ++k) {
        const int t = ts[k];
        const int t_prev = k + 1 < ts.size() ? ts[k + 1] : -1;
        z = ddim_step(z, eps, t, t_prev, s);
    }
    CHECK(max_abs_diff(z, z0) <= 1e-6);
}

TEST_CASE("ddim_step: ordering contract") {
    NoiseSchedule s = make_schedule(10, 1e-3, 0.3);
    const Tensor z = randn({4}, 14);
    CHECK_THROWS_AS(ddim_step(z, z, 3, 5, s), Error);
    CHECK_THROWS_AS(ddim_step(z, z, 3, 3, s), Error);
}

TEST_CASE("ddim_invert: single step matches the reversed update") {
    NoiseSchedule s = make_schedule(20, 1e-3, 0.3);
    const Tensor z0 = randn({4, 4}, 15), e = randn({4, 4}, 16);
    DenoiserFn model = [&](const Tensor&, int) { return e; };
    Tensor inv = ddim_invert(z0, model, 1, s);
    // steps=1: z_T = sqrt(abar_T) z0 + sqrt(1-abar_T) e
    const double abar = s.alpha_bar.back();
    for (int k = 0; k < 16; ++k)
        CHECK(inv[k] ==
              doctest::Approx(std::sqrt(abar) * z0[k] + std::sqrt(1 - abar) * e[k]).epsilon(1e-12));
}

TEST_CASE("ddim_invert: deterministic and inverse of sampling under a frozen model") {
    NoiseSchedule s = make_schedule(40, 1e-3, 0.25);
    const Tensor z0 = randn({2, 3}, 17), e = randn({2, 3}, 18);
    DenoiserFn model = [&](const Tensor&, int) { return e; };
    Tensor a = ddim_invert(z0, model, 8, s);
    Tensor b = ddim_invert(z0, model, 8, s);
    CHECK(max_abs_diff(a, b) == 0.0);
    // sampling back down with the same eps recovers z0
    Tensor z = a;
    const std::vector<int> ts = ddim_timesteps(8, s);
    for (size_t k = 0; k < ts.size(); ++k)
        z = ddim_step(z, e, ts[k], k + 1 < ts.size() ? ts[k + 1] : -1, s);
    CHECK(max_abs_diff(z, z0) <= 1e-9);
}

TEST_CASE("prior_blend: endpoints exact, fixed point, strictly decreasing") {
    PriorBlendSchedule p;
    CHECK(p.coefficient(0, 8) == 0.033);
    CHECK(p.coefficient(7, 8) == 0.016);
    for (int f = 1; f < 8; ++f) CHECK(p.coefficient(f, 8) < p.coefficient(f - 1, 8));

    const Tensor z = randn({4, 3, 3}, 19), inv = randn({4, 3, 3}, 20);
    Tensor out = prior_blend(z, inv, 0, 8, p);
    for (int64_t k = 0; k < z.numel(); ++k)
        CHECK(out[k] == doctest::Approx(z[k] + 0.033 * (inv[k] - z[k])).epsilon(1e-15));
    // identity when the inversion equals the terminal noise
    Tensor same = prior_blend(z, z, 3, 8, p);
    CHECK(max_abs_diff(same, z) == 0.0);
    CHECK_THROWS_AS(prior_blend(z, randn({4, 3, 2}, 21), 0, 8, p), Error);
}
