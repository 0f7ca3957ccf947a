#include "animkit/schedule.hpp"

#include <cmath>

namespace animkit {

void NoiseSchedule::validate() const {
    if (timesteps < 2 || (int)alpha.size() != timesteps || (int)alpha_bar.size() != timesteps)
        throw Error("NoiseSchedule: inconsistent sizes");
    double prod = 1.0;
    for (int t = 0; t < timesteps; ++t) {
        prod *= alpha[(size_t)t];
        if (std::fabs(prod - alpha_bar[(size_t)t]) > 1e-12)
            throw Error("NoiseSchedule: alpha_bar is not the cumulative product");
        if (t > 0 && !(alpha_bar[(size_t)t] < alpha_bar[(size_t)t - 1]))
            throw Error("NoiseSchedule: alpha_bar must be strictly decreasing");
    }
}

double PriorBlendSchedule::coefficient(int frame, int frame_count) const {
    if (frame < 0 || frame >= frame_count) throw Error("prior blend: frame out of range");
    if (frame == 0) return alpha_first;
    if (frame == frame_count - 1) return alpha_last;
    const double t = (double)frame / (double)(frame_count - 1);
    return alpha_first + (alpha_last - alpha_first) * t;
}

NoiseSchedule make_schedule(int timesteps, double beta_start, double beta_end) {
    if (timesteps < 2) throw Error("make_schedule: timesteps must be >= 2");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw Error("make_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.timesteps = timesteps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.alpha.resize((size_t)timesteps);
    s.alpha_bar.resize((size_t)timesteps);
    double prod = 1.0;
    for (int t = 0; t < timesteps; ++t) {
        const double beta = beta_start + (beta_end - beta_start) * t / (double)(timesteps - 1);
        s.alpha[(size_t)t] = 1.0 - beta;
        prod *= s.alpha[(size_t)t];
        s.alpha_bar[(size_t)t] = prod;
    }
    return s;
}

namespace {

double abar_at(int t, const NoiseSchedule& sched) {
    if (t == -1) return 1.0;  // clean endpoint
    if (t < 0 || t >= sched.timesteps) throw Error("schedule: timestep out of range");
    return sched.alpha_bar[(size_t)t];
}

}  // namespace

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    check_same_shape(z0, eps, "q_sample");
    const double abar = abar_at(t, sched);
    const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
    Tensor out = z0;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * z0.data[i] + b * eps.data[i];
    return out;
}

double training_loss(const Tensor& eps_pred, const Tensor& eps) {
    check_same_shape(eps_pred, eps, "training_loss");
    double acc = 0.0;
    for (size_t i = 0; i < eps.data.size(); ++i) {
        const double d = eps_pred.data[i] - eps.data[i];
        acc += d * d;
    }
    return acc / (double)eps.numel();
}

Tensor ddim_step(const Tensor& z_t, const Tensor& eps_pred, int t, int t_prev,
                 const NoiseSchedule& sched) {
    check_same_shape(z_t, eps_pred, "ddim_step");
    if (t <= t_prev) throw Error("ddim_step: requires t > t_prev");
    const double abar_t = abar_at(t, sched);
    const double abar_p = abar_at(t_prev, sched);
    const double inv_sqrt = 1.0 / std::sqrt(abar_t);
    const double sig_t = std::sqrt(1.0 - abar_t);
    const double a = std::sqrt(abar_p), b = std::sqrt(1.0 - abar_p);
    Tensor out = z_t;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double z0_hat = (z_t.data[i] - sig_t * eps_pred.data[i]) * inv_sqrt;
        out.data[i] = a * z0_hat + b * eps_pred.data[i];
    }
    return out;
}

std::vector<int> ddim_timesteps(int steps, const NoiseSchedule& sched) {
    if (steps < 1 || steps > sched.timesteps) throw Error("ddim_timesteps: bad step count");
    std::vector<int> ts((size_t)steps);
    for (int k = 0; k < steps; ++k)
        ts[(size_t)k] = (int)(((int64_t)(steps - k) * sched.timesteps) / steps) - 1;
    return ts;  // descending, ts.front() = T-1, ts.back() >= 0
}

Tensor ddim_invert(const Tensor& z0, const DenoiserFn& model, int steps,
                   const NoiseSchedule& sched) {
    const std::vector<int> ts = ddim_timesteps(steps, sched);
    Tensor z = z0;
    // reversed transitions: clean -> ts[steps-1] -> ... -> ts[0]
    for (int k = steps - 1; k >= 0; --k) {
        const int t_src = k + 1 <= steps - 1 ? ts[(size_t)(k + 1)] : -1;
        const int t_dst = ts[(size_t)k];
        const Tensor eps = model(z, std::max(t_src, 0));
        check_same_shape(eps, z, "ddim_invert: model output");
        const double abar_src = t_src == -1 ? 1.0 : sched.alpha_bar[(size_t)t_src];
        const double abar_dst = sched.alpha_bar[(size_t)t_dst];
        const double a = std::sqrt(abar_dst), b = std::sqrt(1.0 - abar_dst);
        const double inv_sqrt = 1.0 / std::sqrt(abar_src);
        const double sig_src = std::sqrt(1.0 - abar_src);
        for (size_t i = 0; i < z.data.size(); ++i) {
            const double z0_hat = (z.data[i] - sig_src * eps.data[i]) * inv_sqrt;
            z.data[i] = a * z0_hat + b * eps.data[i];
        }
    }
    return z;
}

Tensor prior_blend(const Tensor& z_terminal, const Tensor& inv_r0, int frame, int frame_count,
                   const PriorBlendSchedule& sched) {
    check_same_shape(z_terminal, inv_r0, "prior_blend");
    const double a = sched.coefficient(frame, frame_count);
    Tensor out = z_terminal;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = z_terminal.data[i] + a * (inv_r0.data[i] - z_terminal.data[i]);
    return out;
}

}  // namespace animkit
