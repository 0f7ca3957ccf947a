#pragma once

#include <functional>
#include <vector>

#include "animkit/tensor.hpp"

namespace animkit {

struct NoiseSchedule {
    int timesteps = 0;
    double beta_start = 0.0, beta_end = 0.0;
    std::vector<double> alpha;      // 1 - beta_t
    std::vector<double> alpha_bar;  // cumulative products

    void validate() const;
};

// Eq.-style per-frame blend coefficients, linearly interpolated and strictly
// decreasing from the first frame to the last.
struct PriorBlendSchedule {
    double alpha_first = 0.033;
    double alpha_last = 0.016;

    double coefficient(int frame, int frame_count) const;
};

NoiseSchedule make_schedule(int timesteps, double beta_start, double beta_end);

// z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps, with eps ~ N(0, I)
Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

double training_loss(const Tensor& eps_pred, const Tensor& eps);

// Deterministic (eta = 0) update from step t to t_prev; t_prev = -1 means the
// clean endpoint (alpha_bar = 1).
Tensor ddim_step(const Tensor& z_t, const Tensor& eps_pred, int t, int t_prev,
                 const NoiseSchedule& sched);

// Uniformly spaced descending timestep grid for `steps` sampler iterations.
std::vector<int> ddim_timesteps(int steps, const NoiseSchedule& sched);

using DenoiserFn = std::function<Tensor(const Tensor& z, int t)>;

// Runs the DDIM update in reverse time order, mapping a clean latent to its
// terminal-step latent. The model is evaluated at the source step of each
// reversed transition (step 0 for the clean start).
Tensor ddim_invert(const Tensor& z0, const DenoiserFn& model, int steps,
                   const NoiseSchedule& sched);

// alpha^n * inv_r0 + (1 - alpha^n) * z_T for frame n of frame_count
Tensor prior_blend(const Tensor& z_terminal, const Tensor& inv_r0, int frame, int frame_count,
                   const PriorBlendSchedule& sched);

}  // namespace animkit
