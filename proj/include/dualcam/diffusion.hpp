#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dualcam/tensor.hpp"

namespace dcam::diffusion {

// Denoising stages on the normalized time axis: early t > 0.9,
// mid 0.75 < t <= 0.9, late t <= 0.75.
enum class Stage { early, mid, late };

inline Stage stage_of(double t) {
    if (t > 0.9) return Stage::early;
    if (t > 0.75) return Stage::mid;
    return Stage::late;
}

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::early: return "early";
        case Stage::mid: return "mid";
        default: return "late";
    }
}

std::optional<Stage> stage_from_name(const std::string& name);

// Strictly decreasing timesteps in (0, 1] with per-step stage labels.
struct TimestepSchedule {
    std::vector<double> timesteps;
    std::vector<Stage> stages;

    int count(Stage s) const {
        int n = 0;
        for (Stage x : stages) n += (x == s);
        return n;
    }
};

// `base` timesteps spread evenly over the three stages (base/3 each,
// linearly spaced within the stage interval), plus `delta` extra steps
// interleaved into the chosen stage.
TimestepSchedule build_timestep_schedule(int base = 15, int delta = 0,
                                         std::optional<Stage> delta_stage = std::nullopt);

// Evenly spaced schedule 1.0 down to 1/steps.
TimestepSchedule uniform_schedule(int steps);

// Rectified-flow pair: z_t = (1-t) z0 + t eps, v = eps - z0.
struct FlowTargets {
    Tensor z_t;
    Tensor v;
};
FlowTargets flow_match_targets(const Tensor& z0, const Tensor& eps, double t);

double mse(const Tensor& a, const Tensor& b);

// L_RGB + lambda * L_D with per-branch mean squared error.
double loss_overall(const Tensor& pred_rgb, const Tensor& target_rgb, const Tensor& pred_depth,
                    const Tensor& target_depth, double lambda);

// Joint velocity field for both branches at time t.
using VelocityFn =
    std::function<std::pair<Tensor, Tensor>(const Tensor& z_rgb, const Tensor& z_depth, double t)>;

struct SampleResult {
    Tensor rgb, depth;
};

// Euler integration from the initial noise down to t = 0. The state starts
// at the schedule's first timestep; the last step integrates the remaining
// interval to zero.
SampleResult sample(const VelocityFn& velocity, const TimestepSchedule& schedule,
                    const Tensor& eps_rgb, const Tensor& eps_depth);

using VelocityFnSingle = std::function<Tensor(const Tensor& z, double t)>;
Tensor sample_single(const VelocityFnSingle& velocity, const TimestepSchedule& schedule,
                     const Tensor& eps);

}  // namespace dcam::diffusion
