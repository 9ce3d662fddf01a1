#include "dualcam/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "dualcam/errors.hpp"

namespace dcam::diffusion {

std::optional<Stage> stage_from_name(const std::string& name) {
    if (name == "early") return Stage::early;
    if (name == "mid") return Stage::mid;
    if (name == "late") return Stage::late;
    if (name == "none") return std::nullopt;
    throw ConfigError("unknown stage: " + name);
}

// k points in the half-open interval (lo, hi], starting at hi.
static void linspace_stage(std::vector<double>& out, double lo, double hi, int k) {
    for (int i = 0; i < k; ++i) out.push_back(hi - (hi - lo) * i / k);
}

TimestepSchedule build_timestep_schedule(int base, int delta,
                                         std::optional<Stage> delta_stage) {
    if (base < 3 || base % 3 != 0) throw ConfigError("base step count must be divisible by 3");
    if (delta < 0) throw ConfigError("delta must be non-negative");
    if (delta > 0 && !delta_stage)
        throw ConfigError("delta steps require a stage to place them in");

    const int per = base / 3;
    auto stage_count = [&](Stage s) {
        return per + ((delta_stage && *delta_stage == s) ? delta : 0);
    };

    std::vector<double> t;
    linspace_stage(t, 0.9, 1.0, stage_count(Stage::early));
    linspace_stage(t, 0.75, 0.9, stage_count(Stage::mid));
    linspace_stage(t, 0.0, 0.75, stage_count(Stage::late));

    std::sort(t.begin(), t.end(), std::greater<double>());
    // Break exact ties by a minimal perturbation, then restore order.
    for (size_t i = 1; i < t.size(); ++i)
        if (t[i] >= t[i - 1]) t[i] = t[i - 1] - 1e-9;

    TimestepSchedule sched;
    sched.timesteps = t;
    for (double x : t) sched.stages.push_back(stage_of(x));
    return sched;
}

TimestepSchedule uniform_schedule(int steps) {
    if (steps < 1) throw ConfigError("step count must be positive");
    TimestepSchedule sched;
    for (int i = 0; i < steps; ++i) {
        double t = 1.0 - static_cast<double>(i) / steps;
        sched.timesteps.push_back(t);
        sched.stages.push_back(stage_of(t));
    }
    return sched;
}

FlowTargets flow_match_targets(const Tensor& z0, const Tensor& eps, double t) {
    if (!z0.same_shape(eps)) throw ShapeError("flow targets: shape mismatch");
    if (t < 0.0 || t > 1.0) throw ValueError("t must lie in [0, 1]");
    FlowTargets out;
    out.z_t = Tensor(z0.shape);
    out.v = Tensor(z0.shape);
    for (long i = 0; i < z0.size(); ++i) {
        out.z_t[i] = (1.0 - t) * z0[i] + t * eps[i];
        out.v[i] = eps[i] - z0[i];
    }
    return out;
}

double mse(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("mse: shape mismatch");
    double acc = 0;
    for (long i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / a.size();
}

double loss_overall(const Tensor& pred_rgb, const Tensor& target_rgb, const Tensor& pred_depth,
                    const Tensor& target_depth, double lambda) {
    if (lambda < 0) throw ValueError("lambda must be non-negative");
    return mse(pred_rgb, target_rgb) + lambda * mse(pred_depth, target_depth);
}

static void euler_step(Tensor& z, const Tensor& v, double dt, int step) {
    if (!z.same_shape(v)) throw ShapeError("sampler: velocity shape mismatch");
    for (long i = 0; i < z.size(); ++i) {
        z[i] -= dt * v[i];
        if (!std::isfinite(z[i]))
            throw ValueError("non-finite latent at sampling step " + std::to_string(step));
    }
}

SampleResult sample(const VelocityFn& velocity, const TimestepSchedule& schedule,
                    const Tensor& eps_rgb, const Tensor& eps_depth) {
    if (schedule.timesteps.empty()) throw ConfigError("empty timestep schedule");
    SampleResult out{eps_rgb, eps_depth};
    const auto& ts = schedule.timesteps;
    for (size_t k = 0; k < ts.size(); ++k) {
        double t = ts[k];
        double t_next = (k + 1 < ts.size()) ? ts[k + 1] : 0.0;
        auto [v_rgb, v_depth] = velocity(out.rgb, out.depth, t);
        euler_step(out.rgb, v_rgb, t - t_next, static_cast<int>(k));
        euler_step(out.depth, v_depth, t - t_next, static_cast<int>(k));
    }
    return out;
}

Tensor sample_single(const VelocityFnSingle& velocity, const TimestepSchedule& schedule,
                     const Tensor& eps) {
    if (schedule.timesteps.empty()) throw ConfigError("empty timestep schedule");
    Tensor z = eps;
    const auto& ts = schedule.timesteps;
    for (size_t k = 0; k < ts.size(); ++k) {
        double t = ts[k];
        double t_next = (k + 1 < ts.size()) ? ts[k + 1] : 0.0;
        Tensor v = velocity(z, t);
        euler_step(z, v, t - t_next, static_cast<int>(k));
    }
    return z;
}

}  // namespace dcam::diffusion
