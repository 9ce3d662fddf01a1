#pragma once

#include "dualcam/dataset.hpp"
#include "dualcam/diffusion.hpp"
#include "dualcam/dit.hpp"

namespace dcam::pipeline {

// Everything a sampling run conditions on. Token tensors are [L, C'];
// T2V mode uses all-zero condition tokens.
struct Conditions {
    TensorF cond_rgb_tokens, cond_depth_tokens;
    TensorF rays_grouped;  // [T', h, w, 6*f^2]
    int descriptor_id = 0;
    dit::TokenGrid grid;
};

Conditions conditions_from_clip(const data::Clip& clip, const data::Dataset& ds);

// Cond/ray/noise assembly and a dual forward at time t; returns per-branch
// velocity token matrices [L, C'] (depth empty for single-branch models).
std::pair<Tensor, Tensor> model_velocity(dit::DualDit& model, const Conditions& cond,
                                         const Tensor& z_rgb_tokens,
                                         const Tensor& z_depth_tokens, double t, bool gamma);

struct GeneratedLatents {
    codec::LatentTensor rgb, depth;  // depth empty for single-branch models
};

// Euler-samples both branches from seeded Gaussian noise (shared between
// branches) along the given schedule.
GeneratedLatents generate(dit::DualDit& model, const Conditions& cond,
                          const diffusion::TimestepSchedule& schedule, uint64_t seed,
                          bool gamma);

// Collapses a decoded depth3 video to T x 1 x H x W by channel mean.
Tensor collapse_depth(const codec::VideoTensor& depth3);

}  // namespace dcam::pipeline
