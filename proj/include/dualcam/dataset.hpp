#pragma once

#include <string>
#include <vector>

#include "dualcam/camera.hpp"
#include "dualcam/codec.hpp"
#include "dualcam/scene.hpp"

namespace dcam::data {

// One training clip with everything the trainer consumes precomputed:
// latent targets, frame-0 conditions, and pre-grouped ray inputs.
struct Clip {
    std::string id;
    geom::CameraTrajectory traj;
    scene::SceneSpec scene;
    int descriptor_id = 0;
    codec::VideoTensor rgb;  // loaded frames
    Tensor depth_raw;        // T x 1 x H x W

    codec::LatentTensor z_rgb, z_depth;         // encode targets
    codec::LatentTensor cond_rgb, cond_depth;   // zero-padded frame-0 latents
    TensorF rays_grouped;                       // [T', h, w, 6*f^2], channel-last
    TensorF z_rgb_tokens, z_depth_tokens;       // [L, C'] views of the targets
    TensorF cond_rgb_tokens, cond_depth_tokens; // [L, C']
};

struct Dataset {
    int frames = 0, height = 0, width = 0;
    std::vector<Clip> clips;

    long latent_frames() const { return codec::latent_frames(frames); }
    long grid_h() const { return height / codec::kSpatialFactor; }
    long grid_w() const { return width / codec::kSpatialFactor; }
};

// Latent [T',C',h,w] to channel-last tokens [L, C'] and back.
TensorF to_tokens(const codec::LatentTensor& z);
codec::LatentTensor from_tokens(const Tensor& tokens, long t, long h, long w);

// Rays for a trajectory, rearranged 8x and pre-grouped temporally:
// [T', h, w, 6*64] channel-last. The channel projection stays in-graph.
TensorF grouped_rays(const geom::CameraTrajectory& traj, int H, int W);

// Derives all per-clip tensors from loaded frames.
void prepare_clip(Clip& clip, const codec::Codec& codec, int H, int W);

Dataset load_dataset(const std::string& root, const codec::Codec& codec);

}  // namespace dcam::data
