#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dualcam/dataset.hpp"
#include "dualcam/diffusion.hpp"
#include "dualcam/dit.hpp"
#include "dualcam/pipeline.hpp"

namespace dcam::analysis {

// Linear CKA between two feature matrices with equal row counts:
// columns are mean-centered, CKA = |Y'X|_F^2 / (|X'X|_F |Y'Y|_F).
// Degenerate (all-zero) inputs give 0.
double linear_cka(const Tensor& x, const Tensor& y);

// Per-layer branch activations and probe targets for one clip at one
// timestep; every matrix has L rows (spatial-temporal token positions).
struct ProbeResult {
    std::vector<Tensor> rgb_layers, depth_layers;  // [L, C_emb] per layer
    Tensor ray_target;                             // [L, C'] encoded rays
    Tensor depth_target;                           // [L, C'] ground-truth depth latent
};

// Runs one forward at time t with the clip's conditions and the given
// latent state (pass the targets' z_t or sampled noise).
ProbeResult probe_activations(dit::DualDit& model, const data::Dataset& ds,
                              const data::Clip& clip, const Tensor& z_rgb_tokens,
                              const Tensor& z_depth_tokens, double t, bool gamma);

// CKA between branch activations and probe targets at every (layer,
// timestep) of a sampling run, aggregated over probe clips. Writes
// cka_rgb_ray.csv, cka_depth_ray.csv and cka_rgb_depth.csv with schema
// stage,layer,t,cka_mean,cka_var.
void cka_vs_stage_report(dit::DualDit& model, const data::Dataset& ds,
                         const diffusion::TimestepSchedule& schedule, int probe_clips,
                         uint64_t seed, bool gamma, const std::string& out_dir,
                         bool plots = false);

// Photometric registration of generated frames against the known scene:
// per frame, a local search around the conditioning pose minimizing the
// pixel error of a half-resolution re-render.
geom::CameraTrajectory register_trajectory(const codec::VideoTensor& frames,
                                           const scene::SceneSpec& scene,
                                           const geom::CameraTrajectory& init);

struct SweepRow {
    std::string stage;  // "none" for delta = 0
    int delta = 0;
    int steps = 0;
    int seed = 0;
    double re = 0, te = 0, recon = 0;
};

// Samples held-out clips under each (stage, delta) schedule and scores
// pose adherence (RE/TE via registration) plus reconstruction error.
// Delta = 0 collapses to a single "none" row per seed.
std::vector<SweepRow> stage_allocation_sweep(dit::DualDit& model, const data::Dataset& holdout,
                                             const codec::Codec& codec, int base,
                                             const std::vector<int>& deltas,
                                             const std::vector<diffusion::Stage>& stages,
                                             int seeds, uint64_t seed, bool gamma);

std::string sweep_csv(const std::vector<SweepRow>& rows);

struct DepthBenefitReport {
    double median_re_fusion = 0;
    double median_re_ablation = 0;
    std::vector<double> re_fusion, re_ablation;
    bool expected_direction() const { return median_re_fusion <= median_re_ablation; }
};

// Expected-direction check: fusion-stage model vs the no-depth ablation on
// held-out trajectories. Both numbers are always reported.
DepthBenefitReport depth_benefit_report(dit::DualDit& fusion_model, dit::DualDit& ablation,
                                        const data::Dataset& holdout,
                                        const codec::Codec& codec,
                                        const diffusion::TimestepSchedule& schedule, int seeds,
                                        uint64_t seed);

// Minimal line-chart rendering for the CKA curves.
void write_line_plot(const std::string& path, const std::vector<std::vector<double>>& series,
                     int width = 640, int height = 360);

}  // namespace dcam::analysis
