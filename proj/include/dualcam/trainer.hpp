#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dualcam/dataset.hpp"
#include "dualcam/dit.hpp"

namespace dcam::train {

struct TrainConfig {
    int batch = 8;
    double lr = 1e-3;  // toy default; the full-scale preset is 3e-6
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double lambda = 1.0;  // depth-loss weight
    uint64_t seed = 1;
    int stage1_steps = 500;
    int stage2_steps = 500;
    int checkpoint_every = 100;
};

enum class StageKind { decoupled, fusion };
inline const char* stage_kind_name(StageKind s) {
    return s == StageKind::decoupled ? "decoupled" : "fusion";
}

struct StepRecord {
    long step = 0;
    double t = 0, l_rgb = 0, l_d = 0, l_total = 0;
    StageKind stage = StageKind::decoupled;
};

std::string log_header();
std::string log_row(const StepRecord& rec);

// Everything random about one optimization step, derived from
// (seed, step) alone so interrupted runs resume bit-exactly.
struct BatchDraw {
    std::vector<int> clip_indices;
    double t = 0;
    std::vector<TensorF> eps;  // per sample, [L, C']; shared across branches
};
BatchDraw draw_batch(uint64_t seed, long step, int n_clips, int batch, long tokens,
                     long channels);

class Trainer {
  public:
    Trainer(dit::DualDit& model, const data::Dataset& data, const TrainConfig& cfg);

    // One optimization step; `step` indexes the combined stage-1 + stage-2
    // timeline and seeds the batch draw.
    StepRecord step(StageKind stage, long step_index);

    // Runs `steps` optimization steps starting at `first_step`, invoking
    // `on_step` after each. Throws ValueError on a non-finite loss.
    std::vector<StepRecord> run(StageKind stage, long first_step, long steps,
                                const std::function<void(const StepRecord&)>& on_step = {});

    // Losses for the draw at `step_index` without updating parameters.
    StepRecord eval_step(StageKind stage, long step_index, bool gamma);

    long adam_steps = 0;  // Adam bias-correction counter, persisted on resume

  private:
    struct BatchNodes {
        int rgb_in = -1, depth_in = -1;
        int v_rgb = -1, v_depth = -1;
        std::vector<int> text_ids;
    };
    BatchNodes stage_batch(nn::Tape& tape, const BatchDraw& draw);
    void adam_update();

    dit::DualDit& model_;
    const data::Dataset& data_;
    TrainConfig cfg_;
    dit::TokenGrid grid_;
};

}  // namespace dcam::train
