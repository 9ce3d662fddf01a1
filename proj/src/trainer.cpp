#include "dualcam/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "dualcam/errors.hpp"

namespace dcam::train {

std::string log_header() { return "step,t,L_rgb,L_d,L_total,stage"; }

std::string log_row(const StepRecord& rec) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g,%s", rec.step, rec.t, rec.l_rgb,
                  rec.l_d, rec.l_total, stage_kind_name(rec.stage));
    return buf;
}

BatchDraw draw_batch(uint64_t seed, long step, int n_clips, int batch, long tokens,
                     long channels) {
    Rng rng(Rng::derive(seed, "train-step", static_cast<uint64_t>(step)));
    BatchDraw draw;
    for (int b = 0; b < batch; ++b)
        draw.clip_indices.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(n_clips))));
    draw.t = 1.0 - rng.uniform();  // uniform on (0, 1]
    for (int b = 0; b < batch; ++b) {
        TensorF e({tokens, channels});
        for (auto& v : e.data) v = static_cast<float>(rng.normal());
        draw.eps.push_back(std::move(e));
    }
    return draw;
}

Trainer::Trainer(dit::DualDit& model, const data::Dataset& data, const TrainConfig& cfg)
    : model_(model), data_(data), cfg_(cfg) {
    grid_ = {data.latent_frames(), data.grid_h(), data.grid_w()};
}

// Stacks per-clip tensors into batch leaves and builds flow-matching pairs
// z_t = (1-t) z0 + t eps, v = eps - z0 for both branches (shared eps).
Trainer::BatchNodes Trainer::stage_batch(nn::Tape& tape, const BatchDraw& draw) {
    const long B = static_cast<long>(draw.clip_indices.size());
    const long L = grid_.tokens();
    const long C = model_.cfg.latent_channels;
    const long rayC = model_.cfg.ray_in_channels;
    const float t = static_cast<float>(draw.t);

    std::vector<float> cond_r(static_cast<size_t>(B * L * C)), cond_d(cond_r.size()),
        zt_r(cond_r.size()), zt_d(cond_r.size()), v_r(cond_r.size()), v_d(cond_r.size()),
        rays(static_cast<size_t>(B * L * rayC));
    BatchNodes nodes;

    for (long b = 0; b < B; ++b) {
        const data::Clip& clip = data_.clips[static_cast<size_t>(draw.clip_indices[b])];
        const TensorF& eps = draw.eps[static_cast<size_t>(b)];
        const long off = b * L * C;
        for (long i = 0; i < L * C; ++i) {
            float e = eps.data[static_cast<size_t>(i)];
            float zr = clip.z_rgb_tokens.data[static_cast<size_t>(i)];
            float zd = clip.z_depth_tokens.data[static_cast<size_t>(i)];
            cond_r[static_cast<size_t>(off + i)] = clip.cond_rgb_tokens.data[static_cast<size_t>(i)];
            cond_d[static_cast<size_t>(off + i)] = clip.cond_depth_tokens.data[static_cast<size_t>(i)];
            zt_r[static_cast<size_t>(off + i)] = (1.0f - t) * zr + t * e;
            zt_d[static_cast<size_t>(off + i)] = (1.0f - t) * zd + t * e;
            v_r[static_cast<size_t>(off + i)] = e - zr;
            v_d[static_cast<size_t>(off + i)] = e - zd;
        }
        std::copy(clip.rays_grouped.data.begin(), clip.rays_grouped.data.end(),
                  rays.begin() + b * L * rayC);
        nodes.text_ids.push_back(clip.descriptor_id);
    }

    int rays_leaf = tape.leaf({B, grid_.t, grid_.h, grid_.w, rayC}, std::move(rays));
    int ray_latent = model_.encode_rays(tape, rays_leaf, grid_);
    int cond_r_leaf = tape.leaf({B, L, C}, std::move(cond_r));
    int zt_r_leaf = tape.leaf({B, L, C}, std::move(zt_r));
    nodes.rgb_in = model_.assemble(tape, cond_r_leaf, ray_latent, zt_r_leaf);
    nodes.v_rgb = tape.leaf({B, L, C}, std::move(v_r));
    if (model_.cfg.dual) {
        int cond_d_leaf = tape.leaf({B, L, C}, std::move(cond_d));
        int zt_d_leaf = tape.leaf({B, L, C}, std::move(zt_d));
        nodes.depth_in = model_.assemble(tape, cond_d_leaf, ray_latent, zt_d_leaf);
        nodes.v_depth = tape.leaf({B, L, C}, std::move(v_d));
    }
    return nodes;
}

StepRecord Trainer::eval_step(StageKind stage, long step_index, bool gamma) {
    BatchDraw draw = draw_batch(cfg_.seed, step_index, static_cast<int>(data_.clips.size()),
                                cfg_.batch, grid_.tokens(), model_.cfg.latent_channels);
    nn::Tape tape;
    BatchNodes nodes = stage_batch(tape, draw);
    auto fwd = model_.forward(tape, nodes.rgb_in, nodes.depth_in, draw.t, nodes.text_ids, grid_,
                              gamma);
    StepRecord rec;
    rec.step = step_index;
    rec.t = draw.t;
    rec.stage = stage;
    rec.l_rgb = tape.val(tape.mse(fwd.rgb_out, nodes.v_rgb))[0];
    if (model_.cfg.dual) rec.l_d = tape.val(tape.mse(fwd.depth_out, nodes.v_depth))[0];
    rec.l_total = rec.l_rgb + cfg_.lambda * rec.l_d;
    return rec;
}

StepRecord Trainer::step(StageKind stage, long step_index) {
    const bool gamma = stage == StageKind::fusion;
    BatchDraw draw = draw_batch(cfg_.seed, step_index, static_cast<int>(data_.clips.size()),
                                cfg_.batch, grid_.tokens(), model_.cfg.latent_channels);
    nn::Tape tape;
    BatchNodes nodes = stage_batch(tape, draw);
    auto fwd = model_.forward(tape, nodes.rgb_in, nodes.depth_in, draw.t, nodes.text_ids, grid_,
                              gamma);
    int l_rgb = tape.mse(fwd.rgb_out, nodes.v_rgb);
    int loss = l_rgb;
    int l_d = -1;
    if (model_.cfg.dual) {
        l_d = tape.mse(fwd.depth_out, nodes.v_depth);
        loss = tape.add_scaled(l_rgb, l_d, static_cast<float>(cfg_.lambda));
    }

    StepRecord rec;
    rec.step = step_index;
    rec.t = draw.t;
    rec.stage = stage;
    rec.l_rgb = tape.val(l_rgb)[0];
    rec.l_d = l_d >= 0 ? tape.val(l_d)[0] : 0.0;
    rec.l_total = tape.val(loss)[0];
    if (!std::isfinite(rec.l_total))
        throw ValueError("non-finite loss at step " + std::to_string(step_index));

    model_.params.zero_grad();
    tape.backward(loss);
    adam_update();
    return rec;
}

void Trainer::adam_update() {
    ++adam_steps;
    const float lr = static_cast<float>(cfg_.lr);
    const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
    const float eps = static_cast<float>(cfg_.adam_eps);
    const float c1 = 1.0f - std::pow(b1, static_cast<float>(adam_steps));
    const float c2 = 1.0f - std::pow(b2, static_cast<float>(adam_steps));
    for (auto& e : model_.params.entries) {
        for (size_t i = 0; i < e.value.size(); ++i) {
            float g = e.grad[i];
            e.m[i] = b1 * e.m[i] + (1.0f - b1) * g;
            e.v[i] = b2 * e.v[i] + (1.0f - b2) * g * g;
            float mhat = e.m[i] / c1;
            float vhat = e.v[i] / c2;
            e.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

std::vector<StepRecord> Trainer::run(StageKind stage, long first_step, long steps,
                                     const std::function<void(const StepRecord&)>& on_step) {
    std::vector<StepRecord> log;
    for (long s = 0; s < steps; ++s) {
        StepRecord rec = step(stage, first_step + s);
        if (on_step) on_step(rec);
        log.push_back(rec);
    }
    return log;
}

}  // namespace dcam::train
