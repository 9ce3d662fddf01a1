#include "dualcam/pipeline.hpp"

#include "dualcam/errors.hpp"
#include "dualcam/rng.hpp"

namespace dcam::pipeline {

Conditions conditions_from_clip(const data::Clip& clip, const data::Dataset& ds) {
    Conditions c;
    c.cond_rgb_tokens = clip.cond_rgb_tokens;
    c.cond_depth_tokens = clip.cond_depth_tokens;
    c.rays_grouped = clip.rays_grouped;
    c.descriptor_id = clip.descriptor_id;
    c.grid = {ds.latent_frames(), ds.grid_h(), ds.grid_w()};
    return c;
}

static int tokens_leaf(nn::Tape& tape, const TensorF& t) {
    std::vector<long> shape = {1};
    shape.insert(shape.end(), t.shape.begin(), t.shape.end());
    return tape.leaf(std::move(shape), t.data);
}

static int tokens_leaf(nn::Tape& tape, const Tensor& t) {
    std::vector<long> shape = {1};
    shape.insert(shape.end(), t.shape.begin(), t.shape.end());
    std::vector<float> data(t.data.size());
    for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(t.data[i]);
    return tape.leaf(std::move(shape), std::move(data));
}

std::pair<Tensor, Tensor> model_velocity(dit::DualDit& model, const Conditions& cond,
                                         const Tensor& z_rgb_tokens,
                                         const Tensor& z_depth_tokens, double t, bool gamma) {
    nn::Tape tape;
    int rays = model.encode_rays(tape, tokens_leaf(tape, cond.rays_grouped), cond.grid);
    int in_r = model.assemble(tape, tokens_leaf(tape, cond.cond_rgb_tokens), rays,
                              tokens_leaf(tape, z_rgb_tokens));
    int in_d = -1;
    if (model.cfg.dual)
        in_d = model.assemble(tape, tokens_leaf(tape, cond.cond_depth_tokens), rays,
                              tokens_leaf(tape, z_depth_tokens));
    auto fwd = model.forward(tape, in_r, in_d, t, {cond.descriptor_id}, cond.grid, gamma);

    auto to_tensor = [&](int node) {
        const auto& v = tape.val(node);
        Tensor out({cond.grid.tokens(), model.cfg.latent_channels});
        for (size_t i = 0; i < v.size(); ++i) out.data[i] = static_cast<double>(v[i]);
        return out;
    };
    Tensor vr = to_tensor(fwd.rgb_out);
    Tensor vd = model.cfg.dual ? to_tensor(fwd.depth_out) : Tensor();
    return {std::move(vr), std::move(vd)};
}

GeneratedLatents generate(dit::DualDit& model, const Conditions& cond,
                          const diffusion::TimestepSchedule& schedule, uint64_t seed,
                          bool gamma) {
    const long L = cond.grid.tokens();
    const long C = model.cfg.latent_channels;
    Rng rng(Rng::derive(seed, "sample-noise"));
    Tensor eps({L, C});
    for (auto& v : eps.data) v = rng.normal();

    GeneratedLatents out;
    if (model.cfg.dual) {
        auto result = diffusion::sample(
            [&](const Tensor& zr, const Tensor& zd, double t) {
                return model_velocity(model, cond, zr, zd, t, gamma);
            },
            schedule, eps, eps);
        out.rgb = data::from_tokens(result.rgb, cond.grid.t, cond.grid.h, cond.grid.w);
        out.depth = data::from_tokens(result.depth, cond.grid.t, cond.grid.h, cond.grid.w);
    } else {
        Tensor z = diffusion::sample_single(
            [&](const Tensor& zr, double t) {
                return model_velocity(model, cond, zr, zr, t, false).first;
            },
            schedule, eps);
        out.rgb = data::from_tokens(z, cond.grid.t, cond.grid.h, cond.grid.w);
    }
    return out;
}

Tensor collapse_depth(const codec::VideoTensor& depth3) {
    const long T = depth3.frames(), H = depth3.height(), W = depth3.width();
    Tensor out({T, 1, H, W});
    for (long t = 0; t < T; ++t)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x)
                out.at(t, 0, y, x) = (depth3.data.at(t, 0, y, x) + depth3.data.at(t, 1, y, x) +
                                      depth3.data.at(t, 2, y, x)) / 3.0;
    return out;
}

}  // namespace dcam::pipeline
