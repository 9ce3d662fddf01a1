#include "dualcam/dit.hpp"

#include <Eigen/Dense>

namespace dcam::dit {

using nn::Tape;

// Orthonormal-row projection for the ray encoder.
static std::vector<float> orthonormal_rows(Rng& rng, long rows, long cols) {
    Eigen::MatrixXd g(cols, rows);
    for (long i = 0; i < cols; ++i)
        for (long j = 0; j < rows; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(cols, rows);
    std::vector<float> out(static_cast<size_t>(rows * cols));
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c)
            out[static_cast<size_t>(r * cols + c)] = static_cast<float>(q(c, r));
    return out;
}

static void init_branch(nn::ParamStore& ps, Rng& rng, const std::string& prefix,
                        const ModelConfig& cfg) {
    using detail::normal_init;
    using detail::zeros_init;
    const long emb = cfg.emb_dim;
    const long cin = 2L * cfg.latent_channels;
    const double s = 0.02;
    ps.add(prefix + ".patch.weight", {emb, cin}, normal_init<float>(rng, emb * cin, s));
    ps.add(prefix + ".patch.bias", {emb}, zeros_init<float>(emb));
    ps.add(prefix + ".text.table", {(long)cfg.text_vocab, emb},
           normal_init<float>(rng, (long)cfg.text_vocab * emb, s));
    ps.add(prefix + ".temb.fc1.weight", {emb, emb}, normal_init<float>(rng, emb * emb, s));
    ps.add(prefix + ".temb.fc1.bias", {emb}, zeros_init<float>(emb));
    ps.add(prefix + ".temb.fc2.weight", {emb, emb}, normal_init<float>(rng, emb * emb, s));
    ps.add(prefix + ".temb.fc2.bias", {emb}, zeros_init<float>(emb));
    for (int k = 1; k <= cfg.num_blocks; ++k)
        init_block_params(ps, rng, prefix + ".blocks." + std::to_string(k), cfg.emb_dim);
    // Zero-initialized head: the untrained model predicts zero velocity.
    ps.add(prefix + ".head.weight", {(long)cfg.latent_channels, emb},
           zeros_init<float>((long)cfg.latent_channels * emb));
    ps.add(prefix + ".head.bias", {(long)cfg.latent_channels},
           zeros_init<float>(cfg.latent_channels));
}

void DualDit::init_params(uint64_t seed) {
    Rng rng(Rng::derive(seed, "model-init"));
    init_branch(params, rng, kRgbPrefix, cfg);
    if (cfg.dual) init_branch(params, rng, kDepthPrefix, cfg);
    params.add("shared.ray_proj.weight", {(long)cfg.latent_channels, (long)cfg.ray_in_channels},
               orthonormal_rows(rng, cfg.latent_channels, cfg.ray_in_channels));
}

void DualDit::add_fusion_params(uint64_t seed) {
    if (!cfg.dual) throw ConfigError("fusion requires the dual-branch model");
    Rng rng(Rng::derive(seed, "fusion-init"));
    for (int k : sigma.rgb_to_depth)
        init_fusion_params(params, rng, "fusion.r2d." + std::to_string(k), cfg.emb_dim,
                           cfg.fusion_stages);
    for (int k : sigma.depth_to_rgb)
        init_fusion_params(params, rng, "fusion.d2r." + std::to_string(k), cfg.emb_dim,
                           cfg.fusion_stages);
    has_fusion = true;
}

int DualDit::encode_rays(Tape& tp, int rays_grouped, TokenGrid grid) {
    int proj = tp.linear(rays_grouped, tp.param(params, "shared.ray_proj.weight"));
    const long b = tp.shape(proj)[0];
    return tp.view(proj, {b, grid.tokens(), (long)cfg.latent_channels});
}

int DualDit::branch_cond(Tape& tp, const std::string& prefix, double t, long batch) {
    std::vector<float> row = timestep_features<float>(t, cfg.emb_dim);
    std::vector<float> sin(static_cast<size_t>(batch) * row.size());
    for (long b = 0; b < batch; ++b)
        std::copy(row.begin(), row.end(), sin.begin() + b * static_cast<long>(row.size()));
    int f = tp.leaf({batch, (long)cfg.emb_dim}, std::move(sin));
    int h = tp.silu(tp.linear(f, tp.param(params, prefix + ".temb.fc1.weight"),
                              tp.param(params, prefix + ".temb.fc1.bias")));
    return tp.linear(h, tp.param(params, prefix + ".temb.fc2.weight"),
                     tp.param(params, prefix + ".temb.fc2.bias"));
}

int DualDit::branch_tokens(Tape& tp, const std::string& prefix, int x_in,
                           const std::vector<int>& text_ids) {
    int x = tp.linear(x_in, tp.param(params, prefix + ".patch.weight"),
                      tp.param(params, prefix + ".patch.bias"));
    int e = tp.embed(tp.param(params, prefix + ".text.table"), text_ids);
    return tp.add_rowvec(x, e);
}

int DualDit::forward_single(Tape& tp, const std::string& branch, int x_in, double t,
                            const std::vector<int>& text_ids, bool capture,
                            std::vector<int>* layers) {
    const long batch = tp.shape(x_in)[0];
    int cond = branch_cond(tp, branch, t, batch);
    int x = branch_tokens(tp, branch, x_in, text_ids);
    for (int k = 1; k <= cfg.num_blocks; ++k) {
        x = dit_block(tp, params, branch + ".blocks." + std::to_string(k), x, cond, cfg.heads);
        if (capture && layers) layers->push_back(x);
    }
    return tp.linear(x, tp.param(params, branch + ".head.weight"),
                     tp.param(params, branch + ".head.bias"));
}

ForwardResult DualDit::forward(Tape& tp, int rgb_in, int depth_in, double t,
                               const std::vector<int>& text_ids, TokenGrid grid, bool gamma,
                               bool capture_layers) {
    ForwardResult res;
    if (!cfg.dual) {
        res.rgb_out = forward_single(tp, kRgbPrefix, rgb_in, t, text_ids, capture_layers,
                                     &res.rgb_layers);
        return res;
    }
    if (gamma && !has_fusion)
        throw ConfigError("gamma=1 requires fusion parameters (run add_fusion_params)");

    const long batch = tp.shape(rgb_in)[0];
    int cond_r = branch_cond(tp, kRgbPrefix, t, batch);
    int cond_d = branch_cond(tp, kDepthPrefix, t, batch);
    int xr = branch_tokens(tp, kRgbPrefix, rgb_in, text_ids);
    int xd = branch_tokens(tp, kDepthPrefix, depth_in, text_ids);

    for (int k = 1; k <= cfg.num_blocks; ++k) {
        const std::string id = std::to_string(k);
        xr = dit_block(tp, params, std::string(kRgbPrefix) + ".blocks." + id, xr, cond_r,
                       cfg.heads);
        xd = dit_block(tp, params, std::string(kDepthPrefix) + ".blocks." + id, xd, cond_d,
                       cfg.heads);
        if (gamma) {
            // Both injections read the pre-injection activations so the
            // update is order-free even when the layer sets overlap.
            int inj_d = -1, inj_r = -1;
            if (sigma.has_rgb_to_depth(k))
                inj_d = fusion_block(tp, params, "fusion.r2d." + id, xr, grid,
                                     cfg.fusion_stages).out;
            if (sigma.has_depth_to_rgb(k))
                inj_r = fusion_block(tp, params, "fusion.d2r." + id, xd, grid,
                                     cfg.fusion_stages).out;
            if (inj_d >= 0) xd = tp.add(xd, inj_d);
            if (inj_r >= 0) xr = tp.add(xr, inj_r);
        }
        if (capture_layers) {
            res.rgb_layers.push_back(xr);
            res.depth_layers.push_back(xd);
        }
    }
    res.rgb_out = tp.linear(xr, tp.param(params, std::string(kRgbPrefix) + ".head.weight"),
                            tp.param(params, std::string(kRgbPrefix) + ".head.bias"));
    res.depth_out = tp.linear(xd, tp.param(params, std::string(kDepthPrefix) + ".head.weight"),
                              tp.param(params, std::string(kDepthPrefix) + ".head.bias"));
    return res;
}

}  // namespace dcam::dit
