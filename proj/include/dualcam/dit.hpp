#pragma once

#include <iostream>
#include <string>
#include <vector>

#include "dualcam/codec.hpp"
#include "dualcam/rng.hpp"
#include "dualcam/tape.hpp"

namespace dcam::dit {

struct ModelConfig {
    int num_blocks = 15;
    int emb_dim = 64;      // C_emb; bottleneck is C_emb / 4
    int heads = 4;
    int latent_channels = 16;  // C'
    int fusion_stages = 2;     // depthwise/pointwise conv pairs per fusion block
    int text_vocab = 8;
    int ray_in_channels = 6 * 8 * 8;
    bool dual = true;  // false: RGB branch only (no-depth ablation)

    static ModelConfig mini() {
        ModelConfig c;
        c.num_blocks = 6;
        c.emb_dim = 32;
        return c;
    }

    int bottleneck() const { return emb_dim / 4; }
    void validate() const {
        if (emb_dim % 4 != 0) throw ConfigError("emb_dim must be divisible by 4");
        if (emb_dim % heads != 0) throw ConfigError("emb_dim must be divisible by heads");
        if (num_blocks < 1) throw ConfigError("num_blocks must be >= 1");
    }
};

// Per-layer cross-injection directions, 1-based layer indices.
struct SigmaSchedule {
    std::vector<int> rgb_to_depth;
    std::vector<int> depth_to_rgb;

    // RGB anchors semantics in the first third of the stack, depth feeds
    // back over the rest (the 1-5 / 6-15 split at N = 15).
    static SigmaSchedule defaults(int num_blocks) {
        SigmaSchedule s;
        int split = num_blocks / 3;
        for (int k = 1; k <= split; ++k) s.rgb_to_depth.push_back(k);
        for (int k = split + 1; k <= num_blocks; ++k) s.depth_to_rgb.push_back(k);
        return s;
    }

    bool overlaps() const {
        for (int k : rgb_to_depth)
            for (int j : depth_to_rgb)
                if (k == j) return true;
        return false;
    }

    void validate(int num_blocks) const {
        for (int k : rgb_to_depth)
            if (k < 1 || k > num_blocks) throw ConfigError("rgb_to_depth layer out of range");
        for (int k : depth_to_rgb)
            if (k < 1 || k > num_blocks) throw ConfigError("depth_to_rgb layer out of range");
        if (overlaps())
            std::cerr << "warning: rgb_to_depth and depth_to_rgb layer sets overlap\n";
    }

    bool has_rgb_to_depth(int layer) const {
        for (int k : rgb_to_depth)
            if (k == layer) return true;
        return false;
    }
    bool has_depth_to_rgb(int layer) const {
        for (int k : depth_to_rgb)
            if (k == layer) return true;
        return false;
    }
};

struct TokenGrid {
    long t = 0, h = 0, w = 0;
    long tokens() const { return t * h * w; }
};

namespace detail {

template <typename T>
std::vector<T> normal_init(Rng& rng, long n, double scale) {
    std::vector<T> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<T>(rng.normal() * scale);
    return v;
}

template <typename T>
std::vector<T> zeros_init(long n) {
    return std::vector<T>(static_cast<size_t>(n), T(0));
}

}  // namespace detail

// ---- Transformer block ----------------------------------------------------

template <typename T>
void init_block_params(nn::ParamStoreT<T>& ps, Rng& rng, const std::string& prefix, int emb) {
    using detail::normal_init;
    using detail::zeros_init;
    const double s = 0.02;
    ps.add(prefix + ".adaln.weight", {4L * emb, emb}, zeros_init<T>(4L * emb * emb));
    ps.add(prefix + ".adaln.bias", {4L * emb}, zeros_init<T>(4L * emb));
    ps.add(prefix + ".attn.qkv.weight", {3L * emb, emb}, normal_init<T>(rng, 3L * emb * emb, s));
    ps.add(prefix + ".attn.qkv.bias", {3L * emb}, zeros_init<T>(3L * emb));
    ps.add(prefix + ".attn.out.weight", {(long)emb, emb}, normal_init<T>(rng, (long)emb * emb, s));
    ps.add(prefix + ".attn.out.bias", {(long)emb}, zeros_init<T>(emb));
    ps.add(prefix + ".mlp.fc1.weight", {4L * emb, emb}, normal_init<T>(rng, 4L * emb * emb, s));
    ps.add(prefix + ".mlp.fc1.bias", {4L * emb}, zeros_init<T>(4L * emb));
    ps.add(prefix + ".mlp.fc2.weight", {(long)emb, 4L * emb},
           normal_init<T>(rng, 4L * emb * emb, s));
    ps.add(prefix + ".mlp.fc2.bias", {(long)emb}, zeros_init<T>(emb));
}

// Pre-norm DiT block: adaptive scale/shift from the conditioning vector,
// self-attention, then a GELU MLP, both on residual paths.
template <typename T>
int dit_block(nn::TapeT<T>& tp, nn::ParamStoreT<T>& ps, const std::string& prefix, int x,
              int cond, int heads) {
    int mod = tp.linear(tp.silu(cond), tp.param(ps, prefix + ".adaln.weight"),
                        tp.param(ps, prefix + ".adaln.bias"));
    const long c = tp.shape(x)[2];
    int mod_attn = tp.slice_cols(mod, 0, 2 * c);
    int mod_mlp = tp.slice_cols(mod, 2 * c, 4 * c);

    int h = tp.ada_modulate(tp.layernorm(x), mod_attn);
    int qkv = tp.linear(h, tp.param(ps, prefix + ".attn.qkv.weight"),
                        tp.param(ps, prefix + ".attn.qkv.bias"));
    int attn = tp.linear(tp.attention(qkv, heads), tp.param(ps, prefix + ".attn.out.weight"),
                         tp.param(ps, prefix + ".attn.out.bias"));
    x = tp.add(x, attn);

    int m = tp.ada_modulate(tp.layernorm(x), mod_mlp);
    int mlp = tp.linear(tp.gelu(tp.linear(m, tp.param(ps, prefix + ".mlp.fc1.weight"),
                                          tp.param(ps, prefix + ".mlp.fc1.bias"))),
                        tp.param(ps, prefix + ".mlp.fc2.weight"),
                        tp.param(ps, prefix + ".mlp.fc2.bias"));
    return tp.add(x, mlp);
}

// ---- 3D fusion block -------------------------------------------------------

template <typename T>
void init_fusion_params(nn::ParamStoreT<T>& ps, Rng& rng, const std::string& prefix, int emb,
                        int stages) {
    using detail::normal_init;
    using detail::zeros_init;
    const int cb = emb / 4;
    const double s = 0.05;
    ps.add(prefix + ".in.weight", {(long)cb, emb}, normal_init<T>(rng, (long)cb * emb, s));
    ps.add(prefix + ".in.bias", {(long)cb}, zeros_init<T>(cb));
    for (int i = 0; i < stages; ++i) {
        std::string sp = prefix + ".stage" + std::to_string(i);
        ps.add(sp + ".dw.weight", {(long)cb, 27}, normal_init<T>(rng, (long)cb * 27, s));
        ps.add(sp + ".dw.bias", {(long)cb}, zeros_init<T>(cb));
        ps.add(sp + ".pw.weight", {(long)cb, cb}, normal_init<T>(rng, (long)cb * cb, s));
        ps.add(sp + ".pw.bias", {(long)cb}, zeros_init<T>(cb));
    }
    // The output map starts at exactly zero so enabling fusion is an identity.
    ps.add(prefix + ".out.weight", {(long)emb, cb}, zeros_init<T>((long)emb * cb));
    ps.add(prefix + ".out.bias", {(long)emb}, zeros_init<T>(emb));
    ps.add(prefix + ".gate.weight", {1L, cb}, zeros_init<T>(cb));
    ps.add(prefix + ".gate.bias", {1L}, zeros_init<T>(1));
}

template <typename T>
struct FusionNodes {
    int out = -1;       // gated output, same shape as the input tokens
    int pre_gate = -1;  // output before the frame gate
    int gate = -1;      // per-frame gate values [B, T, 1]
};

// Bottleneck 1x1x1, a stack of depthwise-3x3x3 / pointwise-1x1x1 pairs with
// SiLU after each conv, a zero-initialized 1x1x1 restoring the channels, and
// a per-frame logistic gate on mean-pooled bottleneck features.
template <typename T>
FusionNodes<T> fusion_block(nn::TapeT<T>& tp, nn::ParamStoreT<T>& ps, const std::string& prefix,
                            int x, TokenGrid grid, int stages) {
    int feat = tp.linear(x, tp.param(ps, prefix + ".in.weight"),
                         tp.param(ps, prefix + ".in.bias"));
    for (int i = 0; i < stages; ++i) {
        std::string sp = prefix + ".stage" + std::to_string(i);
        feat = tp.silu(tp.conv_dw3(feat, grid.t, grid.h, grid.w,
                                   tp.param(ps, sp + ".dw.weight"),
                                   tp.param(ps, sp + ".dw.bias")));
        feat = tp.silu(tp.linear(feat, tp.param(ps, sp + ".pw.weight"),
                                 tp.param(ps, sp + ".pw.bias")));
    }
    FusionNodes<T> out;
    out.pre_gate = tp.linear(feat, tp.param(ps, prefix + ".out.weight"),
                             tp.param(ps, prefix + ".out.bias"));
    int pooled = tp.frame_mean(feat, grid.t, grid.h, grid.w);
    out.gate = tp.sigmoid(tp.linear(pooled, tp.param(ps, prefix + ".gate.weight"),
                                    tp.param(ps, prefix + ".gate.bias")));
    out.out = tp.frame_scale(out.pre_gate, out.gate, grid.t, grid.h, grid.w);
    return out;
}

// ---- Timestep embedding ----------------------------------------------------

// Sinusoidal features of a normalized timestep, computed outside the graph.
template <typename T>
std::vector<T> timestep_features(double t, int dim) {
    std::vector<T> f(static_cast<size_t>(dim));
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / half);
        double a = t * 1000.0 * freq;
        f[static_cast<size_t>(i)] = static_cast<T>(std::sin(a));
        f[static_cast<size_t>(half + i)] = static_cast<T>(std::cos(a));
    }
    return f;
}

// ---- Dual-branch model -----------------------------------------------------

inline const char* kRgbPrefix = "rgb";
inline const char* kDepthPrefix = "depth";

struct ForwardResult {
    int rgb_out = -1;    // velocity tokens [B, L, C']
    int depth_out = -1;  // -1 when the depth branch is disabled
    int ray_latent = -1; // encoded rays [B, L, C']
    std::vector<int> rgb_layers, depth_layers;  // post-block activations
};

class DualDit {
  public:
    ModelConfig cfg;
    SigmaSchedule sigma;
    nn::ParamStore params;
    bool has_fusion = false;

    DualDit(const ModelConfig& c, const SigmaSchedule& s) : cfg(c), sigma(s) {
        cfg.validate();
        sigma.validate(cfg.num_blocks);
    }

    void init_params(uint64_t seed);
    // Creates zero-initialized fusion blocks for every scheduled layer.
    void add_fusion_params(uint64_t seed);

    // Encodes pre-grouped ray inputs [B, T', h, w, 6*f^2] to latent tokens.
    int encode_rays(nn::Tape& tp, int rays_grouped, TokenGrid grid);

    // Branch input assembly: concat(cond + rays, noise) over channels.
    int assemble(nn::Tape& tp, int cond, int rays, int noise) {
        if (tp.shape(cond) != tp.shape(rays) || tp.shape(cond) != tp.shape(noise))
            throw ShapeError("assemble: condition/ray/noise shapes differ");
        return tp.concat_cols(tp.add(cond, rays), noise);
    }

    ForwardResult forward(nn::Tape& tp, int rgb_in, int depth_in, double t,
                          const std::vector<int>& text_ids, TokenGrid grid, bool gamma,
                          bool capture_layers = false);

    // Single-branch forward with the same parameters (gamma = 0 reference
    // and the no-depth ablation path).
    int forward_single(nn::Tape& tp, const std::string& branch, int x_in, double t,
                       const std::vector<int>& text_ids, bool capture = false,
                       std::vector<int>* layers = nullptr);

  private:
    int branch_tokens(nn::Tape& tp, const std::string& prefix, int x_in,
                      const std::vector<int>& text_ids);
    int branch_cond(nn::Tape& tp, const std::string& prefix, double t, long batch);
};

}  // namespace dcam::dit
