#pragma once

#include <cstdint>
#include <string>

namespace dcam::config {

inline constexpr const char* kToolVersion = "dcam 0.1.0";

// Every knob of a run as one plain-text key-value document with sections.
// Unknown keys are rejected; the resolved merge is persisted next to every
// command's outputs.
struct RunConfig {
    // [run]
    uint64_t seed = 1;

    // [dataset]
    std::string data_root = "data/train";
    int clips = 16;
    int frames = 17;
    int width = 64, height = 64;
    std::string holdout_root = "data/holdout";
    int holdout_clips = 8;

    // [codec]
    std::string codec_mode = "shape_faithful";  // or "lossless"
    int codec_channels = 16;
    uint64_t projection_seed = 7;

    // [model]
    std::string profile = "default";  // "default" (N=15, 64) or "mini" (N=6, 32)
    bool no_depth = false;
    std::string rgb_to_depth = "auto";  // layer range like "1-5", or "none"
    std::string depth_to_rgb = "auto";

    // [train]
    int batch = 8;
    double lr = 1e-3;
    double lambda = 1.0;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    int stage1_steps = 500;
    int stage2_steps = 500;
    int checkpoint_every = 100;

    // [sample]
    int sample_steps = 50;
    bool staged = false;  // false: uniform sample_steps; true: base_steps + delta
    int base_steps = 15;
    int delta = 0;
    std::string delta_stage = "none";
    std::string descriptor = "red_sphere";

    // [analyze]
    int probe_clips = 4;
    std::string deltas = "0,5,10";
    std::string sweep_stages = "early,mid,late";
    int sweep_seeds = 3;
    bool plots = false;
};

RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// Applies "section.key=value"; throws ConfigError for unknown keys.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Serialized config prefixed with the tool version, for run directories.
std::string resolved_config(const RunConfig& cfg);

}  // namespace dcam::config
