#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dualcam/tensor.hpp"

namespace dcam::codec {

inline constexpr int kSpatialFactor = 8;
inline constexpr int kTemporalGroup = 4;
// 3 color channels x 8x8 spatial block x 4-frame temporal group.
inline constexpr int kPackedChannels = 3 * kSpatialFactor * kSpatialFactor * kTemporalGroup;

enum class VideoKind { rgb, depth3 };

// T x 3 x H x W frames with values in [-1, 1].
struct VideoTensor {
    Tensor data;
    VideoKind kind = VideoKind::rgb;

    long frames() const { return data.dim(0); }
    long height() const { return data.dim(2); }
    long width() const { return data.dim(3); }
};

// T' x C' x h x w latent, T' = (T-1)/4 + 1, h = H/8, w = W/8.
struct LatentTensor {
    Tensor data;

    long frames() const { return data.dim(0); }
    long channels() const { return data.dim(1); }
    long height() const { return data.dim(2); }
    long width() const { return data.dim(3); }
};

enum class CodecMode { lossless, shape_faithful };

struct CodecConfig {
    CodecMode mode = CodecMode::shape_faithful;
    int channels = 16;  // C'; ignored in lossless mode (768 there)
    uint64_t projection_seed = 7;
};

// Temporal grouping shared by the codec and the ray downsampler: frame 0
// alone, then runs of four. Returns (start, length) pairs.
std::vector<std::pair<int, int>> temporal_groups(int T);

inline long latent_frames(long T) { return (T - 1) / kTemporalGroup + 1; }

// Deterministic linear stand-in for the VAE. Lossless mode is a pure
// space/time-to-channel rearrangement; shape_faithful mode additionally
// projects the 768 packed channels to C' with orthonormal rows, so
// encode(decode(z)) == z while decode(encode(v)) is lossy.
class Codec {
  public:
    explicit Codec(const CodecConfig& cfg);

    LatentTensor encode(const VideoTensor& v) const;
    VideoTensor decode(const LatentTensor& z, VideoKind kind = VideoKind::rgb) const;

    int latent_channels() const { return channels_; }
    const CodecConfig& config() const { return cfg_; }
    // C' x 768 in shape_faithful mode; empty in lossless mode.
    const Tensor& projection() const { return projection_; }

  private:
    CodecConfig cfg_;
    int channels_;
    Tensor projection_;
};

// Replicates a T x 1 x H x W depth map to three channels, affinely
// normalized to [-1, 1] by the per-sequence min/max (constant input maps
// to zero).
VideoTensor replicate_depth(const Tensor& depth);

// Places the single-frame latent at frame 0 and zero-pads frames 1..T'-1.
LatentTensor prepare_condition(const LatentTensor& image_latent, int t_prime);

}  // namespace dcam::codec
