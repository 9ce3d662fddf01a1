#include "dualcam/codec.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "dualcam/errors.hpp"
#include "dualcam/rng.hpp"

namespace dcam::codec {

std::vector<std::pair<int, int>> temporal_groups(int T) {
    if (T < 1 || (T - 1) % kTemporalGroup != 0)
        throw ShapeError("frame count must satisfy (T-1) mod 4 == 0, got " + std::to_string(T));
    std::vector<std::pair<int, int>> groups{{0, 1}};
    for (int s = 1; s < T; s += kTemporalGroup) groups.emplace_back(s, kTemporalGroup);
    return groups;
}

// Packed channel layout: slot-major, then color, then the 8x8 spatial block.
static long packed_index(int slot, long c, long dy, long dx) {
    return ((slot * 3 + c) * kSpatialFactor + dy) * kSpatialFactor + dx;
}

// Orthonormal rows that weight the four temporal slots identically. The
// equal slot weights make the self-repeated first-frame group a fixed point
// of decode-then-encode, which is what gives encode(decode(z)) == z.
static Tensor make_projection(int channels, uint64_t seed) {
    const int per_slot = kPackedChannels / kTemporalGroup;  // 192
    if (channels > per_slot)
        throw ConfigError("shape_faithful channels must be <= " + std::to_string(per_slot));
    Rng rng(Rng::derive(seed, "codec-projection"));
    Eigen::MatrixXd g(per_slot, channels);
    for (int i = 0; i < per_slot; ++i)
        for (int j = 0; j < channels; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(per_slot, channels);

    Tensor p({channels, kPackedChannels});
    for (int r = 0; r < channels; ++r)
        for (int k = 0; k < per_slot; ++k) {
            long c = k / (kSpatialFactor * kSpatialFactor);
            long rest = k % (kSpatialFactor * kSpatialFactor);
            long dy = rest / kSpatialFactor, dx = rest % kSpatialFactor;
            for (int slot = 0; slot < kTemporalGroup; ++slot)
                p.at(r, packed_index(slot, c, dy, dx)) = 0.5 * q(k, r);
        }
    return p;
}

Codec::Codec(const CodecConfig& cfg) : cfg_(cfg) {
    if (cfg.mode == CodecMode::lossless) {
        channels_ = kPackedChannels;
    } else {
        if (cfg.channels < 1) throw ConfigError("latent channels must be positive");
        channels_ = cfg.channels;
        projection_ = make_projection(channels_, cfg.projection_seed);
    }
}

LatentTensor Codec::encode(const VideoTensor& v) const {
    const long T = v.frames(), H = v.height(), W = v.width();
    if (v.data.rank() != 4 || v.data.dim(1) != 3) throw ShapeError("video must be T x 3 x H x W");
    if (H % kSpatialFactor != 0 || W % kSpatialFactor != 0)
        throw ShapeError("H and W must be divisible by 8");
    auto groups = temporal_groups(static_cast<int>(T));
    const long Tp = static_cast<long>(groups.size());
    const long h = H / kSpatialFactor, w = W / kSpatialFactor;

    LatentTensor z;
    z.data = Tensor({Tp, channels_, h, w});
    std::vector<double> packed(kPackedChannels);
    for (long g = 0; g < Tp; ++g) {
        auto [start, len] = groups[static_cast<size_t>(g)];
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x) {
                for (int slot = 0; slot < kTemporalGroup; ++slot) {
                    // The lone first frame is padded by self-repetition.
                    long frame = start + (len == 1 ? 0 : slot);
                    for (long c = 0; c < 3; ++c)
                        for (long dy = 0; dy < kSpatialFactor; ++dy)
                            for (long dx = 0; dx < kSpatialFactor; ++dx)
                                packed[static_cast<size_t>(packed_index(slot, c, dy, dx))] =
                                    v.data.at(frame, c, y * kSpatialFactor + dy,
                                              x * kSpatialFactor + dx);
                }
                if (cfg_.mode == CodecMode::lossless) {
                    for (long c = 0; c < channels_; ++c)
                        z.data.at(g, c, y, x) = packed[static_cast<size_t>(c)];
                } else {
                    for (long c = 0; c < channels_; ++c) {
                        double acc = 0;
                        for (long k = 0; k < kPackedChannels; ++k)
                            acc += projection_.at(c, k) * packed[static_cast<size_t>(k)];
                        z.data.at(g, c, y, x) = acc;
                    }
                }
            }
    }
    return z;
}

VideoTensor Codec::decode(const LatentTensor& z, VideoKind kind) const {
    if (z.data.rank() != 4 || z.channels() != channels_)
        throw ShapeError("latent channels do not match codec configuration");
    const long Tp = z.frames(), h = z.height(), w = z.width();
    const long T = (Tp - 1) * kTemporalGroup + 1;
    auto groups = temporal_groups(static_cast<int>(T));

    VideoTensor v;
    v.kind = kind;
    v.data = Tensor({T, 3, h * kSpatialFactor, w * kSpatialFactor});
    std::vector<double> packed(kPackedChannels);
    for (long g = 0; g < Tp; ++g) {
        auto [start, len] = groups[static_cast<size_t>(g)];
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x) {
                if (cfg_.mode == CodecMode::lossless) {
                    for (long c = 0; c < channels_; ++c)
                        packed[static_cast<size_t>(c)] = z.data.at(g, c, y, x);
                } else {
                    // Orthonormal rows: the transpose is the pseudo-inverse.
                    for (long k = 0; k < kPackedChannels; ++k) {
                        double acc = 0;
                        for (long c = 0; c < channels_; ++c)
                            acc += projection_.at(c, k) * z.data.at(g, c, y, x);
                        packed[static_cast<size_t>(k)] = acc;
                    }
                }
                for (int f = 0; f < len; ++f) {
                    long frame = start + f;
                    for (long c = 0; c < 3; ++c)
                        for (long dy = 0; dy < kSpatialFactor; ++dy)
                            for (long dx = 0; dx < kSpatialFactor; ++dx) {
                                double value;
                                if (len == 1) {
                                    // Average the four self-repeated slots;
                                    // exact for values in [-1, 1].
                                    double acc = 0;
                                    for (int slot = 0; slot < kTemporalGroup; ++slot)
                                        acc += packed[static_cast<size_t>(
                                            packed_index(slot, c, dy, dx))];
                                    value = acc / kTemporalGroup;
                                } else {
                                    value = packed[static_cast<size_t>(packed_index(f, c, dy, dx))];
                                }
                                v.data.at(frame, c, y * kSpatialFactor + dy,
                                          x * kSpatialFactor + dx) = value;
                            }
                }
            }
    }
    return v;
}

VideoTensor replicate_depth(const Tensor& depth) {
    if (depth.rank() != 4 || depth.dim(1) != 1) throw ShapeError("depth must be T x 1 x H x W");
    if (!depth.all_finite()) throw ValueError("depth contains non-finite values");
    double lo = depth.data[0], hi = depth.data[0];
    for (double v : depth.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const long T = depth.dim(0), H = depth.dim(2), W = depth.dim(3);
    VideoTensor out;
    out.kind = VideoKind::depth3;
    out.data = Tensor({T, 3, H, W});
    const double span = hi - lo;
    for (long t = 0; t < T; ++t)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                double v = span > 0 ? 2.0 * (depth.at(t, 0, y, x) - lo) / span - 1.0 : 0.0;
                for (long c = 0; c < 3; ++c) out.data.at(t, c, y, x) = v;
            }
    return out;
}

LatentTensor prepare_condition(const LatentTensor& image_latent, int t_prime) {
    if (image_latent.frames() != 1) throw ShapeError("condition latent must have one frame");
    if (t_prime < 1) throw ShapeError("target frame count must be >= 1");
    LatentTensor out;
    out.data = Tensor({t_prime, image_latent.channels(), image_latent.height(),
                       image_latent.width()});
    const long per_frame = image_latent.data.size();
    for (long i = 0; i < per_frame; ++i) out.data[i] = image_latent.data[i];
    return out;
}

}  // namespace dcam::codec
