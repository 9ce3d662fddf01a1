#include "dualcam/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dualcam/errors.hpp"
#include "dualcam/image_io.hpp"

namespace dcam::data {

namespace fs = std::filesystem;

TensorF to_tokens(const codec::LatentTensor& z) {
    const long T = z.frames(), C = z.channels(), h = z.height(), w = z.width();
    TensorF out({T * h * w, C});
    for (long t = 0; t < T; ++t)
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x)
                for (long c = 0; c < C; ++c)
                    out.at((t * h + y) * w + x, c) = static_cast<float>(z.data.at(t, c, y, x));
    return out;
}

codec::LatentTensor from_tokens(const Tensor& tokens, long t, long h, long w) {
    if (tokens.rank() != 2 || tokens.dim(0) != t * h * w)
        throw ShapeError("token matrix does not match the latent grid");
    const long C = tokens.dim(1);
    codec::LatentTensor z;
    z.data = Tensor({t, C, h, w});
    for (long f = 0; f < t; ++f)
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x)
                for (long c = 0; c < C; ++c)
                    z.data.at(f, c, y, x) = tokens.at((f * h + y) * w + x, c);
    return z;
}

TensorF grouped_rays(const geom::CameraTrajectory& traj, int H, int W) {
    geom::RayField rays = geom::generate_plucker_rays(traj, H, W);
    Tensor packed = geom::rearrange_rayfield(rays, codec::kSpatialFactor);
    const long T = packed.dim(0), C = packed.dim(1), h = packed.dim(2), w = packed.dim(3);
    auto groups = codec::temporal_groups(static_cast<int>(T));
    const long Tp = static_cast<long>(groups.size());
    TensorF out({Tp, h, w, C});
    for (long g = 0; g < Tp; ++g) {
        auto [start, len] = groups[static_cast<size_t>(g)];
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x)
                for (long c = 0; c < C; ++c) {
                    double acc = 0;
                    for (int f = 0; f < len; ++f) acc += packed.at(start + f, c, y, x);
                    out.at(g, y, x, c) = static_cast<float>(acc / len);
                }
    }
    return out;
}

void prepare_clip(Clip& clip, const codec::Codec& codec, int H, int W) {
    clip.z_rgb = codec.encode(clip.rgb);
    codec::VideoTensor depth3 = codec::replicate_depth(clip.depth_raw);
    clip.z_depth = codec.encode(depth3);

    const long T = clip.rgb.frames();
    const int Tp = static_cast<int>(codec::latent_frames(T));

    auto first_frame = [&](const codec::VideoTensor& v) {
        codec::VideoTensor one;
        one.kind = v.kind;
        one.data = Tensor({1, 3, v.height(), v.width()});
        std::copy_n(v.data.data.begin(), one.data.size(), one.data.data.begin());
        return one;
    };
    clip.cond_rgb = codec::prepare_condition(codec.encode(first_frame(clip.rgb)), Tp);
    clip.cond_depth = codec::prepare_condition(codec.encode(first_frame(depth3)), Tp);

    clip.rays_grouped = grouped_rays(clip.traj, H, W);
    clip.z_rgb_tokens = to_tokens(clip.z_rgb);
    clip.z_depth_tokens = to_tokens(clip.z_depth);
    clip.cond_rgb_tokens = to_tokens(clip.cond_rgb);
    clip.cond_depth_tokens = to_tokens(clip.cond_depth);
}

Dataset load_dataset(const std::string& root, const codec::Codec& codec) {
    fs::path rootp(root);
    std::ifstream mf(rootp / "manifest.txt");
    if (!mf) throw IoError("cannot open manifest: " + (rootp / "manifest.txt").string());
    std::string header;
    if (!std::getline(mf, header) || header.rfind("DCAM-DATASET v1", 0) != 0)
        throw ParseError("expected DCAM-DATASET v1 manifest header", 1);

    Dataset ds;
    std::string line;
    int line_no = 1;
    while (std::getline(mf, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        Clip clip;
        int frames = 0, H = 0, W = 0, stride = 0;
        std::string kind, descriptor;
        double dmin = 0, dmax = 0;
        if (!(ls >> clip.id >> frames >> H >> W >> kind >> stride >> descriptor >> dmin >> dmax))
            throw ParseError("malformed manifest line", line_no);
        if (ds.frames == 0) {
            ds.frames = frames;
            ds.height = H;
            ds.width = W;
        } else if (ds.frames != frames || ds.height != H || ds.width != W) {
            throw ParseError("mixed clip geometry in manifest", line_no);
        }
        clip.descriptor_id = scene::descriptor_id(descriptor);

        fs::path dir = rootp / clip.id;
        clip.traj = geom::parse_trajectory_file((dir / "trajectory.txt").string());
        {
            std::ifstream sf(dir / "scene.txt");
            if (!sf) throw IoError("missing scene file: " + (dir / "scene.txt").string());
            std::ostringstream buf;
            buf << sf.rdbuf();
            clip.scene = scene::parse_scene(buf.str());
        }

        clip.rgb.kind = codec::VideoKind::rgb;
        clip.rgb.data = Tensor({frames, 3, H, W});
        clip.depth_raw = Tensor({frames, 1, H, W});
        const double dspan = dmax > dmin ? dmax - dmin : 0.0;
        for (int t = 0; t < frames; ++t) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%04d.png", t);
            imageio::ImageRgb8 img = imageio::read_png_rgb8((dir / name).string());
            if (img.width != W || img.height != H)
                throw IoError("frame resolution mismatch: " + (dir / name).string());
            for (int j = 0; j < H; ++j)
                for (int i = 0; i < W; ++i)
                    for (int c = 0; c < 3; ++c)
                        clip.rgb.data.at(t, c, j, i) =
                            2.0 * img.pixels[(static_cast<size_t>(j) * W + i) * 3 +
                                             static_cast<size_t>(c)] / 255.0 - 1.0;
            std::snprintf(name, sizeof name, "depth_%04d.png", t);
            imageio::ImageGray16 dimg = imageio::read_png_gray16((dir / name).string());
            if (dimg.width != W || dimg.height != H)
                throw IoError("depth resolution mismatch: " + (dir / name).string());
            for (int j = 0; j < H; ++j)
                for (int i = 0; i < W; ++i)
                    clip.depth_raw.at(t, 0, j, i) =
                        dmin + dspan * dimg.pixels[static_cast<size_t>(j) * W + i] / 65535.0;
        }
        prepare_clip(clip, codec, H, W);
        ds.clips.push_back(std::move(clip));
    }
    if (ds.clips.empty()) throw ParseError("manifest lists no clips", line_no ? line_no : 1);
    return ds;
}

}  // namespace dcam::data
