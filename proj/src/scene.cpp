#include "dualcam/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dualcam/errors.hpp"
#include "dualcam/image_io.hpp"
#include "dualcam/rng.hpp"

namespace dcam::scene {

namespace fs = std::filesystem;
using geom::Mat3;
using geom::Pose;
using geom::Vec3;

static constexpr double kPi = 3.14159265358979323846;

void SceneSpec::validate() const {
    if (spheres.empty() && planes.empty()) throw ValueError("scene has no primitives");
    auto finite3 = [](const Vec3& v) {
        return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
    };
    for (const Sphere& s : spheres)
        if (!finite3(s.center) || !std::isfinite(s.radius) || s.radius <= 0)
            throw ValueError("invalid sphere");
    for (const Plane& p : planes)
        if (!finite3(p.center) || p.axis < 0 || p.axis > 2 || p.half_u <= 0 || p.half_v <= 0)
            throw ValueError("invalid plane");
    if (!finite3(light_dir) || light_dir.norm() <= 0) throw ValueError("invalid light direction");
    if (!(far_plane > 0)) throw ValueError("far plane must be positive");
}

TrajKind traj_kind_from_name(const std::string& name) {
    if (name == "orbit") return TrajKind::orbit;
    if (name == "dolly") return TrajKind::dolly;
    if (name == "pan") return TrajKind::pan;
    if (name == "truck") return TrajKind::truck;
    throw ConfigError("unknown trajectory kind: " + name);
}

const char* traj_kind_name(TrajKind k) {
    switch (k) {
        case TrajKind::orbit: return "orbit";
        case TrajKind::dolly: return "dolly";
        case TrajKind::pan: return "pan";
        default: return "truck";
    }
}

Pose look_at(const Vec3& pos, const Vec3& target) {
    Vec3 z = (target - pos);
    double n = z.norm();
    if (n <= 0) throw ValueError("look_at: camera position equals target");
    z = z / n;
    Vec3 down{0, -1, 0};
    Vec3 y = down - z * z.dot(down);
    if (y.norm() < 1e-9) y = Vec3{0, 0, z.y > 0 ? 1.0 : -1.0} - z * z.dot(Vec3{0, 0, 1});
    y = y.normalized();
    Vec3 x = y.cross(z);
    Pose p;
    p.rotation.m[0][0] = x.x;
    p.rotation.m[1][0] = x.y;
    p.rotation.m[2][0] = x.z;
    p.rotation.m[0][1] = y.x;
    p.rotation.m[1][1] = y.y;
    p.rotation.m[2][1] = y.z;
    p.rotation.m[0][2] = z.x;
    p.rotation.m[1][2] = z.y;
    p.rotation.m[2][2] = z.z;
    p.translation = pos;
    return p;
}

geom::CameraTrajectory make_trajectory(TrajKind kind, const TrajParams& params, int frames,
                                       const geom::Intrinsics& intr, int width, int height) {
    if (frames < 2) throw ConfigError("trajectory needs at least two frames");
    auto finite3 = [](const Vec3& v) {
        return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
    };
    if (!finite3(params.start) || !finite3(params.target) ||
        !std::isfinite(params.total_angle_deg) || !std::isfinite(params.total_distance))
        throw ConfigError("trajectory parameters must be finite");

    geom::CameraTrajectory traj;
    traj.intrinsics = {intr};
    traj.width = width;
    traj.height = height;

    const Pose base = look_at(params.start, params.target);
    const Vec3 forward{base.rotation.m[0][2], base.rotation.m[1][2], base.rotation.m[2][2]};
    const Vec3 right{base.rotation.m[0][0], base.rotation.m[1][0], base.rotation.m[2][0]};

    for (int k = 0; k < frames; ++k) {
        double f = static_cast<double>(k) / frames;  // total/frames advance per frame
        Pose p;
        switch (kind) {
            case TrajKind::orbit: {
                double a = params.total_angle_deg * f * kPi / 180.0;
                Mat3 spin = geom::axis_angle({0, 1, 0}, a);
                Vec3 pos = params.target + spin * (params.start - params.target);
                p = look_at(pos, params.target);
                break;
            }
            case TrajKind::dolly:
                p.rotation = base.rotation;
                p.translation = params.start + forward * (params.total_distance * f);
                break;
            case TrajKind::pan: {
                double a = params.total_angle_deg * f * kPi / 180.0;
                p.rotation = base.rotation * geom::axis_angle({0, 1, 0}, a);
                p.translation = params.start;
                break;
            }
            case TrajKind::truck:
                p.rotation = base.rotation;
                p.translation = params.start + right * (params.total_distance * f);
                break;
        }
        traj.poses.push_back(p);
    }
    return traj;
}

geom::CameraTrajectory subsample_trajectory(const geom::CameraTrajectory& traj, int step) {
    if (step < 1) throw ConfigError("subsample step must be >= 1");
    geom::CameraTrajectory out;
    out.width = traj.width;
    out.height = traj.height;
    for (size_t k = 0; k < traj.poses.size(); k += static_cast<size_t>(step)) {
        out.poses.push_back(traj.poses[k]);
        if (traj.intrinsics.size() > 1) out.intrinsics.push_back(traj.intrinsics[k]);
    }
    if (traj.intrinsics.size() == 1) out.intrinsics = traj.intrinsics;
    return out;
}

namespace {

struct Hit {
    double s = -1;  // distance along the unit world ray; < 0 means miss
    Vec3 normal;
    Vec3 albedo;
};

bool hit_sphere(const Sphere& sp, const Vec3& o, const Vec3& d, Hit& hit) {
    Vec3 oc = o - sp.center;
    double b = oc.dot(d);
    double c = oc.dot(oc) - sp.radius * sp.radius;
    double disc = b * b - c;
    if (disc < 0) return false;
    double sq = std::sqrt(disc);
    double s = -b - sq;
    if (s <= 1e-9) s = -b + sq;
    if (s <= 1e-9 || (hit.s > 0 && s >= hit.s)) return false;
    Vec3 point = o + d * s;
    Vec3 n = (point - sp.center) / sp.radius;
    Vec3 albedo = sp.albedo_a;
    if (sp.checker_period > 0) {
        double theta = std::acos(std::clamp(n.y, -1.0, 1.0));
        double phi = std::atan2(n.z, n.x) + kPi;
        long parity = static_cast<long>(std::floor(theta / sp.checker_period)) +
                      static_cast<long>(std::floor(phi / sp.checker_period));
        if (parity & 1) albedo = sp.albedo_b;
    }
    hit = {s, n, albedo};
    return true;
}

bool hit_plane(const Plane& pl, const Vec3& o, const Vec3& d, Hit& hit) {
    const int ax = pl.axis, u = (pl.axis + 1) % 3, v = (pl.axis + 2) % 3;
    auto comp = [](const Vec3& w, int i) { return i == 0 ? w.x : (i == 1 ? w.y : w.z); };
    double dn = comp(d, ax);
    if (std::abs(dn) < 1e-12) return false;
    double s = (comp(pl.center, ax) - comp(o, ax)) / dn;
    if (s <= 1e-9 || (hit.s > 0 && s >= hit.s)) return false;
    Vec3 point = o + d * s;
    double lu = comp(point, u) - comp(pl.center, u);
    double lv = comp(point, v) - comp(pl.center, v);
    if (std::abs(lu) > pl.half_u || std::abs(lv) > pl.half_v) return false;
    Vec3 n{0, 0, 0};
    if (ax == 0) n.x = 1;
    if (ax == 1) n.y = 1;
    if (ax == 2) n.z = 1;
    if (n.dot(d) > 0) n = -n;  // face the viewer
    Vec3 albedo = pl.albedo_a;
    if (pl.checker_period > 0) {
        long parity = static_cast<long>(std::floor(lu / pl.checker_period)) +
                      static_cast<long>(std::floor(lv / pl.checker_period));
        if (parity & 1) albedo = pl.albedo_b;
    }
    hit = {s, n, albedo};
    return true;
}

}  // namespace

void render_frame(const SceneSpec& scene, const Pose& pose, const geom::Intrinsics& intr, int H,
                  int W, double* rgb, double* depth) {
    const Vec3 light = scene.light_dir.normalized();
    const double ambient = 0.15;
    const Vec3 origin = pose.translation;
    for (int j = 0; j < H; ++j)
        for (int i = 0; i < W; ++i) {
            Vec3 d_cam{(i - intr.cx) / intr.fx, (j - intr.cy) / intr.fy, 1.0};
            double len = d_cam.norm();
            Vec3 d = (pose.rotation * d_cam) / len;

            Hit hit;
            for (const Sphere& sp : scene.spheres) hit_sphere(sp, origin, d, hit);
            for (const Plane& pl : scene.planes) hit_plane(pl, origin, d, hit);

            Vec3 color = scene.background;
            double z = scene.far_plane;
            if (hit.s > 0) {
                double lambert = std::max(0.0, hit.normal.dot(light));
                color = hit.albedo * (ambient + (1.0 - ambient) * lambert);
                z = hit.s / len;  // camera-frame z, not ray length
            }
            const long pix = static_cast<long>(j) * W + i;
            rgb[0 * H * W + pix] = std::clamp(2.0 * color.x - 1.0, -1.0, 1.0);
            rgb[1 * H * W + pix] = std::clamp(2.0 * color.y - 1.0, -1.0, 1.0);
            rgb[2 * H * W + pix] = std::clamp(2.0 * color.z - 1.0, -1.0, 1.0);
            if (depth) depth[pix] = z;
        }
}

RenderedClip render_clip(const SceneSpec& scene, const geom::CameraTrajectory& traj, int H,
                         int W) {
    scene.validate();
    traj.validate();
    const long T = traj.frame_count();
    RenderedClip clip;
    clip.rgb.kind = codec::VideoKind::rgb;
    clip.rgb.data = Tensor({T, 3, H, W});
    clip.depth = Tensor({T, 1, H, W});
    clip.trajectory = traj;
    clip.descriptor = scene.descriptor;
    for (long t = 0; t < T; ++t)
        render_frame(scene, traj.poses[static_cast<size_t>(t)], traj.intr(static_cast<int>(t)), H,
                     W, &clip.rgb.data.at(t, 0, 0, 0), &clip.depth.at(t, 0, 0, 0));
    return clip;
}

// ---- scene text format ------------------------------------------------------

static void put3(std::ostream& out, const Vec3& v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", v.x, v.y, v.z);
    out << buf;
}

std::string serialize_scene(const SceneSpec& scene) {
    std::ostringstream out;
    char buf[64];
    out << "DCAM-SCENE v1\n";
    out << "descriptor " << scene.descriptor << "\n";
    out << "light ";
    put3(out, scene.light_dir);
    out << "\nbackground ";
    put3(out, scene.background);
    std::snprintf(buf, sizeof buf, "%.17g", scene.far_plane);
    out << "\nfar " << buf << "\n";
    for (const Sphere& s : scene.spheres) {
        out << "sphere ";
        put3(out, s.center);
        std::snprintf(buf, sizeof buf, " %.17g ", s.radius);
        out << buf;
        put3(out, s.albedo_a);
        out << " ";
        put3(out, s.albedo_b);
        std::snprintf(buf, sizeof buf, " %.17g", s.checker_period);
        out << buf << "\n";
    }
    for (const Plane& p : scene.planes) {
        out << "plane ";
        put3(out, p.center);
        std::snprintf(buf, sizeof buf, " %d %.17g %.17g ", p.axis, p.half_u, p.half_v);
        out << buf;
        put3(out, p.albedo_a);
        out << " ";
        put3(out, p.albedo_b);
        std::snprintf(buf, sizeof buf, " %.17g", p.checker_period);
        out << buf << "\n";
    }
    return out.str();
}

SceneSpec parse_scene(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("DCAM-SCENE v1", 0) != 0)
        throw ParseError("expected DCAM-SCENE v1 header", 1);
    SceneSpec scene;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        auto want = [&](bool ok) {
            if (!ok) throw ParseError("malformed " + tag + " entry", line_no);
        };
        if (tag == "descriptor") {
            want(static_cast<bool>(ls >> scene.descriptor));
        } else if (tag == "light") {
            want(static_cast<bool>(ls >> scene.light_dir.x >> scene.light_dir.y >>
                                   scene.light_dir.z));
        } else if (tag == "background") {
            want(static_cast<bool>(ls >> scene.background.x >> scene.background.y >>
                                   scene.background.z));
        } else if (tag == "far") {
            want(static_cast<bool>(ls >> scene.far_plane));
        } else if (tag == "sphere") {
            Sphere s;
            want(static_cast<bool>(ls >> s.center.x >> s.center.y >> s.center.z >> s.radius >>
                                   s.albedo_a.x >> s.albedo_a.y >> s.albedo_a.z >> s.albedo_b.x >>
                                   s.albedo_b.y >> s.albedo_b.z >> s.checker_period));
            scene.spheres.push_back(s);
        } else if (tag == "plane") {
            Plane p;
            want(static_cast<bool>(ls >> p.center.x >> p.center.y >> p.center.z >> p.axis >>
                                   p.half_u >> p.half_v >> p.albedo_a.x >> p.albedo_a.y >>
                                   p.albedo_a.z >> p.albedo_b.x >> p.albedo_b.y >> p.albedo_b.z >>
                                   p.checker_period));
            scene.planes.push_back(p);
        } else {
            throw ParseError("unknown scene entry: " + tag, line_no);
        }
    }
    scene.validate();
    return scene;
}

// ---- dataset generation ------------------------------------------------------

const std::vector<std::string>& descriptor_vocab() {
    static const std::vector<std::string> vocab = {
        "empty_room",  "red_sphere",  "green_sphere", "blue_sphere",
        "amber_sphere", "sphere_pair", "sphere_trio",  "mixed_scene"};
    return vocab;
}

int descriptor_id(const std::string& tag) {
    const auto& vocab = descriptor_vocab();
    for (size_t i = 0; i < vocab.size(); ++i)
        if (vocab[i] == tag) return static_cast<int>(i);
    throw ConfigError("unknown scene descriptor: " + tag);
}

namespace {

const Vec3 kPalette[4] = {{0.85, 0.22, 0.18}, {0.25, 0.75, 0.30}, {0.20, 0.40, 0.85},
                          {0.90, 0.65, 0.15}};
const char* kPaletteTag[4] = {"red_sphere", "green_sphere", "blue_sphere", "amber_sphere"};

SceneSpec sample_scene(Rng& rng) {
    SceneSpec scene;
    Plane floor;
    floor.center = {0, 0, 0};
    floor.axis = 1;
    floor.half_u = 12;
    floor.half_v = 12;
    floor.albedo_a = {0.72, 0.72, 0.70};
    floor.albedo_b = {0.28, 0.28, 0.30};
    floor.checker_period = 1.0;
    scene.planes.push_back(floor);

    int n_spheres = static_cast<int>(rng.below(4));
    int first_color = -1;
    bool mixed_periods = false;
    for (int s = 0; s < n_spheres; ++s) {
        Sphere sp;
        sp.radius = 0.4 + 0.5 * rng.uniform();
        sp.center = {-1.8 + 3.6 * rng.uniform(), sp.radius, -1.8 + 3.6 * rng.uniform()};
        int color = static_cast<int>(rng.below(4));
        if (first_color < 0) first_color = color;
        sp.albedo_a = kPalette[color];
        if (rng.uniform() < 0.4) {
            sp.albedo_b = kPalette[color] * 0.45;
            sp.checker_period = 0.5;
            mixed_periods = true;
        } else {
            sp.albedo_b = sp.albedo_a;
        }
        scene.spheres.push_back(sp);
    }

    scene.light_dir = Vec3{0.2 + 0.3 * rng.uniform(), 0.9, -0.4 + 0.4 * rng.uniform()};
    scene.background = Vec3{0.5 + 0.1 * rng.uniform(), 0.6 + 0.1 * rng.uniform(),
                            0.75 + 0.1 * rng.uniform()};

    if (n_spheres == 0)
        scene.descriptor = "empty_room";
    else if (n_spheres == 1)
        scene.descriptor = kPaletteTag[first_color];
    else if (n_spheres == 2)
        scene.descriptor = mixed_periods ? "mixed_scene" : "sphere_pair";
    else
        scene.descriptor = "sphere_trio";
    return scene;
}

geom::CameraTrajectory sample_trajectory(Rng& rng, TrajKind kind, int frames, int stride,
                                         const geom::Intrinsics& intr, int W, int H) {
    TrajParams params;
    double ang = 2 * kPi * rng.uniform();
    double radius = 3.0 + 1.5 * rng.uniform();
    params.start = {radius * std::sin(ang), 0.8 + 1.2 * rng.uniform(), -radius * std::cos(ang)};
    params.target = {-0.3 + 0.6 * rng.uniform(), 0.4 + 0.4 * rng.uniform(),
                     -0.3 + 0.6 * rng.uniform()};
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    switch (kind) {
        case TrajKind::orbit: params.total_angle_deg = sign * (20 + 60 * rng.uniform()); break;
        case TrajKind::pan: params.total_angle_deg = sign * (15 + 30 * rng.uniform()); break;
        case TrajKind::dolly: params.total_distance = sign * (0.5 + 1.2 * rng.uniform()); break;
        case TrajKind::truck: params.total_distance = sign * (0.5 + 1.5 * rng.uniform()); break;
    }
    int dense = (frames - 1) * (stride + 1) + 1;
    auto full = make_trajectory(kind, params, dense, intr, W, H);
    return subsample_trajectory(full, stride + 1);
}

}  // namespace

void make_dataset(const std::string& root, int n_clips, int frames, int H, int W,
                  uint64_t seed) {
    if (n_clips < 1) throw ConfigError("need at least one clip");
    codec::temporal_groups(frames);  // validates (frames - 1) % 4 == 0

    fs::path rootp(root);
    fs::path parent = rootp.parent_path();
    if (!parent.empty() && !fs::exists(parent))
        throw IoError("output directory parent does not exist: " + parent.string());
    std::error_code ec;
    fs::create_directory(rootp, ec);
    if (!fs::exists(rootp)) throw IoError("cannot create dataset directory: " + root);

    geom::Intrinsics intr;
    intr.fx = intr.fy = static_cast<double>(W);
    intr.cx = (W - 1) / 2.0;
    intr.cy = (H - 1) / 2.0;

    std::ostringstream manifest;
    manifest << "DCAM-DATASET v1 clips=" << n_clips << " frames=" << frames << " width=" << W
             << " height=" << H << "\n";

    for (int c = 0; c < n_clips; ++c) {
        Rng rng(Rng::derive(seed, "clip", static_cast<uint64_t>(c)));
        SceneSpec scene = sample_scene(rng);
        TrajKind kind = static_cast<TrajKind>(rng.below(4));
        int stride = static_cast<int>(rng.below(9));  // 0..8, frame-stride augmentation
        auto traj = sample_trajectory(rng, kind, frames, stride, intr, W, H);
        RenderedClip clip = render_clip(scene, traj, H, W);

        char id[32];
        std::snprintf(id, sizeof id, "clip_%04d", c);
        fs::path dir = rootp / id;
        fs::create_directory(dir, ec);
        if (!fs::exists(dir)) throw IoError("cannot create clip directory: " + dir.string());

        double dmin = clip.depth[0], dmax = clip.depth[0];
        for (double v : clip.depth.data) {
            dmin = std::min(dmin, v);
            dmax = std::max(dmax, v);
        }
        const double dspan = dmax > dmin ? dmax - dmin : 1.0;

        std::vector<uint8_t> rgb8(static_cast<size_t>(H) * W * 3);
        std::vector<uint16_t> d16(static_cast<size_t>(H) * W);
        for (int t = 0; t < frames; ++t) {
            for (int j = 0; j < H; ++j)
                for (int i = 0; i < W; ++i)
                    for (int ch = 0; ch < 3; ++ch) {
                        double v = clip.rgb.data.at(t, ch, j, i);
                        rgb8[(static_cast<size_t>(j) * W + i) * 3 + static_cast<size_t>(ch)] =
                            static_cast<uint8_t>(std::lround((v + 1.0) * 0.5 * 255.0));
                    }
            for (int j = 0; j < H; ++j)
                for (int i = 0; i < W; ++i)
                    d16[static_cast<size_t>(j) * W + i] = static_cast<uint16_t>(
                        std::lround((clip.depth.at(t, 0, j, i) - dmin) / dspan * 65535.0));
            char name[32];
            std::snprintf(name, sizeof name, "frame_%04d.png", t);
            imageio::write_png_rgb8((dir / name).string(), W, H, rgb8);
            std::snprintf(name, sizeof name, "depth_%04d.png", t);
            imageio::write_png_gray16((dir / name).string(), W, H, d16);
        }
        geom::write_trajectory_file(traj, (dir / "trajectory.txt").string());
        std::ofstream scene_out(dir / "scene.txt", std::ios::binary);
        if (!scene_out) throw IoError("cannot write scene file in " + dir.string());
        scene_out << serialize_scene(scene);

        char buf[64];
        manifest << id << " " << frames << " " << H << " " << W << " " << traj_kind_name(kind)
                 << " " << stride << " " << scene.descriptor;
        std::snprintf(buf, sizeof buf, " %.17g %.17g", dmin, dmax);
        manifest << buf << "\n";
    }

    std::ofstream mf(rootp / "manifest.txt", std::ios::binary);
    if (!mf) throw IoError("cannot write manifest in " + root);
    mf << manifest.str();
}

}  // namespace dcam::scene
