#include "dualcam/camera.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dualcam/codec.hpp"
#include "dualcam/errors.hpp"

namespace dcam::geom {

Mat3 axis_angle(const Vec3& axis, double radians) {
    Vec3 u = axis.normalized();
    double c = std::cos(radians), s = std::sin(radians), t = 1.0 - c;
    Mat3 r;
    r.m[0][0] = c + u.x * u.x * t;
    r.m[0][1] = u.x * u.y * t - u.z * s;
    r.m[0][2] = u.x * u.z * t + u.y * s;
    r.m[1][0] = u.y * u.x * t + u.z * s;
    r.m[1][1] = c + u.y * u.y * t;
    r.m[1][2] = u.y * u.z * t - u.x * s;
    r.m[2][0] = u.z * u.x * t - u.y * s;
    r.m[2][1] = u.z * u.y * t + u.x * s;
    r.m[2][2] = c + u.z * u.z * t;
    return r;
}

bool Intrinsics::finite() const {
    return std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy);
}

double Pose::orthonormality_error() const {
    Mat3 g = rotation.transposed() * rotation;
    double err = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) err = std::max(err, std::abs(g.m[i][j] - (i == j ? 1.0 : 0.0)));
    return std::max(err, std::abs(rotation.det() - 1.0));
}

bool Pose::finite() const {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (!std::isfinite(rotation.m[i][j])) return false;
    return std::isfinite(translation.x) && std::isfinite(translation.y) &&
           std::isfinite(translation.z);
}

Pose Pose::inverse() const {
    Pose r;
    r.rotation = rotation.transposed();
    r.translation = -(r.rotation * translation);
    return r;
}

Pose Pose::compose(const Pose& o) const {
    Pose r;
    r.rotation = rotation * o.rotation;
    r.translation = rotation * o.translation + translation;
    return r;
}

void CameraTrajectory::validate() const {
    if (poses.empty()) throw ValueError("trajectory has no poses");
    if (intrinsics.size() != 1 && intrinsics.size() != poses.size())
        throw ValueError("intrinsics must be shared or per-frame");
    for (size_t i = 0; i < poses.size(); ++i) {
        if (!poses[i].finite())
            throw ValueError("non-finite pose at frame " + std::to_string(i));
        if (poses[i].orthonormality_error() > 1e-6)
            throw ValueError("non-orthonormal rotation at frame " + std::to_string(i));
    }
    for (const Intrinsics& k : intrinsics) {
        if (!k.finite()) throw ValueError("non-finite intrinsics");
        if (k.fx <= 0 || k.fy <= 0) throw ValueError("focal lengths must be positive");
    }
}

RayField generate_plucker_rays(const CameraTrajectory& traj, int H, int W) {
    if (H < 1 || W < 1) throw ShapeError("ray field resolution must be positive");
    traj.validate();
    const long T = traj.frame_count();
    RayField out;
    out.data = Tensor({T, H, W, 6});
    for (long t = 0; t < T; ++t) {
        const Intrinsics& k = traj.intr(static_cast<int>(t));
        const Pose& pose = traj.poses[static_cast<size_t>(t)];
        const Vec3 origin = pose.translation;
        for (long j = 0; j < H; ++j) {
            for (long i = 0; i < W; ++i) {
                Vec3 d_cam{(static_cast<double>(i) - k.cx) / k.fx,
                           (static_cast<double>(j) - k.cy) / k.fy, 1.0};
                Vec3 d = (pose.rotation * d_cam).normalized();
                Vec3 m = origin.cross(d);
                double* p = &out.data.at(t, j, i, 0);
                p[0] = m.x;
                p[1] = m.y;
                p[2] = m.z;
                p[3] = d.x;
                p[4] = d.y;
                p[5] = d.z;
            }
        }
    }
    return out;
}

Tensor rearrange_rayfield(const RayField& rays, int factor) {
    const long T = rays.frames(), H = rays.height(), W = rays.width();
    if (factor < 1 || H % factor != 0 || W % factor != 0)
        throw ShapeError("ray field resolution not divisible by downsampling factor");
    const long h = H / factor, w = W / factor;
    const long C = 6L * factor * factor;
    Tensor out({T, C, h, w});
    for (long t = 0; t < T; ++t)
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x)
                for (long dy = 0; dy < factor; ++dy)
                    for (long dx = 0; dx < factor; ++dx)
                        for (long c = 0; c < 6; ++c) {
                            long ch = c * factor * factor + dy * factor + dx;
                            out.at(t, ch, y, x) = rays.data.at(t, y * factor + dy, x * factor + dx, c);
                        }
    return out;
}

RayLatent downsample_rayfield(const RayField& rays, int factor, const Tensor& projection) {
    Tensor packed = rearrange_rayfield(rays, factor);
    const long T = packed.dim(0), C_in = packed.dim(1), h = packed.dim(2), w = packed.dim(3);
    if (projection.rank() != 2 || projection.dim(1) != C_in)
        throw ShapeError("projection must be C' x " + std::to_string(C_in));
    const long C = projection.dim(0);

    Tensor projected({T, C, h, w});
    for (long t = 0; t < T; ++t)
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x)
                for (long c = 0; c < C; ++c) {
                    double acc = 0;
                    for (long k = 0; k < C_in; ++k)
                        acc += projection.at(c, k) * packed.at(t, k, y, x);
                    projected.at(t, c, y, x) = acc;
                }

    auto groups = codec::temporal_groups(static_cast<int>(T));
    RayLatent out;
    out.data = Tensor({static_cast<long>(groups.size()), C, h, w});
    for (size_t g = 0; g < groups.size(); ++g) {
        auto [start, len] = groups[g];
        for (long c = 0; c < C; ++c)
            for (long y = 0; y < h; ++y)
                for (long x = 0; x < w; ++x) {
                    double acc = 0;
                    for (int f = 0; f < len; ++f) acc += projected.at(start + f, c, y, x);
                    out.data.at(static_cast<long>(g), c, y, x) = acc / len;
                }
    }
    return out;
}

CameraTrajectory normalize_to_first_frame(const CameraTrajectory& traj) {
    traj.validate();
    CameraTrajectory out = traj;
    Pose inv0 = traj.poses[0].inverse();
    for (size_t k = 0; k < traj.poses.size(); ++k) out.poses[k] = inv0.compose(traj.poses[k]);
    return out;
}

static double geodesic_angle_deg(const Mat3& a, const Mat3& b) {
    double c = ((a.transposed() * b).trace() - 1.0) / 2.0;
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c) * 180.0 / 3.14159265358979323846;
}

double rotation_error_deg(const CameraTrajectory& a, const CameraTrajectory& b) {
    if (a.frame_count() != b.frame_count())
        throw ShapeError("trajectories have different frame counts");
    if (a.frame_count() < 2) throw ShapeError("need at least two frames");
    CameraTrajectory na = normalize_to_first_frame(a);
    CameraTrajectory nb = normalize_to_first_frame(b);
    double sum = 0;
    for (int k = 1; k < na.frame_count(); ++k)
        sum += geodesic_angle_deg(na.poses[static_cast<size_t>(k)].rotation,
                                  nb.poses[static_cast<size_t>(k)].rotation);
    return sum / (na.frame_count() - 1);
}

// Scale so the mean camera-center norm over frames k >= 1 is one. All-zero
// centers are left untouched.
static void scale_normalize_centers(std::vector<Vec3>& centers) {
    double mean = 0;
    for (size_t k = 1; k < centers.size(); ++k) mean += centers[k].norm();
    mean /= static_cast<double>(centers.size() - 1);
    if (mean <= 0) return;
    for (Vec3& c : centers) c = c / mean;
}

double translation_error(const CameraTrajectory& a, const CameraTrajectory& b) {
    if (a.frame_count() != b.frame_count())
        throw ShapeError("trajectories have different frame counts");
    if (a.frame_count() < 2) throw ShapeError("need at least two frames");
    CameraTrajectory na = normalize_to_first_frame(a);
    CameraTrajectory nb = normalize_to_first_frame(b);
    std::vector<Vec3> ca, cb;
    for (const Pose& p : na.poses) ca.push_back(p.translation);
    for (const Pose& p : nb.poses) cb.push_back(p.translation);
    scale_normalize_centers(ca);
    scale_normalize_centers(cb);
    double sum = 0;
    for (size_t k = 1; k < ca.size(); ++k) sum += (ca[k] - cb[k]).norm();
    return sum / static_cast<double>(ca.size() - 1);
}

std::string serialize_trajectory(const CameraTrajectory& traj) {
    traj.validate();
    const Intrinsics& k = traj.intrinsics[0];
    char head[256];
    std::snprintf(head, sizeof head,
                  "DCAM-TRAJ v1 frames=%d fx=%.17g fy=%.17g cx=%.17g cy=%.17g width=%d height=%d",
                  traj.frame_count(), k.fx, k.fy, k.cx, k.cy, traj.width, traj.height);
    std::ostringstream out;
    out << head << "\n";
    char buf[64];
    for (const Pose& p : traj.poses) {
        const double row[12] = {p.rotation.m[0][0], p.rotation.m[0][1], p.rotation.m[0][2],
                                p.translation.x,    p.rotation.m[1][0], p.rotation.m[1][1],
                                p.rotation.m[1][2], p.translation.y,    p.rotation.m[2][0],
                                p.rotation.m[2][1], p.rotation.m[2][2], p.translation.z};
        for (int i = 0; i < 12; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", row[i]);
            out << buf << (i == 11 ? "\n" : " ");
        }
    }
    return out.str();
}

static double parse_header_value(const std::string& header, const std::string& key) {
    std::string tag = key + "=";
    size_t pos = header.find(tag);
    if (pos == std::string::npos) throw ParseError("missing header field " + key, 1);
    return std::stod(header.substr(pos + tag.size()));
}

CameraTrajectory parse_trajectory(const std::string& text) {
    std::istringstream in(text);
    std::string header;
    if (!std::getline(in, header)) throw ParseError("empty trajectory file", 1);
    if (header.rfind("DCAM-TRAJ v1", 0) != 0)
        throw ParseError("expected DCAM-TRAJ v1 header", 1);

    CameraTrajectory traj;
    int frames = static_cast<int>(parse_header_value(header, "frames"));
    if (frames < 1) throw ParseError("frames must be >= 1", 1);
    Intrinsics k;
    k.fx = parse_header_value(header, "fx");
    k.fy = parse_header_value(header, "fy");
    k.cx = parse_header_value(header, "cx");
    k.cy = parse_header_value(header, "cy");
    traj.intrinsics = {k};
    traj.width = static_cast<int>(parse_header_value(header, "width"));
    traj.height = static_cast<int>(parse_header_value(header, "height"));

    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        double v[12];
        for (int i = 0; i < 12; ++i)
            if (!(ls >> v[i]))
                throw ParseError("expected 12 pose values", line_no);
        double extra;
        if (ls >> extra) throw ParseError("trailing values after pose", line_no);
        Pose p;
        p.rotation.m[0][0] = v[0];
        p.rotation.m[0][1] = v[1];
        p.rotation.m[0][2] = v[2];
        p.translation.x = v[3];
        p.rotation.m[1][0] = v[4];
        p.rotation.m[1][1] = v[5];
        p.rotation.m[1][2] = v[6];
        p.translation.y = v[7];
        p.rotation.m[2][0] = v[8];
        p.rotation.m[2][1] = v[9];
        p.rotation.m[2][2] = v[10];
        p.translation.z = v[11];
        if (!p.finite()) throw ParseError("non-finite pose entry", line_no);
        if (p.orthonormality_error() > 1e-6)
            throw ParseError("rotation is not orthonormal", line_no);
        traj.poses.push_back(p);
    }
    if (traj.frame_count() != frames)
        throw ParseError("header declares " + std::to_string(frames) + " frames, found " +
                             std::to_string(traj.frame_count()),
                         line_no);
    return traj;
}

CameraTrajectory parse_trajectory_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trajectory file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_trajectory(buf.str());
}

void write_trajectory_file(const CameraTrajectory& traj, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write trajectory file: " + path);
    out << serialize_trajectory(traj);
}

CameraTrajectory import_re10k(const std::string& text, int width, int height) {
    CameraTrajectory traj;
    traj.width = width;
    traj.height = height;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        double ts, fx, fy, cx, cy, z0, z1, v[12];
        if (!(ls >> ts >> fx >> fy >> cx >> cy >> z0 >> z1))
            throw ParseError("expected timestamp and intrinsics", line_no);
        for (int i = 0; i < 12; ++i)
            if (!(ls >> v[i]))
                throw ParseError("expected 12 world-to-camera values", line_no);
        Intrinsics k;
        k.fx = fx * width;
        k.fy = fy * height;
        k.cx = cx * width;
        k.cy = cy * height;
        traj.intrinsics.push_back(k);
        Pose w2c;
        w2c.rotation.m[0][0] = v[0];
        w2c.rotation.m[0][1] = v[1];
        w2c.rotation.m[0][2] = v[2];
        w2c.translation.x = v[3];
        w2c.rotation.m[1][0] = v[4];
        w2c.rotation.m[1][1] = v[5];
        w2c.rotation.m[1][2] = v[6];
        w2c.translation.y = v[7];
        w2c.rotation.m[2][0] = v[8];
        w2c.rotation.m[2][1] = v[9];
        w2c.rotation.m[2][2] = v[10];
        w2c.translation.z = v[11];
        if (!w2c.finite()) throw ParseError("non-finite pose entry", line_no);
        if (w2c.orthonormality_error() > 1e-6)
            throw ParseError("rotation is not orthonormal", line_no);
        traj.poses.push_back(w2c.inverse());
    }
    if (traj.poses.empty()) throw ParseError("no camera lines found", line_no ? line_no : 1);
    return traj;
}

}  // namespace dcam::geom
