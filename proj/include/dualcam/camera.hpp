#pragma once

#include <string>
#include <vector>

#include "dualcam/tensor.hpp"

namespace dcam::geom {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const { return *this / norm(); }
};

// 3x3 matrix, row-major.
struct Mat3 {
    double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    static Mat3 identity() { return Mat3{}; }
    Vec3 operator*(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                r.m[i][j] = 0;
                for (int k = 0; k < 3; ++k) r.m[i][j] += m[i][k] * o.m[k][j];
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
        return r;
    }
    double trace() const { return m[0][0] + m[1][1] + m[2][2]; }
    double det() const {
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
               m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }
};

// Rodrigues rotation about a (not necessarily unit) axis.
Mat3 axis_angle(const Vec3& axis, double radians);

// Pinhole intrinsics in pixel units.
struct Intrinsics {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    bool finite() const;
};

// Camera-to-world rigid transform.
struct Pose {
    Mat3 rotation;
    Vec3 translation;

    // Max deviation of R'R from identity plus |det - 1|.
    double orthonormality_error() const;
    bool finite() const;
    Pose inverse() const;
    Pose compose(const Pose& o) const;  // this ∘ o
};

struct CameraTrajectory {
    std::vector<Intrinsics> intrinsics;  // size 1 (shared) or one per frame
    std::vector<Pose> poses;
    int width = 0, height = 0;  // associated image resolution

    int frame_count() const { return static_cast<int>(poses.size()); }
    const Intrinsics& intr(int frame) const {
        return intrinsics.size() == 1 ? intrinsics[0] : intrinsics[static_cast<size_t>(frame)];
    }
    void validate() const;  // throws ValueError on bad poses/intrinsics
};

// Per-pixel Plücker rays, T x H x W x 6 with channels [m(3), d(3)].
struct RayField {
    Tensor data;
    long frames() const { return data.dim(0); }
    long height() const { return data.dim(1); }
    long width() const { return data.dim(2); }
};

// Downsampled + projected ray field, T' x C' x h x w.
struct RayLatent {
    Tensor data;
};

// Dense Plücker rays for every pixel of every frame. Directions are unit
// length in world coordinates; moments are camera-center cross direction.
RayField generate_plucker_rays(const CameraTrajectory& traj, int H, int W);

// Space-to-channel rearrangement of a ray field: T x (6*factor^2) x H/f x W/f.
Tensor rearrange_rayfield(const RayField& rays, int factor);

// Rearrange, project channels with the given (C' x 6*factor^2) map, then
// group frames temporally to match the latent codec (first frame alone,
// then groups of four, averaged).
RayLatent downsample_rayfield(const RayField& rays, int factor, const Tensor& projection);

// Re-expresses all poses relative to frame 0 (which becomes identity).
CameraTrajectory normalize_to_first_frame(const CameraTrajectory& traj);

// Mean geodesic rotation angle in degrees over frames k >= 1, after
// first-frame normalization of both trajectories.
double rotation_error_deg(const CameraTrajectory& a, const CameraTrajectory& b);

// Mean camera-center distance over frames k >= 1 after first-frame
// normalization and per-trajectory scale normalization (mean center norm 1).
double translation_error(const CameraTrajectory& a, const CameraTrajectory& b);

// Native DCAM-TRAJ v1 text format.
CameraTrajectory parse_trajectory(const std::string& text);
CameraTrajectory parse_trajectory_file(const std::string& path);
std::string serialize_trajectory(const CameraTrajectory& traj);
void write_trajectory_file(const CameraTrajectory& traj, const std::string& path);

// RE10K-style import: per line `timestamp fx fy cx cy 0 0 r11..t3` with
// normalized intrinsics and a world-to-camera 3x4 pose.
CameraTrajectory import_re10k(const std::string& text, int width, int height);

}  // namespace dcam::geom
