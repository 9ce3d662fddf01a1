#pragma once

#include <array>
#include <string>
#include <vector>

#include "dualcam/camera.hpp"
#include "dualcam/codec.hpp"

namespace dcam::scene {

struct Sphere {
    geom::Vec3 center;
    double radius = 1.0;
    geom::Vec3 albedo_a{0.8, 0.3, 0.3};
    geom::Vec3 albedo_b{0.8, 0.3, 0.3};
    double checker_period = 0;  // <= 0: solid color
};

// Finite axis-aligned rectangle; `axis` is the normal direction (0=x,1=y,2=z).
struct Plane {
    geom::Vec3 center;
    int axis = 1;
    double half_u = 10, half_v = 10;
    geom::Vec3 albedo_a{0.75, 0.75, 0.75};
    geom::Vec3 albedo_b{0.25, 0.25, 0.25};
    double checker_period = 1.0;
};

struct SceneSpec {
    std::vector<Sphere> spheres;
    std::vector<Plane> planes;
    geom::Vec3 light_dir{0.3, 0.9, -0.3};  // toward the light, normalized on use
    geom::Vec3 background{0.55, 0.65, 0.8};
    double far_plane = 20.0;
    std::string descriptor = "empty_room";

    void validate() const;
};

struct RenderedClip {
    codec::VideoTensor rgb;  // T x 3 x H x W in [-1, 1]
    Tensor depth;            // T x 1 x H x W camera-frame z; misses get far_plane
    geom::CameraTrajectory trajectory;
    std::string descriptor;
};

enum class TrajKind { orbit, dolly, pan, truck };
TrajKind traj_kind_from_name(const std::string& name);
const char* traj_kind_name(TrajKind k);

struct TrajParams {
    geom::Vec3 start{0, 1.2, -3.5};
    geom::Vec3 target{0, 0.6, 0};
    double total_angle_deg = 60;  // orbit / pan; advances total/frames per frame
    double total_distance = 1.0;  // dolly / truck
};

// Camera-to-world pose looking from `pos` toward `target` with +y as the
// world up direction (camera y points down, z forward).
geom::Pose look_at(const geom::Vec3& pos, const geom::Vec3& target);

geom::CameraTrajectory make_trajectory(TrajKind kind, const TrajParams& params, int frames,
                                       const geom::Intrinsics& intr, int width, int height);

// Keeps every `step`-th pose starting at frame 0.
geom::CameraTrajectory subsample_trajectory(const geom::CameraTrajectory& traj, int step);

// Primary-ray render of one frame. rgb is 3 x H x W in [-1, 1]; depth
// (optional) is H x W.
void render_frame(const SceneSpec& scene, const geom::Pose& pose, const geom::Intrinsics& intr,
                  int H, int W, double* rgb, double* depth);

RenderedClip render_clip(const SceneSpec& scene, const geom::CameraTrajectory& traj, int H,
                         int W);

std::string serialize_scene(const SceneSpec& scene);
SceneSpec parse_scene(const std::string& text);

// Fixed descriptor vocabulary for text conditioning.
const std::vector<std::string>& descriptor_vocab();
int descriptor_id(const std::string& tag);

// Seeded dataset of rendered clips: <root>/<clip_id>/frame_%04d.png,
// depth_%04d.png (16-bit), trajectory.txt, scene.txt, plus manifest.txt.
void make_dataset(const std::string& root, int n_clips, int frames, int H, int W, uint64_t seed);

}  // namespace dcam::scene
