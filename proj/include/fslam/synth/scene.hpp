#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fslam/core/pose.hpp"
#include "fslam/core/types.hpp"

namespace fslam {

struct SceneSpec {
    Eigen::Vector3d room_min{-2.0, -2.0, 0.0};
    Eigen::Vector3d room_max{2.0, 2.0, 2.5};
    int classes = 4;
    int feature_dim = 16;
    double spacing = 0.05;  // Gaussian grid spacing on surfaces, scene units
    double jitter = 0.2;    // positional jitter, fraction of spacing
    double opacity = 0.95;
    int boxes = 3;  // interior obstacles; they also make every view distinctive
    std::uint64_t seed = 1;
};

// Ground-truth scene: flat surface-aligned Gaussians, one class per surface
// kind, features set exactly to the (orthonormal) class embeddings.
struct SyntheticScene {
    std::vector<Gaussian3D> gaussians;
    std::vector<std::uint8_t> class_ids;  // per Gaussian
    Eigen::MatrixXd embeddings;           // C x D, orthonormal rows
    std::vector<std::string> class_names;
    SceneSpec spec;
};

// Deterministic per seed. Throws if feature_dim < classes.
SyntheticScene build_synthetic_scene(const SceneSpec& spec);

enum class TrajectoryKind { kOrbit, kLawnmower };

// Orbit: a circle inside the room looking at the room center, azimuth spread
// evenly over the full turn. Lawnmower: a serpentine sweep at constant
// attitude between opposing corners.
std::vector<Pose> generate_trajectory(TrajectoryKind kind, int n, const SceneSpec& spec);

// Renders color/depth/feature/label frames with single-record selection for
// labels: each covered pixel takes the class of its strongest contributor and
// exactly that class's embedding. Uncovered pixels get depth 0, zero feature
// and the invalid label.
std::vector<Frame> render_ground_truth(const SyntheticScene& scene, const std::vector<Pose>& poses,
                                       const CameraIntrinsics& cam, double fps = 30.0);

// Additive Gaussian noise on valid depth pixels, deterministic per seed.
void add_depth_noise(std::vector<Frame>& frames, double sigma, std::uint64_t seed);

}  // namespace fslam
