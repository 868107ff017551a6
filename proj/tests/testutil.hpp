#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fslam/core/pose.hpp"
#include "fslam/core/types.hpp"
#include "fslam/map/scene_map.hpp"

namespace fslam::testutil {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

// Central differences with step h.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Random Gaussians spread through the frustum of an identity camera.
inline SceneMap random_scene(int count, int feature_dim, std::uint64_t seed,
                             double depth_min = 0.8, double depth_max = 6.0) {
    std::mt19937_64 rng(seed);
    SceneMap map;
    map.feature_dim = feature_dim;
    map.gaussians.reserve(count);
    for (int i = 0; i < count; ++i) {
        Gaussian3D g;
        const double z = uniform(rng, depth_min, depth_max);
        g.mean = {uniform(rng, -0.45, 0.45) * z, uniform(rng, -0.45, 0.45) * z, z};
        g.log_scale = {uniform(rng, -3.2, -1.6), uniform(rng, -3.2, -1.6), uniform(rng, -3.2, -1.6)};
        g.rotation = Eigen::Quaterniond(uniform(rng, -1, 1), uniform(rng, -1, 1),
                                        uniform(rng, -1, 1), uniform(rng, -1, 1))
                         .normalized();
        g.opacity_logit = uniform(rng, -1.5, 2.2);
        g.color = {uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95)};
        g.feature = Eigen::VectorXd::Zero(feature_dim);
        for (int c = 0; c < feature_dim; ++c) g.feature[c] = uniform(rng, -1, 1);
        g.feature.normalize();
        map.gaussians.push_back(std::move(g));
    }
    return map;
}

inline CameraIntrinsics test_camera(int width, int height, double focal = 0.0) {
    CameraIntrinsics cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = focal > 0.0 ? focal : 0.9 * width;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.near_plane = 0.05;
    cam.far_plane = 50.0;
    return cam;
}

// Unique scratch directory under the build tree, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("fslam_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

}  // namespace fslam::testutil
