#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <cstdint>

#include "fslam/core/image.hpp"

namespace fslam {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct CameraIntrinsics {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;
    double near_plane = 0.05;
    double far_plane = 100.0;
};

// One map primitive. Scale is stored as log-extents so the covariance stays
// positive definite under unconstrained updates; opacity is stored as a logit.
struct Gaussian3D {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    double opacity_logit = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    Eigen::VectorXd feature;  // unit L2 norm

    // Selection/contribution statistics, reset at each prune.
    int topk_count = 0;
    double max_contribution = 0.0;

    double opacity() const { return logistic(opacity_logit); }
    Eigen::Vector3d scale() const { return log_scale.array().exp(); }
    Eigen::Matrix3d covariance() const {
        Eigen::Matrix3d r = rotation.normalized().toRotationMatrix();
        Eigen::Vector3d s2 = (2.0 * log_scale).array().exp();
        return r * s2.asDiagonal() * r.transpose();
    }
};

inline constexpr std::uint8_t kInvalidLabel = 255;

// One timestamped observation. All images share H x W.
// Depth 0 and zero feature vectors mark invalid pixels.
struct Frame {
    double timestamp = 0.0;
    ImageF color;    // H x W x 3, values in [0,1]
    ImageF depth;    // H x W, scene units
    ImageF feature;  // H x W x D, unit rows where valid
    ImageU8 label;   // H x W, optional (empty when absent), kInvalidLabel = invalid
};

}  // namespace fslam
