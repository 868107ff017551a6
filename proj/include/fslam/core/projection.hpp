#pragma once

#include <Eigen/Dense>

#include "fslam/core/pose.hpp"
#include "fslam/core/types.hpp"

namespace fslam {

struct Projected2D {
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Zero();
    double depth = 0.0;  // camera-space z of the mean
    bool visible = false;
};

// Perspective projection of an anisotropic Gaussian: the mean is projected
// through the pinhole model and the covariance through the Jacobian of the
// projection at the mean, J * W * Sigma * W^T * J^T, keeping the top-left
// 2x2 block. cov2d_dilation (px^2) is added to the diagonal as a low-pass.
Projected2D project_gaussian(const Gaussian3D& g, const Pose& pose, const CameraIntrinsics& cam,
                             double cov2d_dilation = 0.3);

}  // namespace fslam
