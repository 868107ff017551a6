#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fslam/raster/render.hpp"

namespace fslam {

// Per-Gaussian parameter gradients from a geometric render. Rotation
// gradients are with respect to the stored quaternion coefficients
// (w, x, y, z); the forward pass normalizes, so the normalization Jacobian is
// included. pose_twist is the gradient with respect to a left-multiplied
// twist [nu, omega] on the world-to-camera pose.
struct GeomGrads {
    std::vector<Eigen::Vector3d> mean;
    std::vector<Eigen::Vector3d> log_scale;
    std::vector<Eigen::Vector4d> rotation;
    std::vector<double> opacity_logit;
    std::vector<Eigen::Vector3d> color;
    Vec6 pose_twist = Vec6::Zero();
};

// Analytic reverse of the geometric pass. Replays the same front-to-back
// sweep (same early stop, clamp and cutoff), so gradients are exact for the
// function the forward pass actually computes. Untouched Gaussians get zeros.
GeomGrads backward_geometric(const SceneMap& map, const Pose& pose, const CameraIntrinsics& cam,
                             const RenderSettings& settings, const ImageD& grad_color,
                             const ImageD& grad_depth);

// Reverse of the feature pass with the recorded weights treated as constants:
// only feature vectors receive gradient. Returns a flat N x D array.
std::vector<double> backward_feature(const SceneMap& map, const TopKGrid& topk,
                                     const ImageD& grad_feature);

}  // namespace fslam
