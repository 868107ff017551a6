#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace fslam {

using Vec6 = Eigen::Matrix<double, 6, 1>;

// Rigid transform. Map poses are world-to-camera: x_cam = rotation * x_world + translation.
struct Pose {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
    Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }

    static Pose identity() { return {}; }
};

// (a o b)(x) = a(b(x))
Pose se3_compose(const Pose& a, const Pose& b);
Pose se3_inverse(const Pose& a);

// Exponential of a twist xi = [nu, omega] (translation part first).
Pose se3_exp(const Vec6& xi);

// Left-multiplied local update: exp(xi) o pose.
Pose se3_apply_twist(const Vec6& xi, const Pose& pose);

// Magnitudes of the relative motion a^-1 o b. Rotation in radians.
double rotation_distance(const Pose& a, const Pose& b);
double translation_distance(const Pose& a, const Pose& b);

}  // namespace fslam
