#include "fslam/core/pose.hpp"

#include <cmath>

namespace fslam {

Pose se3_compose(const Pose& a, const Pose& b) {
    Pose out;
    out.rotation = (a.rotation * b.rotation).normalized();
    out.translation = a.rotation * b.translation + a.translation;
    return out;
}

Pose se3_inverse(const Pose& a) {
    Pose out;
    out.rotation = a.rotation.conjugate();
    out.translation = -(out.rotation * a.translation);
    return out;
}

Pose se3_exp(const Vec6& xi) {
    const Eigen::Vector3d nu = xi.head<3>();
    const Eigen::Vector3d omega = xi.tail<3>();
    const double theta = omega.norm();

    Pose out;
    if (theta < 1e-12) {
        out.rotation = Eigen::Quaterniond::Identity();
        out.translation = nu;
        return out;
    }

    out.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(theta, omega / theta));

    Eigen::Matrix3d hat;
    hat << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(), omega.x(), 0;
    const double t2 = theta * theta;
    double a, b;
    if (theta < 1e-4) {
        a = 0.5 - t2 / 24.0;
        b = 1.0 / 6.0 - t2 / 120.0;
    } else {
        a = (1.0 - std::cos(theta)) / t2;
        b = (theta - std::sin(theta)) / (t2 * theta);
    }
    const Eigen::Matrix3d v = Eigen::Matrix3d::Identity() + a * hat + b * hat * hat;
    out.translation = v * nu;
    return out;
}

Pose se3_apply_twist(const Vec6& xi, const Pose& pose) { return se3_compose(se3_exp(xi), pose); }

double rotation_distance(const Pose& a, const Pose& b) {
    const double dot = std::abs(a.rotation.normalized().dot(b.rotation.normalized()));
    return 2.0 * std::acos(std::min(1.0, dot));
}

double translation_distance(const Pose& a, const Pose& b) {
    // Compare camera centers: c = -R^T t.
    const Eigen::Vector3d ca = -(a.rotation.conjugate() * a.translation);
    const Eigen::Vector3d cb = -(b.rotation.conjugate() * b.translation);
    return (ca - cb).norm();
}

}  // namespace fslam
