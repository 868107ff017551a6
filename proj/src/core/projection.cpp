#include "fslam/core/projection.hpp"

#include <cmath>

namespace fslam {

Projected2D project_gaussian(const Gaussian3D& g, const Pose& pose, const CameraIntrinsics& cam,
                             double cov2d_dilation) {
    Projected2D out;

    const Eigen::Matrix3d w = pose.rotation_matrix();
    const Eigen::Vector3d p = w * g.mean + pose.translation;
    const double z = p.z();
    if (!(z > cam.near_plane && z < cam.far_plane)) return out;  // visible stays false

    // The affine projection of the covariance breaks down once the camera
    // sits inside the gaussian's own extent: the footprint smears across the
    // whole image at a near-plane depth. Cull those.
    const double max_extent = 3.0 * std::exp(g.log_scale.maxCoeff());
    if (z <= max_extent) return out;

    out.depth = z;
    out.mean2d = {cam.fx * p.x() / z + cam.cx, cam.fy * p.y() / z + cam.cy};

    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx / z, 0.0, -cam.fx * p.x() / (z * z),
         0.0, cam.fy / z, -cam.fy * p.y() / (z * z);

    const Eigen::Matrix<double, 2, 3> a = j * w;
    out.cov2d = a * g.covariance() * a.transpose();
    out.cov2d(0, 0) += cov2d_dilation;
    out.cov2d(1, 1) += cov2d_dilation;
    out.visible = true;
    return out;
}

}  // namespace fslam
