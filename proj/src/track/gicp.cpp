#include "fslam/track/gicp.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fslam/track/kdtree.hpp"

namespace fslam {

std::vector<Eigen::Matrix3d> estimate_covariances(const std::vector<Eigen::Vector3d>& points, int k,
                                                  double epsilon) {
    const int n = static_cast<int>(points.size());
    if (n < k + 1)
        throw std::invalid_argument("estimate_covariances: need at least k+1 points, got " +
                                    std::to_string(n));

    const KdTree3 tree(points);
    std::vector<Eigen::Matrix3d> out(n);

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const std::vector<int> nn = tree.knn(points[i], k + 1);  // includes the point itself
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (const int j : nn) mean += points[j];
        mean /= static_cast<double>(nn.size());

        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const int j : nn) {
            const Eigen::Vector3d d = points[j] - mean;
            cov += d * d.transpose();
        }
        cov /= static_cast<double>(nn.size());

        // Plane prior: keep the eigenvectors, replace eigenvalues by (1,1,eps).
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        const Eigen::Matrix3d v = eig.eigenvectors();  // ascending eigenvalues
        const Eigen::Vector3d lam(epsilon, 1.0, 1.0);
        out[i] = v * lam.asDiagonal() * v.transpose();
    }
    return out;
}

std::vector<SourcePoint> backproject_depth(const Frame& frame, const CameraIntrinsics& cam,
                                           int stride, int knn_k, double plane_epsilon) {
    std::vector<SourcePoint> out;
    const int d = frame.feature.channels;
    for (int y = 0; y < frame.depth.height; y += stride) {
        for (int x = 0; x < frame.depth.width; x += stride) {
            const double depth = frame.depth.at(x, y);
            if (!(depth > 0.0)) continue;
            SourcePoint p;
            p.position = {depth * (x - cam.cx) / cam.fx, depth * (y - cam.cy) / cam.fy, depth};
            p.pixel = {x, y};
            p.color = {frame.color.at(x, y, 0), frame.color.at(x, y, 1), frame.color.at(x, y, 2)};
            if (d > 0) {
                p.feature.resize(d);
                for (int c = 0; c < d; ++c) p.feature[c] = frame.feature.at(x, y, c);
            }
            p.spacing = depth * stride / cam.fx;
            out.push_back(std::move(p));
        }
    }

    if (static_cast<int>(out.size()) >= knn_k + 1) {
        std::vector<Eigen::Vector3d> positions(out.size());
        for (std::size_t i = 0; i < out.size(); ++i) positions[i] = out[i].position;
        const std::vector<Eigen::Matrix3d> covs =
            estimate_covariances(positions, knn_k, plane_epsilon);
        for (std::size_t i = 0; i < out.size(); ++i) out[i].covariance = covs[i];
    }
    return out;
}

TrackTarget TrackTarget::from_map(const SceneMap& map, const TrackParams& params) {
    TrackTarget t;
    t.generation = map.generation;
    t.means.reserve(map.size());
    t.covariances.reserve(map.size());
    for (const Gaussian3D& g : map.gaussians) {
        t.means.push_back(g.mean);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(g.covariance());
        const Eigen::Matrix3d v = eig.eigenvectors();
        const Eigen::Vector3d lam(params.plane_epsilon, 1.0, 1.0);
        t.covariances.push_back(v * lam.asDiagonal() * v.transpose());
    }
    t.index = VoxelHash(t.means, params.tau_corr);
    return t;
}

namespace {

struct Correspondence {
    int source = -1;
    int target = -1;
};

double gicp_cost(const std::vector<SourcePoint>& source, const TrackTarget& target,
                 const std::vector<Correspondence>& corr, const Pose& cam_to_world) {
    const Eigen::Matrix3d r = cam_to_world.rotation_matrix();
    double cost = 0.0;
    for (const Correspondence& c : corr) {
        const Eigen::Vector3d p = cam_to_world.apply(source[c.source].position);
        const Eigen::Vector3d d = p - target.means[c.target];
        const Eigen::Matrix3d m =
            (target.covariances[c.target] + r * source[c.source].covariance * r.transpose())
                .inverse();
        cost += d.dot(m * d);
    }
    return cost;
}

}  // namespace

TrackResult gicp_align(const std::vector<SourcePoint>& source, const TrackTarget& target,
                       const Pose& init, const TrackParams& params) {
    TrackResult result;
    result.pose = init;

    Pose x = se3_inverse(init);  // camera-to-world, the variable we iterate on
    const int n = static_cast<int>(source.size());

    std::vector<Correspondence> corr;
    corr.reserve(n);
    bool failed = false;

    for (int iter = 0; iter < params.max_iterations; ++iter) {
        // Re-associate under the current pose.
        corr.clear();
        for (int i = 0; i < n; ++i) {
            const Eigen::Vector3d p = x.apply(source[i].position);
            const int j = target.index.nearest(p, params.tau_corr);
            if (j >= 0) corr.push_back({i, j});
        }
        if (static_cast<int>(corr.size()) < params.min_correspondences) {
            failed = true;
            break;
        }

        const Eigen::Matrix3d r = x.rotation_matrix();
        Eigen::Matrix<double, 6, 6> hess = Eigen::Matrix<double, 6, 6>::Zero();
        Vec6 grad = Vec6::Zero();
        double cost_before = 0.0;
        for (const Correspondence& c : corr) {
            const Eigen::Vector3d p = x.apply(source[c.source].position);
            const Eigen::Vector3d d = p - target.means[c.target];
            const Eigen::Matrix3d m =
                (target.covariances[c.target] + r * source[c.source].covariance * r.transpose())
                    .inverse();
            cost_before += d.dot(m * d);

            Eigen::Matrix<double, 3, 6> j;
            j.leftCols<3>() = Eigen::Matrix3d::Identity();
            j.rightCols<3>() << 0, p.z(), -p.y(), -p.z(), 0, p.x(), p.y(), -p.x(), 0;  // -[p]x
            const Eigen::Matrix<double, 3, 6> mj = m * j;
            hess += j.transpose() * mj;
            grad += mj.transpose() * d;
        }

        Vec6 delta = -hess.ldlt().solve(grad);
        double step = 1.0;
        Pose x_new = se3_apply_twist(step * delta, x);
        double cost_after = gicp_cost(source, target, corr, x_new);
        if (params.step_halving) {
            while (cost_after > cost_before && step > 1e-10) {
                step *= 0.5;
                x_new = se3_apply_twist(step * delta, x);
                cost_after = gicp_cost(source, target, corr, x_new);
            }
            if (cost_after > cost_before) {  // no improving step along delta
                result.cost_history.emplace_back(cost_before, cost_before);
                result.iterations = iter + 1;
                break;
            }
        }
        x = x_new;
        result.cost_history.emplace_back(cost_before, cost_after);
        result.iterations = iter + 1;
        if ((step * delta).norm() < params.convergence_eps) break;
    }

    result.converged = !failed;
    result.pose = failed ? init : se3_inverse(x);

    // Final distances under the returned pose, reused downstream for
    // redundancy-aware insertion.
    const Pose final_x = se3_inverse(result.pose);
    result.correspondence_distances.assign(n, kNoCorrespondence);
    int overlapping = 0;
    for (int i = 0; i < n; ++i) {
        double dist = 0.0;
        const int j = target.index.nearest(final_x.apply(source[i].position), params.tau_corr, &dist);
        if (j >= 0) {
            result.correspondence_distances[i] = dist;
            if (dist < params.tau_overlap) ++overlapping;
        }
    }
    result.overlap_ratio = n > 0 ? static_cast<double>(overlapping) / n : 0.0;
    return result;
}

TrackResult gicp_align(const std::vector<SourcePoint>& source, const SceneMap& map, const Pose& init,
                       const TrackParams& params) {
    return gicp_align(source, TrackTarget::from_map(map, params), init, params);
}

}  // namespace fslam
