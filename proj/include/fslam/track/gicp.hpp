#pragma once

#include <Eigen/Dense>
#include <limits>
#include <utility>
#include <vector>

#include "fslam/core/pose.hpp"
#include "fslam/core/types.hpp"
#include "fslam/map/scene_map.hpp"
#include "fslam/track/voxel_hash.hpp"

namespace fslam {

// One tracking-side primitive, backprojected from a depth pixel.
// Positions live in the camera frame; covariances are plane-regularized
// (eigenvalues replaced by 1, 1, epsilon).
struct SourcePoint {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
    Eigen::Vector2i pixel = Eigen::Vector2i::Zero();
    Eigen::VectorXd feature;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    double spacing = 0.0;  // local sample spacing at this depth, scene units
};

struct TrackParams {
    double tau_corr = 0.1;      // correspondence gate, scene units
    double tau_overlap = 0.05;  // overlap-counting radius
    int max_iterations = 30;
    double convergence_eps = 1e-6;
    int min_correspondences = 10;
    int knn_k = 10;             // neighbors for covariance estimation
    double plane_epsilon = 1e-3;
    bool step_halving = true;
};

struct TrackResult {
    Pose pose;  // world-to-camera
    std::vector<double> correspondence_distances;  // per source point, +inf if none
    double overlap_ratio = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<std::pair<double, double>> cost_history;  // (before, after) per iteration
};

// One point per valid depth pixel on the stride grid; covariances estimated
// from the k nearest neighbors when the cloud is large enough.
std::vector<SourcePoint> backproject_depth(const Frame& frame, const CameraIntrinsics& cam,
                                           int stride, int knn_k = 10, double plane_epsilon = 1e-3);

// Per-point neighborhood covariances with the plane prior: eigenvalues
// replaced by (1, 1, epsilon) in descending order. Throws if fewer than k+1
// points are given.
std::vector<Eigen::Matrix3d> estimate_covariances(const std::vector<Eigen::Vector3d>& points, int k,
                                                  double epsilon = 1e-3);

// Immutable tracking view of the map: means, regularized covariances and the
// nearest-neighbor index, rebuilt when the map generation changes.
struct TrackTarget {
    std::vector<Eigen::Vector3d> means;
    std::vector<Eigen::Matrix3d> covariances;
    VoxelHash index;
    std::uint64_t generation = 0;

    static TrackTarget from_map(const SceneMap& map, const TrackParams& params);
};

TrackResult gicp_align(const std::vector<SourcePoint>& source, const TrackTarget& target,
                       const Pose& init, const TrackParams& params);
TrackResult gicp_align(const std::vector<SourcePoint>& source, const SceneMap& map, const Pose& init,
                       const TrackParams& params);

inline bool keyframe_decision(const TrackResult& result, double threshold) {
    return result.overlap_ratio < threshold;
}

inline constexpr double kNoCorrespondence = std::numeric_limits<double>::infinity();

}  // namespace fslam
