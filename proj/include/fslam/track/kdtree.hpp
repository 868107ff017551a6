#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fslam {

// Minimal 3D kd-tree for k-nearest-neighbor queries over a fixed point set.
class KdTree3 {
public:
    explicit KdTree3(const std::vector<Eigen::Vector3d>& points);

    // Indices of the k nearest points to `query` (including an identical
    // point), ordered by ascending distance.
    std::vector<int> knn(const Eigen::Vector3d& query, int k) const;

    std::size_t size() const { return points_.size(); }

private:
    struct Node {
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf range into order_
        int axis = -1;
        double split = 0.0;
    };

    int build(int begin, int end, int depth);

    std::vector<Eigen::Vector3d> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace fslam
