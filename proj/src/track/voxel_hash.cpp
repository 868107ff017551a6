#include "fslam/track/voxel_hash.hpp"

#include <cmath>
#include <limits>

namespace fslam {

VoxelHash::VoxelHash(const std::vector<Eigen::Vector3d>& points, double cell_size)
    : points_(points), cell_(cell_size) {
    cells_.reserve(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const Eigen::Vector3i c = cell_of(points_[i]);
        cells_[key(c.x(), c.y(), c.z())].push_back(static_cast<std::int32_t>(i));
    }
}

Eigen::Vector3i VoxelHash::cell_of(const Eigen::Vector3d& p) const {
    return {static_cast<int>(std::floor(p.x() / cell_)), static_cast<int>(std::floor(p.y() / cell_)),
            static_cast<int>(std::floor(p.z() / cell_))};
}

int VoxelHash::nearest(const Eigen::Vector3d& query, double max_dist, double* dist_out) const {
    const Eigen::Vector3i c = cell_of(query);
    double best_d2 = max_dist * max_dist;
    int best = -1;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const auto it = cells_.find(key(c.x() + dx, c.y() + dy, c.z() + dz));
                if (it == cells_.end()) continue;
                for (const std::int32_t idx : it->second) {
                    const double d2 = (points_[idx] - query).squaredNorm();
                    if (d2 < best_d2 || (d2 == best_d2 && best >= 0 && idx < best)) {
                        best_d2 = d2;
                        best = idx;
                    }
                }
            }
    if (best >= 0 && dist_out) *dist_out = std::sqrt(best_d2);
    return best;
}

}  // namespace fslam
