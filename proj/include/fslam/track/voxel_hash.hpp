#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace fslam {

// Uniform voxel hash over a fixed point set. With cell size equal to the
// query radius, scanning the 3x3x3 neighborhood finds every point within
// that radius of the query.
class VoxelHash {
public:
    VoxelHash() = default;
    VoxelHash(const std::vector<Eigen::Vector3d>& points, double cell_size);

    // Nearest point within max_dist (<= cell size); returns -1 if none.
    int nearest(const Eigen::Vector3d& query, double max_dist, double* dist_out = nullptr) const;

    bool empty() const { return points_.empty(); }

private:
    static std::int64_t key(int x, int y, int z) {
        // Pack 21-bit signed coordinates.
        const auto m = [](int v) { return static_cast<std::int64_t>(v & 0x1FFFFF); };
        return m(x) | (m(y) << 21) | (m(z) << 42);
    }
    Eigen::Vector3i cell_of(const Eigen::Vector3d& p) const;

    std::vector<Eigen::Vector3d> points_;
    double cell_ = 1.0;
    std::unordered_map<std::int64_t, std::vector<std::int32_t>> cells_;
};

}  // namespace fslam
