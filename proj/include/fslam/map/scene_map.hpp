#pragma once

#include <cstdint>
#include <vector>

#include "fslam/core/pose.hpp"
#include "fslam/core/types.hpp"

namespace fslam {

struct Keyframe {
    Frame frame;
    Pose pose;  // world-to-camera at insertion, refined in place later
};

// The mutable Gaussian set plus pruning bookkeeping. `generation` is bumped
// on every structural mutation; Top-K records are only valid against the
// generation they were rendered from.
struct SceneMap {
    std::vector<Gaussian3D> gaussians;
    std::uint64_t generation = 0;
    std::vector<Keyframe> keyframes;
    int feature_dim = 0;  // fixed by the first insertion

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
};

}  // namespace fslam
