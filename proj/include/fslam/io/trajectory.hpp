#pragma once

#include <string>
#include <vector>

#include "fslam/core/pose.hpp"

namespace fslam {

struct TimedPose {
    double timestamp = 0.0;
    Pose pose;  // world-to-camera
};

using Trajectory = std::vector<TimedPose>;

// TUM trajectory format: "timestamp tx ty tz qx qy qz qw" per line, poses
// stored camera-to-world on disk. Lines starting with '#' are skipped.
void write_trajectory_tum(const Trajectory& trajectory, const std::string& path);
Trajectory read_trajectory_tum(const std::string& path);

}  // namespace fslam
