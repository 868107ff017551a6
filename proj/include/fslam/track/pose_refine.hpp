#pragma once

#include "fslam/core/pose.hpp"
#include "fslam/core/types.hpp"
#include "fslam/map/losses.hpp"
#include "fslam/map/scene_map.hpp"
#include "fslam/raster/render.hpp"

namespace fslam {

struct RefineParams {
    RefineParams() { loss.l1_deadband = 2e-3; }  // 8-bit color quantization step

    int iterations = 50;
    double step_size = 1.5e-3;  // per-coordinate step, scene units / radians
    LossWeights loss;          // feature term is ignored; geometric terms only
    RenderSettings render;
};

// First-order descent on the geometric rendering loss over a left-multiplied
// twist, map parameters frozen. The best-visited pose is returned, so the
// loss never exceeds the input pose's; with no improving step the input pose
// comes back unchanged.
Pose refine_pose_photometric(const SceneMap& map, const Frame& frame, const CameraIntrinsics& cam,
                             const Pose& init, const RefineParams& params);

// The twist gradient of the geometric loss at `pose` (exposed for testing).
Vec6 pose_loss_gradient(const SceneMap& map, const Frame& frame, const CameraIntrinsics& cam,
                        const Pose& pose, const RefineParams& params, double* loss_out = nullptr);

}  // namespace fslam
