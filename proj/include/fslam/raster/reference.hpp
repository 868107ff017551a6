#pragma once

#include <utility>
#include <vector>

#include "fslam/raster/render.hpp"

namespace fslam {

// Serial brute-force renderer: every pixel walks every projected Gaussian in
// depth order, no tiles. Kept as the reference the tiled OpenMP path is
// checked and benchmarked against.
struct ReferenceRender {
    ImageD color;          // H x W x 3
    ImageD depth;          // H x W
    ImageD alpha;          // H x W, sum of blending weights
    ImageD transmittance;  // H x W, residual after the sweep
    ImageD feature_blend;  // H x W x D, sum of w_i * f_i over all contributors
    TopKGrid topk;
    std::vector<double> contributions;
    // Per-pixel (gaussian index, weight) contributor lists, filled when requested.
    std::vector<std::vector<std::pair<std::int32_t, double>>> records;
};

struct ReferenceOptions {
    bool with_features = false;
    bool keep_records = false;
};

ReferenceRender render_reference(const SceneMap& map, const Pose& pose, const CameraIntrinsics& cam,
                                 const RenderSettings& settings, const ReferenceOptions& opts = {});

}  // namespace fslam
