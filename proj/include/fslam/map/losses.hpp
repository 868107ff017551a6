#pragma once

#include "fslam/core/image.hpp"
#include "fslam/core/types.hpp"
#include "fslam/raster/render.hpp"

namespace fslam {

enum class ColorSecondaryTerm { kDssim, kL1Duplicate };

struct LossWeights {
    double lambda_geo = 1.0;
    double lambda_feat = 1.0;
    double lambda1 = 0.2;   // mix between the two color terms
    double lambda2 = 1.0;   // depth weight
    ColorSecondaryTerm color_secondary = ColorSecondaryTerm::kDssim;
    // Soft threshold on the color/depth L1 terms: residuals below this
    // contribute nothing and carry no gradient. Pose refinement sets it to
    // the sensor quantization step so flat-region noise cannot drown the
    // real signal; zero keeps the plain L1.
    double l1_deadband = 0.0;
};

struct LossValues {
    double map = 0.0;
    double geo = 0.0;
    double feat = 0.0;
};

struct LossResult {
    LossValues values;
    ImageD grad_color;    // d(map)/d(rendered color)
    ImageD grad_depth;    // d(map)/d(rendered depth)
    ImageD grad_feature;  // d(map)/d(rendered feature), empty when features excluded
};

// Geometric term: (1 - lambda1) * L1(color) + lambda1 * secondary(color)
// + lambda2 * L1(depth) over ground-truth-valid depth pixels.
// Feature term: L1 over pixels that are both ground-truth valid and covered
// by the render. include_feature=false treats lambda_feat as zero and leaves
// grad_feature empty. Throws on shape mismatch.
LossResult compute_losses(const RenderOutput& render, const Frame& frame, const LossWeights& weights,
                          bool include_feature);

}  // namespace fslam
