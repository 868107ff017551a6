#pragma once

#include <Eigen/Dense>

#include "fslam/core/image.hpp"
#include "fslam/core/ssim.hpp"
#include "fslam/core/types.hpp"
#include "fslam/io/trajectory.hpp"

namespace fslam {

// Absolute trajectory error: associate by nearest timestamp (within max_dt),
// rigidly align the estimated camera centers to the ground truth (closed
// form, scale fixed to 1) unless align=false, then RMSE over translational
// residuals. Throws with fewer than 3 associated pairs.
double ate_rmse(const Trajectory& estimated, const Trajectory& groundtruth, bool align = true,
                double max_dt = 0.02);

// Peak signal-to-noise ratio for unit-range images, capped at 99 dB.
double psnr(const ImageD& a, const ImageD& b);

// Per-pixel argmax of cosine similarity against the class embeddings
// (C x D, unit rows). Zero-feature pixels map to the invalid label.
ImageU8 segment_by_query(const ImageD& feature, const Eigen::MatrixXd& embeddings);

struct SemanticMetrics {
    double accuracy = 0.0;
    double miou = 0.0;
};

// Pixel accuracy over ground-truth-valid pixels and mean IoU over classes
// present in either prediction or ground truth.
SemanticMetrics semantic_metrics(const ImageU8& pred, const ImageU8& gt);

// Confusion accumulation across frames for aggregate metrics.
class SemanticAccumulator {
public:
    explicit SemanticAccumulator(int classes);
    void add(const ImageU8& pred, const ImageU8& gt);
    SemanticMetrics result() const;

private:
    int classes_;
    std::vector<std::int64_t> intersection_, pred_count_, gt_count_;
    std::int64_t correct_ = 0, valid_ = 0;
};

}  // namespace fslam
