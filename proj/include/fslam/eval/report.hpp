#pragma once

#include <string>
#include <utility>
#include <vector>

namespace fslam {

struct MetricsReport {
    double ate_rmse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    double pixel_accuracy = 0.0;
    double miou = 0.0;
    std::size_t gaussian_count = 0;
    std::size_t keyframe_count = 0;
    std::size_t frame_count = 0;
    double trajectory_length = 0.0;
    std::vector<std::pair<std::string, double>> wall_times;  // stage -> seconds

    // key=value lines. Wall times are reported separately so metric reports
    // stay byte-stable across identical runs.
    std::string metrics_text() const;
    std::string timings_text() const;
};

}  // namespace fslam
