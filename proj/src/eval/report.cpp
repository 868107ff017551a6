#include "fslam/eval/report.hpp"

#include <cstdio>

namespace fslam {

namespace {

void kv(std::string& out, const char* key, double value) {
    char line[128];
    std::snprintf(line, sizeof(line), "%s=%.9g\n", key, value);
    out += line;
}

void kv(std::string& out, const char* key, std::size_t value) {
    char line[128];
    std::snprintf(line, sizeof(line), "%s=%zu\n", key, value);
    out += line;
}

}  // namespace

std::string MetricsReport::metrics_text() const {
    std::string out;
    kv(out, "ate_rmse", ate_rmse);
    kv(out, "psnr", psnr);
    kv(out, "ssim", ssim);
    kv(out, "pixel_accuracy", pixel_accuracy);
    kv(out, "miou", miou);
    kv(out, "gaussian_count", gaussian_count);
    kv(out, "keyframe_count", keyframe_count);
    kv(out, "frame_count", frame_count);
    kv(out, "trajectory_length", trajectory_length);
    return out;
}

std::string MetricsReport::timings_text() const {
    std::string out;
    for (const auto& [stage, seconds] : wall_times) kv(out, ("time_" + stage + "_s").c_str(), seconds);
    return out;
}

}  // namespace fslam
