#include "fslam/map/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "fslam/core/ssim.hpp"

namespace fslam {

namespace {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct SoftL1 {
    double deadband;
    double value(double diff) const { return std::max(std::abs(diff) - deadband, 0.0); }
    double grad(double diff) const { return std::abs(diff) > deadband ? sign(diff) : 0.0; }
};

}  // namespace

LossResult compute_losses(const RenderOutput& render, const Frame& frame, const LossWeights& weights,
                          bool include_feature) {
    const int w = render.color.width, h = render.color.height;
    if (w != frame.color.width || h != frame.color.height || frame.color.channels != 3)
        throw std::invalid_argument("compute_losses: render/frame shape mismatch");
    if (frame.depth.width != w || frame.depth.height != h)
        throw std::invalid_argument("compute_losses: depth shape mismatch");

    LossResult out;
    out.grad_color = ImageD(w, h, 3);
    out.grad_depth = ImageD(w, h, 1);

    const SoftL1 soft{weights.l1_deadband};

    // Color: mean absolute difference over all pixels and channels.
    const double inv_color_n = 1.0 / (static_cast<double>(w) * h * 3.0);
    double l1_color = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double diff = render.color.at(x, y, c) - frame.color.at(x, y, c);
                l1_color += soft.value(diff);
                out.grad_color.at(x, y, c) = soft.grad(diff) * inv_color_n;
            }
    l1_color *= inv_color_n;

    double secondary = 0.0;
    if (weights.lambda1 != 0.0) {
        if (weights.color_secondary == ColorSecondaryTerm::kDssim) {
            ImageD gt_color = image_cast<double>(frame.color);
            ImageD grad_ssim;
            const double s = ssim_with_grad(render.color, gt_color, grad_ssim);
            secondary = 0.5 * (1.0 - s);
            const double scale = -0.5 * weights.lambda1;
            for (std::size_t i = 0; i < grad_ssim.data.size(); ++i)
                out.grad_color.data[i] =
                    (1.0 - weights.lambda1) * out.grad_color.data[i] + scale * grad_ssim.data[i];
        } else {
            // Duplicated-L1 reading: the mix collapses to plain L1, gradient unchanged.
            secondary = l1_color;
        }
    }

    // Depth: mean absolute difference over ground-truth-valid pixels.
    double l1_depth = 0.0;
    std::size_t depth_n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (frame.depth.at(x, y) > 0.0f) ++depth_n;
    if (depth_n > 0 && weights.lambda2 != 0.0) {
        const double inv_depth_n = 1.0 / static_cast<double>(depth_n);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!(frame.depth.at(x, y) > 0.0f)) continue;
                const double diff = render.depth.at(x, y) - frame.depth.at(x, y);
                l1_depth += soft.value(diff);
                out.grad_depth.at(x, y) = soft.grad(diff) * inv_depth_n;
            }
        l1_depth *= inv_depth_n;
    }

    out.values.geo = (1.0 - weights.lambda1) * l1_color + weights.lambda1 * secondary +
                     weights.lambda2 * l1_depth;

    // Feature: mean absolute difference over valid-and-covered pixels.
    double l1_feat = 0.0;
    if (include_feature) {
        if (render.feature.empty())
            throw std::invalid_argument("compute_losses: feature loss requested but render has no feature image");
        const int d = render.feature.channels;
        if (frame.feature.channels != d || frame.feature.width != w || frame.feature.height != h)
            throw std::invalid_argument("compute_losses: feature shape mismatch");
        out.grad_feature = ImageD(w, h, d);

        std::size_t feat_n = 0;
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (render.topk.count[render.topk.pixel(x, y)] == 0) continue;
                bool valid = false;
                for (int c = 0; c < d; ++c)
                    if (frame.feature.at(x, y, c) != 0.0f) { valid = true; break; }
                if (!valid) continue;
                mask[static_cast<std::size_t>(y) * w + x] = 1;
                ++feat_n;
            }
        if (feat_n > 0) {
            const double inv_feat_n = 1.0 / (static_cast<double>(feat_n) * d);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (!mask[static_cast<std::size_t>(y) * w + x]) continue;
                    for (int c = 0; c < d; ++c) {
                        const double diff = render.feature.at(x, y, c) - frame.feature.at(x, y, c);
                        l1_feat += std::abs(diff);
                        out.grad_feature.at(x, y, c) =
                            weights.lambda_feat * sign(diff) * inv_feat_n;
                    }
                }
            l1_feat *= inv_feat_n;
        }
    }
    out.values.feat = l1_feat;

    const double lf = include_feature ? weights.lambda_feat : 0.0;
    out.values.map = weights.lambda_geo * out.values.geo + lf * out.values.feat;

    // Fold lambda_geo into the geometric upstream gradients.
    for (double& v : out.grad_color.data) v *= weights.lambda_geo;
    for (double& v : out.grad_depth.data) v *= weights.lambda_geo * weights.lambda2;

    return out;
}

}  // namespace fslam
