#include "fslam/map/optimizer.hpp"

#include <cmath>

namespace fslam {

namespace {

void compact_group(OptimizerState::Group& g, const std::vector<std::int32_t>& removed) {
    if (removed.empty()) return;
    const std::size_t n = g.m.size() / g.dim;
    std::size_t write = 0, r = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (r < removed.size() && static_cast<std::size_t>(removed[r]) == i) {
            ++r;
            continue;
        }
        if (write != i)
            for (int c = 0; c < g.dim; ++c) {
                g.m[write * g.dim + c] = g.m[i * g.dim + c];
                g.v[write * g.dim + c] = g.v[i * g.dim + c];
            }
        ++write;
    }
    g.m.resize(write * g.dim);
    g.v.resize(write * g.dim);
}

}  // namespace

void OptimizerState::extend(std::size_t count) {
    mean.extend(count);
    log_scale.extend(count);
    rotation.extend(count);
    opacity.extend(count);
    color.extend(count);
    feature.extend(count);
}

void OptimizerState::compact(const std::vector<std::int32_t>& removed) {
    compact_group(mean, removed);
    compact_group(log_scale, removed);
    compact_group(rotation, removed);
    compact_group(opacity, removed);
    compact_group(color, removed);
    compact_group(feature, removed);
}

void adam_step(OptimizerState::Group& group, const AdamParams& params, double lr,
               const double* grad, double* values, std::size_t count) {
    ++group.step;
    const double bc1 = 1.0 - std::pow(params.beta1, static_cast<double>(group.step));
    const double bc2 = 1.0 - std::pow(params.beta2, static_cast<double>(group.step));
    const std::size_t total = count * group.dim;
    for (std::size_t i = 0; i < total; ++i) {
        const double g = grad[i];
        group.m[i] = params.beta1 * group.m[i] + (1.0 - params.beta1) * g;
        group.v[i] = params.beta2 * group.v[i] + (1.0 - params.beta2) * g * g;
        const double mhat = group.m[i] / bc1;
        const double vhat = group.v[i] / bc2;
        values[i] -= lr * mhat / (std::sqrt(vhat) + params.eps);
    }
}

}  // namespace fslam
