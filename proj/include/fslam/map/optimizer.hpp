#pragma once

#include <cstdint>
#include <vector>

namespace fslam {

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct GroupLearningRates {
    double mean = 2e-3;
    double log_scale = 5e-3;
    double rotation = 1e-3;
    double opacity = 5e-2;
    double color = 2e-2;
    double feature = 1e-2;
};

// Per-parameter-group moment accumulators, kept in lockstep with the map's
// Gaussian list: extend() on insertion, compact() on pruning.
struct OptimizerState {
    struct Group {
        explicit Group(int d = 1) : dim(d) {}

        int dim;
        std::int64_t step = 0;
        std::vector<double> m, v;

        void extend(std::size_t count) {
            m.resize(m.size() + count * dim, 0.0);
            v.resize(v.size() + count * dim, 0.0);
        }
    };

    Group mean{3}, log_scale{3}, rotation{4}, opacity{1}, color{3}, feature{0};

    explicit OptimizerState(int feature_dim = 0) { feature.dim = feature_dim; }

    std::size_t size() const { return opacity.m.size(); }

    void extend(std::size_t count);
    // removed: ascending, unique indices into the pre-compaction list
    void compact(const std::vector<std::int32_t>& removed);
};

// One Adam update over a flat parameter block; grad and params are
// group.dim-strided per Gaussian.
void adam_step(OptimizerState::Group& group, const AdamParams& params, double lr,
               const double* grad, double* values, std::size_t count);

}  // namespace fslam
