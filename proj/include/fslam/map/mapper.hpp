#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fslam/map/losses.hpp"
#include "fslam/map/optimizer.hpp"
#include "fslam/map/scene_map.hpp"
#include "fslam/raster/render.hpp"
#include "fslam/track/gicp.hpp"

namespace fslam {

struct Schedule {
    int feature_update_period = 5;  // geometry every step, features every Nth
    int prune_period = 500;
    double prune_keep_ratio = 0.5;  // fraction of the candidate set kept alive
    int topk_count_threshold = 0;   // candidate iff topk_count <= threshold
    int iterations_per_keyframe = 100;
};

struct MapperConfig {
    RenderSettings render;
    LossWeights loss;
    GroupLearningRates lr;
    AdamParams adam;
    Schedule schedule;
    CameraIntrinsics cam;
    double tau_insert = 0.05;
    double min_log_scale = -10.0;
    double max_log_scale = 1.0;
    bool insertion_filter = true;  // skip source points already represented nearby
    bool pruning = true;
};

// Inserts one Gaussian per source point whose correspondence distance is
// >= tau_insert (pass infinities to insert everything). Positions are moved
// to the world frame through the inverse of `world_to_camera`. Returns the
// number inserted; bumps the generation and extends the optimizer state.
int insert_gaussians(SceneMap& map, OptimizerState& opt, const std::vector<SourcePoint>& source,
                     const std::vector<double>& distances, double tau_insert,
                     const Pose& world_to_camera);

// Folds a render's Top-K selections and peak weights into the per-Gaussian
// statistics. Throws if the render came from another generation.
void update_contribution_stats(SceneMap& map, const RenderOutput& render);

// Two-stage prune. Candidates are Gaussians with topk_count <=
// topk_count_threshold; ceil(keep_ratio * candidates) survive, sampled
// without replacement proportionally to max_contribution. If all candidate
// scores are zero the prune is skipped. Survivor statistics reset; optimizer
// state compacted in lockstep. Returns the removed indices (ascending).
std::vector<std::int32_t> prune_map(SceneMap& map, OptimizerState& opt, double keep_ratio,
                                    std::uint64_t seed, int topk_count_threshold);

struct StepRecord {
    std::int64_t iteration = 0;
    LossValues losses;
    bool feature_step = false;
    int keyframe = -1;
    std::size_t pruned = 0;
    std::size_t gaussian_count = 0;
};

// One optimization step: sample a keyframe, render, backpropagate, Adam
// update per parameter group (features only on feature steps), renormalize,
// accumulate statistics, and prune on schedule.
StepRecord optimize_step(SceneMap& map, OptimizerState& opt, const MapperConfig& cfg,
                         std::int64_t iteration, std::mt19937_64& rng);

}  // namespace fslam
