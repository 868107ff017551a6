#pragma once

#include <cstdint>
#include <string>

#include "fslam/eval/report.hpp"
#include "fslam/io/trajectory.hpp"
#include "fslam/map/mapper.hpp"
#include "fslam/map/scene_map.hpp"
#include "fslam/synth/dataset.hpp"
#include "fslam/track/gicp.hpp"

namespace fslam {

enum class PipelineMode { kDeterministic, kConcurrent };

struct PipelineConfig {
    RenderSettings render;
    TrackParams track;
    int stride = 4;
    double keyframe_threshold = 0.8;
    int force_keyframe_period = 0;  // also keyframe every Nth frame when > 0

    LossWeights loss;
    GroupLearningRates lr;
    AdamParams adam;
    Schedule schedule;
    double tau_insert = 0.05;
    bool insertion_filter = true;      // redundancy-aware insertion on/off
    bool pruning = true;
    double opt_time_budget_ms = 0.0;   // per keyframe; 0 uses iterations_per_keyframe

    bool photometric_refine = false;
    int refine_iterations = 50;

    std::uint64_t seed = 1;
    PipelineMode mode = PipelineMode::kDeterministic;
    int threads = 0;          // 0 keeps the OpenMP default
    int snapshot_period = 10; // concurrent mode: steps between snapshot publishes
    int eval_stride = 1;      // evaluate every Nth keyframe
    bool save_renders = true;

    MapperConfig mapper_config(const CameraIntrinsics& cam) const;
};

// key=value application; throws on unknown keys, naming the key.
void apply_config_entry(PipelineConfig& config, const std::string& key, const std::string& value);
void load_config_file(PipelineConfig& config, const std::string& path);

struct PipelineResult {
    MetricsReport report;
    Trajectory trajectory;
    SceneMap map;
};

// Full SLAM run over a dataset directory. When out_dir is nonempty, writes
// trajectory.txt, checkpoint.bin, report.txt, timings.txt and per-keyframe
// renders there.
PipelineResult run_slam(const std::string& dataset_dir, const PipelineConfig& config,
                        const std::string& out_dir);

// Metrics for an existing map against a dataset (every eval_stride-th frame
// at its ground-truth pose). ATE is filled when an estimated trajectory is
// provided.
MetricsReport evaluate_map(const SceneMap& map, const DatasetReader& dataset,
                           const PipelineConfig& config, const Trajectory* estimated = nullptr);

}  // namespace fslam
