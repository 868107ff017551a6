#include "fslam/eval/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fslam/eval/metrics.hpp"
#include "fslam/io/png_io.hpp"
#include "fslam/map/checkpoint.hpp"
#include "fslam/raster/render.hpp"
#include "fslam/track/pose_refine.hpp"

namespace fs = std::filesystem;

namespace fslam {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw std::invalid_argument("config: expected a boolean, got '" + v + "'");
}

ImageD frame_color_as_double(const Frame& frame) { return image_cast<double>(frame.color); }

}  // namespace

MapperConfig PipelineConfig::mapper_config(const CameraIntrinsics& cam) const {
    MapperConfig m;
    m.render = render;
    m.loss = loss;
    m.lr = lr;
    m.adam = adam;
    m.schedule = schedule;
    m.cam = cam;
    m.tau_insert = tau_insert;
    m.insertion_filter = insertion_filter;
    m.pruning = pruning;
    return m;
}

void apply_config_entry(PipelineConfig& c, const std::string& key, const std::string& value) {
    // Rendering
    if (key == "top_k") c.render.top_k = std::stoi(value);
    else if (key == "transmittance_floor") c.render.transmittance_floor = std::stod(value);
    else if (key == "tile_size") c.render.tile_size = std::stoi(value);
    else if (key == "cov2d_dilation") c.render.cov2d_dilation = std::stod(value);
    else if (key == "background") {
        const auto comma1 = value.find(',');
        const auto comma2 = value.rfind(',');
        if (comma1 == std::string::npos || comma2 == comma1)
            throw std::invalid_argument("config: background expects r,g,b");
        c.render.background = {std::stod(value.substr(0, comma1)),
                               std::stod(value.substr(comma1 + 1, comma2 - comma1 - 1)),
                               std::stod(value.substr(comma2 + 1))};
    }
    // Tracking
    else if (key == "tau_corr") c.track.tau_corr = std::stod(value);
    else if (key == "tau_overlap") c.track.tau_overlap = std::stod(value);
    else if (key == "gicp_max_iterations") c.track.max_iterations = std::stoi(value);
    else if (key == "knn_k") c.track.knn_k = std::stoi(value);
    else if (key == "stride") c.stride = std::stoi(value);
    else if (key == "keyframe_threshold") c.keyframe_threshold = std::stod(value);
    else if (key == "force_keyframe_period") c.force_keyframe_period = std::stoi(value);
    // Losses
    else if (key == "lambda_geo") c.loss.lambda_geo = std::stod(value);
    else if (key == "lambda_feat") c.loss.lambda_feat = std::stod(value);
    else if (key == "lambda1") c.loss.lambda1 = std::stod(value);
    else if (key == "lambda2") c.loss.lambda2 = std::stod(value);
    else if (key == "color_secondary") {
        if (value == "dssim") c.loss.color_secondary = ColorSecondaryTerm::kDssim;
        else if (value == "l1") c.loss.color_secondary = ColorSecondaryTerm::kL1Duplicate;
        else throw std::invalid_argument("config: color_secondary expects dssim|l1");
    }
    // Learning rates
    else if (key == "lr_mean") c.lr.mean = std::stod(value);
    else if (key == "lr_log_scale") c.lr.log_scale = std::stod(value);
    else if (key == "lr_rotation") c.lr.rotation = std::stod(value);
    else if (key == "lr_opacity") c.lr.opacity = std::stod(value);
    else if (key == "lr_color") c.lr.color = std::stod(value);
    else if (key == "lr_feature") c.lr.feature = std::stod(value);
    // Schedule / map management
    else if (key == "feature_update_period") c.schedule.feature_update_period = std::stoi(value);
    else if (key == "prune_period") c.schedule.prune_period = std::stoi(value);
    else if (key == "prune_keep_ratio") c.schedule.prune_keep_ratio = std::stod(value);
    else if (key == "topk_count_threshold") c.schedule.topk_count_threshold = std::stoi(value);
    else if (key == "iterations_per_keyframe") c.schedule.iterations_per_keyframe = std::stoi(value);
    else if (key == "tau_insert") c.tau_insert = std::stod(value);
    else if (key == "insertion_filter") c.insertion_filter = parse_bool(value);
    else if (key == "pruning") c.pruning = parse_bool(value);
    else if (key == "opt_time_budget_ms") c.opt_time_budget_ms = std::stod(value);
    // Refinement
    else if (key == "photometric_refine") c.photometric_refine = parse_bool(value);
    else if (key == "refine_iterations") c.refine_iterations = std::stoi(value);
    // Driver
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "mode") {
        if (value == "deterministic") c.mode = PipelineMode::kDeterministic;
        else if (value == "concurrent") c.mode = PipelineMode::kConcurrent;
        else throw std::invalid_argument("config: mode expects deterministic|concurrent");
    }
    else if (key == "threads") c.threads = std::stoi(value);
    else if (key == "snapshot_period") c.snapshot_period = std::stoi(value);
    else if (key == "eval_stride") c.eval_stride = std::stoi(value);
    else if (key == "save_renders") c.save_renders = parse_bool(value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void load_config_file(PipelineConfig& config, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: malformed line " + std::to_string(lineno) + " in " +
                                     path + ": " + line);
        apply_config_entry(config, line.substr(0, eq), line.substr(eq + 1));
    }
}

namespace {

struct KeyframePacket {
    int frame_index = -1;
    Frame frame;
    Pose pose;
    std::vector<SourcePoint> source;
    std::vector<double> distances;
};

// Shared pipeline state for one run.
struct Engine {
    const PipelineConfig& config;
    CameraIntrinsics cam;
    MapperConfig mapper_cfg;
    SceneMap map;
    OptimizerState opt;
    std::mt19937_64 rng;
    std::int64_t iteration = 0;

    explicit Engine(const PipelineConfig& cfg, const CameraIntrinsics& camera)
        : config(cfg), cam(camera), mapper_cfg(cfg.mapper_config(camera)), opt(0), rng(cfg.seed) {}

    void ingest_keyframe(const KeyframePacket& packet) {
        const double tau = config.insertion_filter ? config.tau_insert : 0.0;
        insert_gaussians(map, opt, packet.source, packet.distances, tau, packet.pose);
        map.keyframes.push_back({packet.frame, packet.pose});
    }

    // One keyframe's optimization budget: a fixed iteration count, or a wall
    // time budget when configured.
    void optimize_batch() {
        if (map.keyframes.empty() || map.empty()) return;
        if (config.opt_time_budget_ms > 0.0) {
            const auto start = Clock::now();
            while (seconds_since(start) * 1000.0 < config.opt_time_budget_ms)
                optimize_step(map, opt, mapper_cfg, ++iteration, rng);
        } else {
            for (int i = 0; i < config.schedule.iterations_per_keyframe; ++i)
                optimize_step(map, opt, mapper_cfg, ++iteration, rng);
        }
    }

    void run_steps(int count) {
        for (int i = 0; i < count && !map.keyframes.empty() && !map.empty(); ++i)
            optimize_step(map, opt, mapper_cfg, ++iteration, rng);
    }

    Pose refine_keyframe(std::size_t kf_index) {
        RefineParams params;
        params.iterations = config.refine_iterations;
        params.loss = config.loss;
        // Color files are 8-bit; keep the refinement gradient above the
        // quantization noise even when the mapping loss runs a plain L1.
        params.loss.l1_deadband = std::max(params.loss.l1_deadband, 2e-3);
        params.render = config.render;
        Keyframe& kf = map.keyframes[kf_index];
        kf.pose = refine_pose_photometric(map, kf.frame, cam, kf.pose, params);
        return kf.pose;
    }
};

}  // namespace

MetricsReport evaluate_map(const SceneMap& map, const DatasetReader& dataset,
                           const PipelineConfig& config, const Trajectory* estimated) {
    MetricsReport report;
    report.gaussian_count = map.size();
    report.frame_count = dataset.size();

    const CameraIntrinsics& cam = dataset.manifest().intrinsics;
    SemanticAccumulator acc(static_cast<int>(dataset.embeddings().rows()));
    double psnr_sum = 0.0, ssim_sum = 0.0;
    int evaluated = 0;

    const int stride = std::max(1, config.eval_stride);
    for (int i = 0; i < dataset.size(); i += stride) {
        const Frame frame = dataset.read_frame(i);
        const Pose pose = dataset.groundtruth()[i].pose;
        RenderOutput render = render_geometric(map, pose, cam, config.render);
        const ImageD gt_color = frame_color_as_double(frame);
        psnr_sum += psnr(render.color, gt_color);
        ssim_sum += ssim(render.color, gt_color);
        if (map.feature_dim > 0 && !frame.label.empty()) {
            render.feature = render_feature(map, render.topk);
            acc.add(segment_by_query(render.feature, dataset.embeddings()), frame.label);
        }
        ++evaluated;
    }

    if (evaluated > 0) {
        report.psnr = psnr_sum / evaluated;
        report.ssim = ssim_sum / evaluated;
        const SemanticMetrics sm = acc.result();
        report.pixel_accuracy = sm.accuracy;
        report.miou = sm.miou;
    }
    if (estimated && estimated->size() >= 3)
        report.ate_rmse = ate_rmse(*estimated, dataset.groundtruth());

    const Trajectory& gt = dataset.groundtruth();
    for (std::size_t i = 1; i < gt.size(); ++i)
        report.trajectory_length += translation_distance(gt[i - 1].pose, gt[i].pose);
    return report;
}

PipelineResult run_slam(const std::string& dataset_dir, const PipelineConfig& config,
                        const std::string& out_dir) {
#ifdef _OPENMP
    if (config.threads > 0) omp_set_num_threads(config.threads);
#endif

    const DatasetReader dataset(dataset_dir);
    const CameraIntrinsics& cam = dataset.manifest().intrinsics;
    if (dataset.size() < 1) throw std::runtime_error("run_slam: empty dataset " + dataset_dir);

    const auto t_total = Clock::now();
    double time_tracking = 0.0, time_mapping = 0.0;

    Engine engine(config, cam);
    PipelineResult result;
    result.trajectory.resize(dataset.size());

    const Pose initial_pose =
        dataset.groundtruth().empty() ? Pose::identity() : dataset.groundtruth()[0].pose;

    // Bootstrap: the first frame is always a keyframe into the empty map.
    {
        const Frame frame0 = dataset.read_frame(0);
        KeyframePacket packet;
        packet.frame_index = 0;
        packet.frame = frame0;
        packet.pose = initial_pose;
        packet.source = backproject_depth(frame0, cam, config.stride, config.track.knn_k,
                                          config.track.plane_epsilon);
        packet.distances.assign(packet.source.size(), kNoCorrespondence);
        result.trajectory[0] = {frame0.timestamp, initial_pose};

        const auto t0 = Clock::now();
        engine.ingest_keyframe(packet);
        engine.optimize_batch();
        if (config.photometric_refine) {
            const Pose refined = engine.refine_keyframe(0);
            result.trajectory[0].pose = refined;
        }
        time_mapping += seconds_since(t0);
    }

    std::size_t keyframes_total = 1;

    if (config.mode == PipelineMode::kDeterministic) {
        TrackTarget target = TrackTarget::from_map(engine.map, config.track);
        Pose prev_pose = result.trajectory[0].pose;

        for (int i = 1; i < dataset.size(); ++i) {
            const Frame frame = dataset.read_frame(i);

            const auto t0 = Clock::now();
            std::vector<SourcePoint> source = backproject_depth(
                frame, cam, config.stride, config.track.knn_k, config.track.plane_epsilon);
            TrackResult track = gicp_align(source, target, prev_pose, config.track);
            const Pose pose = track.converged ? track.pose : prev_pose;
            time_tracking += seconds_since(t0);

            result.trajectory[i] = {frame.timestamp, pose};
            prev_pose = pose;

            const bool forced = config.force_keyframe_period > 0 &&
                                (i % config.force_keyframe_period) == 0;
            if (track.converged && (keyframe_decision(track, config.keyframe_threshold) || forced)) {
                KeyframePacket packet;
                packet.frame_index = i;
                packet.frame = frame;
                packet.pose = pose;
                packet.source = std::move(source);
                packet.distances = std::move(track.correspondence_distances);

                const auto t1 = Clock::now();
                engine.ingest_keyframe(packet);
                engine.optimize_batch();
                if (config.photometric_refine) {
                    const Pose refined = engine.refine_keyframe(engine.map.keyframes.size() - 1);
                    result.trajectory[i].pose = refined;
                    prev_pose = refined;
                }
                target = TrackTarget::from_map(engine.map, config.track);
                time_mapping += seconds_since(t1);
                ++keyframes_total;
            }
        }
    } else {
        // Concurrent mode: tracking and mapping threads exchange immutable
        // snapshots one way and keyframe packets the other.
        std::mutex queue_mtx;
        std::condition_variable queue_cv;
        std::deque<KeyframePacket> queue;
        bool tracking_done = false;

        std::mutex snap_mtx;
        auto snapshot =
            std::make_shared<const TrackTarget>(TrackTarget::from_map(engine.map, config.track));

        std::mutex refined_mtx;
        std::map<int, Pose> refined_poses;

        std::thread mapper([&] {
            std::int64_t pending = 0;
            std::vector<std::pair<std::size_t, int>> unrefined;  // (keyframe idx, frame idx)
            while (true) {
                std::vector<KeyframePacket> batch;
                {
                    std::unique_lock lk(queue_mtx);
                    if (queue.empty() && pending == 0) {
                        queue_cv.wait(lk, [&] { return !queue.empty() || tracking_done; });
                        if (queue.empty() && tracking_done) break;
                    }
                    while (!queue.empty()) {
                        batch.push_back(std::move(queue.front()));
                        queue.pop_front();
                    }
                }
                for (KeyframePacket& packet : batch) {
                    engine.ingest_keyframe(packet);
                    unrefined.emplace_back(engine.map.keyframes.size() - 1, packet.frame_index);
                    pending += config.schedule.iterations_per_keyframe;
                }

                if (pending > 0) {
                    const int steps =
                        static_cast<int>(std::min<std::int64_t>(pending, config.snapshot_period));
                    engine.run_steps(steps);
                    pending -= steps;
                }

                if (pending == 0 && config.photometric_refine) {
                    for (const auto& [kf, frame_index] : unrefined) {
                        const Pose p = engine.refine_keyframe(kf);
                        std::lock_guard lk(refined_mtx);
                        refined_poses[frame_index] = p;
                    }
                    unrefined.clear();
                }

                {
                    std::lock_guard lk(snap_mtx);
                    snapshot = std::make_shared<const TrackTarget>(
                        TrackTarget::from_map(engine.map, config.track));
                }
            }
        });

        const auto t0 = Clock::now();
        Pose prev_pose = result.trajectory[0].pose;
        for (int i = 1; i < dataset.size(); ++i) {
            const Frame frame = dataset.read_frame(i);
            std::vector<SourcePoint> source = backproject_depth(
                frame, cam, config.stride, config.track.knn_k, config.track.plane_epsilon);

            std::shared_ptr<const TrackTarget> target;
            {
                std::lock_guard lk(snap_mtx);
                target = snapshot;
            }
            TrackResult track = gicp_align(source, *target, prev_pose, config.track);
            const Pose pose = track.converged ? track.pose : prev_pose;
            result.trajectory[i] = {frame.timestamp, pose};
            prev_pose = pose;

            const bool forced = config.force_keyframe_period > 0 &&
                                (i % config.force_keyframe_period) == 0;
            if (track.converged && (keyframe_decision(track, config.keyframe_threshold) || forced)) {
                KeyframePacket packet;
                packet.frame_index = i;
                packet.frame = frame;
                packet.pose = pose;
                packet.source = std::move(source);
                packet.distances = std::move(track.correspondence_distances);
                {
                    std::lock_guard lk(queue_mtx);
                    queue.push_back(std::move(packet));
                }
                queue_cv.notify_one();
                ++keyframes_total;
            }
        }
        {
            std::lock_guard lk(queue_mtx);
            tracking_done = true;
        }
        queue_cv.notify_one();
        mapper.join();
        for (const auto& [frame_index, pose] : refined_poses)
            if (frame_index >= 0 && frame_index < dataset.size())
                result.trajectory[frame_index].pose = pose;
        time_tracking += seconds_since(t0);
    }

    // Final evaluation over keyframes.
    const auto t_eval = Clock::now();
    MetricsReport report;
    report.frame_count = dataset.size();
    report.keyframe_count = keyframes_total;
    report.gaussian_count = engine.map.size();

    SemanticAccumulator acc(static_cast<int>(dataset.embeddings().rows()));
    double psnr_sum = 0.0, ssim_sum = 0.0;
    int evaluated = 0;
    const int stride = std::max(1, config.eval_stride);

    if (!out_dir.empty() && config.save_renders) fs::create_directories(fs::path(out_dir) / "renders");

    for (std::size_t k = 0; k < engine.map.keyframes.size(); k += stride) {
        const Keyframe& kf = engine.map.keyframes[k];
        RenderOutput render = render_geometric(engine.map, kf.pose, cam, config.render);
        const ImageD gt_color = frame_color_as_double(kf.frame);
        psnr_sum += psnr(render.color, gt_color);
        ssim_sum += ssim(render.color, gt_color);
        if (engine.map.feature_dim > 0 && !kf.frame.label.empty()) {
            render.feature = render_feature(engine.map, render.topk);
            acc.add(segment_by_query(render.feature, dataset.embeddings()), kf.frame.label);
        }
        ++evaluated;

        if (!out_dir.empty() && config.save_renders) {
            ImageU8 png(render.color.width, render.color.height, 3);
            for (std::size_t p = 0; p < render.color.data.size(); ++p)
                png.data[p] = static_cast<std::uint8_t>(
                    std::clamp(std::lround(render.color.data[p] * 255.0), 0L, 255L));
            char name[32];
            std::snprintf(name, sizeof(name), "kf_%04zu.png", k);
            write_png_u8((fs::path(out_dir) / "renders" / name).string(), png);
        }
    }
    if (evaluated > 0) {
        report.psnr = psnr_sum / evaluated;
        report.ssim = ssim_sum / evaluated;
        const SemanticMetrics sm = acc.result();
        report.pixel_accuracy = sm.accuracy;
        report.miou = sm.miou;
    }

    if (dataset.groundtruth().size() >= 3)
        report.ate_rmse = ate_rmse(result.trajectory, dataset.groundtruth());
    const Trajectory& gt = dataset.groundtruth();
    for (std::size_t i = 1; i < gt.size(); ++i)
        report.trajectory_length += translation_distance(gt[i - 1].pose, gt[i].pose);

    report.wall_times.emplace_back("tracking", time_tracking);
    report.wall_times.emplace_back("mapping", time_mapping);
    report.wall_times.emplace_back("evaluation", seconds_since(t_eval));
    report.wall_times.emplace_back("total", seconds_since(t_total));

    result.report = report;
    result.map = std::move(engine.map);

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_trajectory_tum(result.trajectory, (fs::path(out_dir) / "trajectory.txt").string());
        save_checkpoint(result.map, (fs::path(out_dir) / "checkpoint.bin").string());
        std::ofstream rep((fs::path(out_dir) / "report.txt").string(), std::ios::trunc);
        rep << report.metrics_text();
        std::ofstream tim((fs::path(out_dir) / "timings.txt").string(), std::ios::trunc);
        tim << report.timings_text();
    }
    return result;
}

}  // namespace fslam
