#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "fslam/eval/metrics.hpp"
#include "fslam/eval/pipeline.hpp"
#include "fslam/io/png_io.hpp"
#include "fslam/map/checkpoint.hpp"
#include "fslam/raster/reference.hpp"
#include "fslam/raster/render.hpp"
#include "fslam/synth/dataset.hpp"
#include "fslam/synth/scene.hpp"

namespace fs = std::filesystem;
using namespace fslam;

namespace {

using Clock = std::chrono::steady_clock;

double time_call(const std::function<void()>& fn, int reps) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
    }
    return best;
}

PipelineConfig build_config(const std::string& config_path,
                            const std::vector<std::string>& overrides) {
    PipelineConfig config;
    if (!config_path.empty()) load_config_file(config, config_path);
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override '" + kv + "' is not key=value");
        apply_config_entry(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return config;
}

int cmd_generate(const std::string& out_dir, int frames, int width, int height, int classes,
                 int feature_dim, const std::string& traj_kind, std::uint64_t seed,
                 double depth_noise, double spacing, int boxes) {
    SceneSpec spec;
    spec.classes = classes;
    spec.feature_dim = feature_dim;
    spec.seed = seed;
    spec.spacing = spacing;
    spec.boxes = boxes;

    CameraIntrinsics cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = 0.9 * width;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.near_plane = 0.05;
    cam.far_plane = 20.0;

    const TrajectoryKind kind =
        traj_kind == "lawnmower" ? TrajectoryKind::kLawnmower : TrajectoryKind::kOrbit;

    const SyntheticScene scene = build_synthetic_scene(spec);
    const std::vector<Pose> poses = generate_trajectory(kind, frames, spec);
    std::vector<Frame> rendered = render_ground_truth(scene, poses, cam);
    add_depth_noise(rendered, depth_noise, seed + 1);

    DatasetManifest manifest;
    manifest.frame_count = frames;
    manifest.intrinsics = cam;
    manifest.feature_dim = feature_dim;
    manifest.class_names = scene.class_names;
    manifest.depth_noise_sigma = depth_noise;
    manifest.seed = seed;
    manifest.trajectory_kind = traj_kind;

    write_dataset(rendered, poses, scene.embeddings, manifest, out_dir);
    std::printf("dataset=%s\nframes=%d\ngaussians=%zu\n", out_dir.c_str(), frames,
                scene.gaussians.size());
    return 0;
}

int cmd_run(const std::string& dataset_dir, const std::string& out_dir,
            const PipelineConfig& config) {
    const PipelineResult result = run_slam(dataset_dir, config, out_dir);
    std::fputs(result.report.metrics_text().c_str(), stdout);
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_dir,
             const std::string& traj_path, const PipelineConfig& config) {
    const SceneMap map = load_checkpoint(checkpoint_path);
    const DatasetReader dataset(dataset_dir);
    Trajectory traj;
    if (!traj_path.empty()) traj = read_trajectory_tum(traj_path);
    const MetricsReport report =
        evaluate_map(map, dataset, config, traj.empty() ? nullptr : &traj);
    std::fputs(report.metrics_text().c_str(), stdout);
    return 0;
}

int cmd_query(const std::string& checkpoint_path, const std::string& dataset_dir, int frame_index,
              const std::string& class_name, double threshold, const std::string& out_dir,
              const PipelineConfig& config) {
    const SceneMap map = load_checkpoint(checkpoint_path);
    const DatasetReader dataset(dataset_dir);

    const auto& names = dataset.manifest().class_names;
    const auto it = std::find(names.begin(), names.end(), class_name);
    if (it == names.end()) {
        std::string known;
        for (const std::string& n : names) known += (known.empty() ? "" : ", ") + n;
        throw std::invalid_argument("unknown class '" + class_name + "'; known classes: " + known);
    }
    const int cls = static_cast<int>(it - names.begin());

    if (frame_index < 0 || frame_index >= dataset.size())
        throw std::invalid_argument("frame index out of range");
    const Pose pose = dataset.groundtruth()[frame_index].pose;
    const CameraIntrinsics& cam = dataset.manifest().intrinsics;

    RenderOutput render = render_geometric(map, pose, cam, config.render);
    render.feature = render_feature(map, render.topk);

    const Eigen::VectorXd embedding = dataset.embeddings().row(cls);
    const int w = cam.width, h = cam.height, d = map.feature_dim;
    ImageU8 heat(w, h, 1), mask(w, h, 1);
    std::int64_t mask_count = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double dot = 0.0, norm2 = 0.0;
            for (int c = 0; c < d; ++c) {
                const double f = render.feature.at(x, y, c);
                dot += embedding[c] * f;
                norm2 += f * f;
            }
            const double sim = norm2 > 1e-12 ? dot / std::sqrt(norm2) : 0.0;
            heat.at(x, y) = static_cast<std::uint8_t>(
                std::clamp(std::lround(std::clamp(sim, 0.0, 1.0) * 255.0), 0L, 255L));
            const bool hit = sim >= threshold;
            mask.at(x, y) = hit ? 255 : 0;
            mask_count += hit;
        }

    fs::create_directories(out_dir);
    const std::string heat_path = (fs::path(out_dir) / ("query_" + class_name + "_heat.png")).string();
    const std::string mask_path = (fs::path(out_dir) / ("query_" + class_name + "_mask.png")).string();
    write_png_u8(heat_path, heat);
    write_png_u8(mask_path, mask);
    std::printf("class=%s\nthreshold=%.3f\nmask_pixels=%lld\nheat=%s\nmask=%s\n", class_name.c_str(),
                threshold, static_cast<long long>(mask_count), heat_path.c_str(), mask_path.c_str());
    return 0;
}

// Rasterizer throughput: the tiled parallel feature pass across K against the
// full blend, plus the serial reference pass for the parallel/serial ratio.
int cmd_bench(int gaussians, int size, int reps, std::uint64_t seed) {
    SceneSpec spec;
    spec.seed = seed;
    // Room surface area is ~80 units^2; pick the spacing that lands near the
    // requested count, slightly dense, then truncate to it exactly.
    spec.spacing = std::sqrt(70.0 / std::max(1, gaussians));

    CameraIntrinsics cam;
    cam.width = size;
    cam.height = size;
    cam.fx = cam.fy = 0.9 * size;
    cam.cx = 0.5 * (size - 1);
    cam.cy = 0.5 * (size - 1);
    cam.far_plane = 20.0;

    std::printf("# gaussians=%d image=%dx%d reps=%d\n", gaussians, size, size, reps);
    std::printf("%-6s %-6s %-14s %-10s\n", "D", "K", "feature_ms", "fps");

    for (const int d : {16, 64}) {
        spec.feature_dim = d;
        spec.classes = 4;
        SyntheticScene scene = build_synthetic_scene(spec);
        // Trim or accept whatever density came out; report the real count.
        SceneMap map;
        map.feature_dim = d;
        map.gaussians = scene.gaussians;
        if (static_cast<int>(map.gaussians.size()) > gaussians) map.gaussians.resize(gaussians);

        const std::vector<Pose> poses = generate_trajectory(TrajectoryKind::kOrbit, 8, spec);
        const Pose pose = poses[0];

        RenderSettings settings;
        settings.transmittance_floor = 1e-4;

        for (const int k : {1, 3, 5, 10}) {
            settings.top_k = k;
            const auto prep = raster_detail::prepare_scene(map, pose, cam, settings);
            RenderOutput out;
            raster_detail::geometric_pass(prep, map, settings, out);
            const double t = time_call([&] { ImageD f = render_feature(map, out.topk); }, reps);
            std::printf("%-6d K=%-4d %-14.3f %-10.1f\n", d, k, t * 1e3, 1.0 / t);
        }
        {
            const auto prep = raster_detail::prepare_scene(map, pose, cam, settings);
            const double t = time_call(
                [&] { ImageD f = raster_detail::feature_pass_full_blend(prep, map, settings); }, reps);
            std::printf("%-6d full   %-14.3f %-10.1f\n", d, t * 1e3, 1.0 / t);
        }

        // Parallel tiled geometric pass against the serial reference sweep.
        settings.top_k = 3;
        const double t_tiled =
            time_call([&] { RenderOutput o = render_geometric(map, pose, cam, settings); }, reps);
        const double t_serial = time_call(
            [&] { ReferenceRender o = render_reference(map, pose, cam, settings); }, std::max(1, reps / 2));
        std::printf("%-6d geometric tiled=%.3fms serial_reference=%.3fms speedup=%.2fx (n=%zu)\n", d,
                    t_tiled * 1e3, t_serial * 1e3, t_serial / t_tiled, map.gaussians.size());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-splatting SLAM with a joint geometric and semantic feature field"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;

    // generate
    auto* generate = app.add_subcommand("generate", "Generate a synthetic RGB-D+feature dataset");
    std::string gen_out = "dataset";
    int gen_frames = 100, gen_width = 128, gen_height = 96, gen_classes = 4, gen_dim = 16,
        gen_boxes = 2;
    double gen_noise = 0.0, gen_spacing = 0.05;
    std::string gen_traj = "orbit";
    std::uint64_t gen_seed = 1;
    generate->add_option("--out", gen_out, "Output directory")->required();
    generate->add_option("--frames", gen_frames, "Frame count");
    generate->add_option("--width", gen_width, "Image width");
    generate->add_option("--height", gen_height, "Image height");
    generate->add_option("--classes", gen_classes, "Semantic class count");
    generate->add_option("--dim", gen_dim, "Feature dimension");
    generate->add_option("--trajectory", gen_traj, "orbit|lawnmower")
        ->check(CLI::IsMember({"orbit", "lawnmower"}));
    generate->add_option("--seed", gen_seed, "Scene seed");
    generate->add_option("--depth-noise", gen_noise, "Depth noise sigma, scene units");
    generate->add_option("--spacing", gen_spacing, "Surface Gaussian spacing");
    generate->add_option("--boxes", gen_boxes, "Interior box count");

    // run
    auto* run = app.add_subcommand("run", "Run SLAM over a dataset");
    std::string run_dataset, run_out = "out";
    std::uint64_t run_seed = 0;
    std::string run_mode;
    run->add_option("--dataset", run_dataset, "Dataset directory")->required();
    run->add_option("--out", run_out, "Output directory");
    run->add_option("--config", config_path, "key=value config file");
    run->add_option("--set", overrides, "Config override key=value (repeatable)");
    run->add_option("--seed", run_seed, "Seed override");
    run->add_option("--mode", run_mode, "deterministic|concurrent")
        ->check(CLI::IsMember({"deterministic", "concurrent"}));

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against a dataset");
    std::string eval_checkpoint, eval_dataset, eval_traj;
    eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint path")->required();
    eval->add_option("--dataset", eval_dataset, "Dataset directory")->required();
    eval->add_option("--traj", eval_traj, "Estimated trajectory for ATE");
    eval->add_option("--config", config_path, "key=value config file");
    eval->add_option("--set", overrides, "Config override key=value (repeatable)");

    // query
    auto* query = app.add_subcommand("query", "Similarity heat map and mask for a class name");
    std::string q_checkpoint, q_dataset, q_class, q_out = "query_out";
    int q_frame = 0;
    double q_threshold = 0.5;
    query->add_option("--checkpoint", q_checkpoint, "Checkpoint path")->required();
    query->add_option("--dataset", q_dataset, "Dataset directory (poses, embeddings)")->required();
    query->add_option("--frame", q_frame, "Frame index for the viewpoint");
    query->add_option("--class", q_class, "Class name to query")->required();
    query->add_option("--threshold", q_threshold, "Cosine similarity threshold for the mask");
    query->add_option("--out", q_out, "Output directory");
    query->add_option("--config", config_path, "key=value config file");
    query->add_option("--set", overrides, "Config override key=value (repeatable)");

    // bench
    auto* bench = app.add_subcommand("bench", "Rasterizer throughput table");
    int b_gaussians = 10000, b_size = 256, b_reps = 3;
    std::uint64_t b_seed = 7;
    bench->add_option("--gaussians", b_gaussians, "Scene size");
    bench->add_option("--size", b_size, "Image side length");
    bench->add_option("--reps", b_reps, "Repetitions (best-of)");
    bench->add_option("--seed", b_seed, "Scene seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed())
            return cmd_generate(gen_out, gen_frames, gen_width, gen_height, gen_classes, gen_dim,
                                gen_traj, gen_seed, gen_noise, gen_spacing, gen_boxes);
        PipelineConfig config = build_config(config_path, overrides);
        if (run->parsed()) {
            if (run->count("--seed") > 0) config.seed = run_seed;
            if (!run_mode.empty())
                config.mode = run_mode == "concurrent" ? PipelineMode::kConcurrent
                                                       : PipelineMode::kDeterministic;
            return cmd_run(run_dataset, run_out, config);
        }
        if (eval->parsed()) return cmd_eval(eval_checkpoint, eval_dataset, eval_traj, config);
        if (query->parsed())
            return cmd_query(q_checkpoint, q_dataset, q_frame, q_class, q_threshold, q_out, config);
        if (bench->parsed()) return cmd_bench(b_gaussians, b_size, b_reps, b_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
