#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fslam/core/image.hpp"
#include "fslam/core/pose.hpp"
#include "fslam/core/types.hpp"
#include "fslam/map/scene_map.hpp"

namespace fslam {

struct RenderSettings {
    int top_k = 3;                       // records kept per pixel
    double transmittance_floor = 1e-4;   // early stop; 0 disables
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    int tile_size = 16;                  // pixels
    double cov2d_dilation = 0.3;         // px^2 added to cov2d diagonal
    double alpha_clamp = 0.999;
};

inline constexpr int kMaxTopK = 32;

// Per-pixel record of the K largest blending weights, sorted by descending
// weight (ties broken toward smaller depth, then smaller index).
struct TopKGrid {
    int width = 0, height = 0, k = 0;
    std::vector<std::int32_t> index;  // W*H*k, -1 when unused
    std::vector<double> weight;
    std::vector<std::uint8_t> count;  // per pixel, <= k

    TopKGrid() = default;
    TopKGrid(int w, int h, int kk)
        : width(w), height(h), k(kk),
          index(static_cast<std::size_t>(w) * h * kk, -1),
          weight(static_cast<std::size_t>(w) * h * kk, 0.0),
          count(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t slot(int x, int y, int j) const {
        return (static_cast<std::size_t>(y) * width + x) * k + j;
    }
    std::size_t pixel(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

struct RenderOutput {
    ImageD color;    // H x W x 3
    ImageD depth;    // H x W
    ImageD alpha;    // H x W, accumulated blending weight (1 - residual transmittance)
    ImageD feature;  // H x W x D, empty until render_feature
    TopKGrid topk;
    std::vector<double> contributions;  // per-Gaussian peak blending weight this render
    std::uint64_t generation = 0;
    std::size_t map_size = 0;
};

// Forward geometric pass: tile-binned, front-to-back alpha blending of color
// and mean depth, recording per-pixel Top-K (index, weight) pairs and
// per-Gaussian peak weights. Parallel over tiles; bit-deterministic.
RenderOutput render_geometric(const SceneMap& map, const Pose& pose, const CameraIntrinsics& cam,
                              const RenderSettings& settings);

// Feature pass: per pixel, renormalizes the recorded Top-K weights to sum to
// one and blends the referenced Gaussians' features. Pixels without records
// yield the zero vector. Throws if a record references a stale index.
ImageD render_feature(const SceneMap& map, const TopKGrid& topk);

// Feature accumulation over every contributor (no Top-K truncation, no
// renormalization). Benchmark baseline and consistency oracle input.
ImageD render_feature_full_blend(const SceneMap& map, const Pose& pose, const CameraIntrinsics& cam,
                                 const RenderSettings& settings);

namespace raster_detail {

struct ProjEntry {
    double mx, my;             // projected mean, px
    double ixx, ixy, iyy;      // inverse 2D covariance
    double z;
    double opacity;
    std::int32_t src;          // index into map.gaussians
};

// Projection + depth sort + tile binning, shared by the render passes.
struct PreparedScene {
    std::vector<ProjEntry> entries;       // depth-ascending
    std::vector<std::int32_t> tile_offsets;  // CSR over tiles, size tiles+1
    std::vector<std::int32_t> tile_entries;  // indices into `entries`
    int tiles_x = 0, tiles_y = 0;
    int width = 0, height = 0;
    std::uint64_t generation = 0;
    std::size_t map_size = 0;
};

// exp(power) below this is treated as an exact zero contribution; the tile
// footprint radius covers everything above it, so tiled and brute-force
// renders see identical contributor sets.
inline constexpr double kLogWeightCutoff = -27.631021115928547;  // ln(1e-12)

PreparedScene prepare_scene(const SceneMap& map, const Pose& pose, const CameraIntrinsics& cam,
                            const RenderSettings& settings);

void geometric_pass(const PreparedScene& prep, const SceneMap& map, const RenderSettings& settings,
                    RenderOutput& out);

ImageD feature_pass_full_blend(const PreparedScene& prep, const SceneMap& map,
                               const RenderSettings& settings);

}  // namespace raster_detail

}  // namespace fslam
