#include "fslam/raster/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fslam/core/projection.hpp"

namespace fslam {
namespace raster_detail {

namespace {

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline int thread_id() {
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}

// Largest eigenvalue of a symmetric 2x2 [[a,b],[b,c]].
inline double max_eigenvalue(double a, double b, double c) {
    const double mid = 0.5 * (a + c);
    const double dif = 0.5 * (a - c);
    return mid + std::sqrt(dif * dif + b * b);
}

struct TopKBuffer {
    double w[kMaxTopK];
    std::int32_t idx[kMaxTopK];
    int n = 0;

    // Processed front-to-back, so on weight ties the earlier (closer) entry
    // keeps its rank: only a strictly larger weight displaces.
    void insert(double weight, std::int32_t index, int k) {
        if (n < k) {
            int j = n++;
            while (j > 0 && w[j - 1] < weight) {
                w[j] = w[j - 1];
                idx[j] = idx[j - 1];
                --j;
            }
            w[j] = weight;
            idx[j] = index;
        } else if (weight > w[k - 1]) {
            int j = k - 1;
            while (j > 0 && w[j - 1] < weight) {
                w[j] = w[j - 1];
                idx[j] = idx[j - 1];
                --j;
            }
            w[j] = weight;
            idx[j] = index;
        }
    }
};

}  // namespace

PreparedScene prepare_scene(const SceneMap& map, const Pose& pose, const CameraIntrinsics& cam,
                            const RenderSettings& settings) {
    PreparedScene prep;
    prep.width = cam.width;
    prep.height = cam.height;
    prep.generation = map.generation;
    prep.map_size = map.size();

    const int n = static_cast<int>(map.size());
    std::vector<ProjEntry> proj(n);
    std::vector<double> radius(n, -1.0);  // < 0 marks skipped

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const Projected2D p = project_gaussian(map.gaussians[i], pose, cam, settings.cov2d_dilation);
        if (!p.visible) continue;
        const double a = p.cov2d(0, 0), b = p.cov2d(0, 1), c = p.cov2d(1, 1);
        const double det = a * c - b * b;
        if (!(det > 0.0) || !std::isfinite(det)) continue;  // degenerate: skip
        ProjEntry& e = proj[i];
        e.mx = p.mean2d.x();
        e.my = p.mean2d.y();
        e.ixx = c / det;
        e.ixy = -b / det;
        e.iyy = a / det;
        e.z = p.depth;
        e.opacity = map.gaussians[i].opacity();
        e.src = i;
        radius[i] = std::sqrt(-2.0 * kLogWeightCutoff * max_eigenvalue(a, b, c));
    }

    std::vector<std::int32_t> order;
    order.reserve(n);
    for (int i = 0; i < n; ++i)
        if (radius[i] >= 0.0) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::int32_t l, std::int32_t r) {
        if (proj[l].z != proj[r].z) return proj[l].z < proj[r].z;
        return l < r;
    });

    prep.entries.reserve(order.size());
    std::vector<double> rad_sorted;
    rad_sorted.reserve(order.size());
    for (std::int32_t i : order) {
        prep.entries.push_back(proj[i]);
        rad_sorted.push_back(radius[i]);
    }

    const int ts = settings.tile_size;
    prep.tiles_x = (cam.width + ts - 1) / ts;
    prep.tiles_y = (cam.height + ts - 1) / ts;
    const int n_tiles = prep.tiles_x * prep.tiles_y;

    auto tile_range = [&](const ProjEntry& e, double r, int& tx0, int& tx1, int& ty0, int& ty1) {
        tx0 = std::max(0, static_cast<int>(std::floor((e.mx - r) / ts)));
        tx1 = std::min(prep.tiles_x - 1, static_cast<int>(std::floor((e.mx + r) / ts)));
        ty0 = std::max(0, static_cast<int>(std::floor((e.my - r) / ts)));
        ty1 = std::min(prep.tiles_y - 1, static_cast<int>(std::floor((e.my + r) / ts)));
        return tx0 <= tx1 && ty0 <= ty1;
    };

    std::vector<std::int32_t> counts(n_tiles, 0);
    for (std::size_t s = 0; s < prep.entries.size(); ++s) {
        int tx0, tx1, ty0, ty1;
        if (!tile_range(prep.entries[s], rad_sorted[s], tx0, tx1, ty0, ty1)) continue;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx) ++counts[ty * prep.tiles_x + tx];
    }

    prep.tile_offsets.assign(n_tiles + 1, 0);
    for (int t = 0; t < n_tiles; ++t) prep.tile_offsets[t + 1] = prep.tile_offsets[t] + counts[t];
    prep.tile_entries.resize(prep.tile_offsets.back());

    std::vector<std::int32_t> cursor(prep.tile_offsets.begin(), prep.tile_offsets.end() - 1);
    for (std::size_t s = 0; s < prep.entries.size(); ++s) {
        int tx0, tx1, ty0, ty1;
        if (!tile_range(prep.entries[s], rad_sorted[s], tx0, tx1, ty0, ty1)) continue;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                prep.tile_entries[cursor[ty * prep.tiles_x + tx]++] = static_cast<std::int32_t>(s);
    }

    return prep;
}

void geometric_pass(const PreparedScene& prep, const SceneMap& map, const RenderSettings& settings,
                    RenderOutput& out) {
    const int w = prep.width, h = prep.height;
    const int k = std::min(settings.top_k, kMaxTopK);
    out.color = ImageD(w, h, 3);
    out.depth = ImageD(w, h, 1);
    out.alpha = ImageD(w, h, 1);
    out.topk = TopKGrid(w, h, k);
    out.contributions.assign(prep.map_size, 0.0);
    out.generation = prep.generation;
    out.map_size = prep.map_size;

    const int n_threads = max_threads();
    std::vector<std::vector<double>> contrib(n_threads);

    const int ts = settings.tile_size;
    const int n_tiles = prep.tiles_x * prep.tiles_y;

#pragma omp parallel
    {
        std::vector<double>& local = contrib[thread_id()];
        local.assign(prep.map_size, 0.0);

#pragma omp for schedule(static)
        for (int t = 0; t < n_tiles; ++t) {
            const int tx = t % prep.tiles_x;
            const int ty = t / prep.tiles_x;
            const int x0 = tx * ts, x1 = std::min(w, x0 + ts);
            const int y0 = ty * ts, y1 = std::min(h, y0 + ts);
            const std::int32_t* list = prep.tile_entries.data() + prep.tile_offsets[t];
            const int list_n = prep.tile_offsets[t + 1] - prep.tile_offsets[t];

            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    double transmittance = 1.0;
                    double acc_r = 0, acc_g = 0, acc_b = 0, acc_d = 0, acc_w = 0;
                    TopKBuffer buf;

                    for (int li = 0; li < list_n; ++li) {
                        const ProjEntry& e = prep.entries[list[li]];
                        const double dx = x - e.mx, dy = y - e.my;
                        const double power = -0.5 * (e.ixx * dx * dx + e.iyy * dy * dy) - e.ixy * dx * dy;
                        if (power < kLogWeightCutoff) continue;
                        double alpha = e.opacity * std::exp(power);
                        if (alpha > settings.alpha_clamp) alpha = settings.alpha_clamp;
                        const double weight = alpha * transmittance;
                        if (weight > 0.0) {
                            const Eigen::Vector3d& col = map.gaussians[e.src].color;
                            acc_r += weight * col.x();
                            acc_g += weight * col.y();
                            acc_b += weight * col.z();
                            acc_d += weight * e.z;
                            acc_w += weight;
                            buf.insert(weight, e.src, k);
                            if (weight > local[e.src]) local[e.src] = weight;
                        }
                        transmittance *= 1.0 - alpha;
                        if (transmittance < settings.transmittance_floor) break;
                    }

                    out.color.at(x, y, 0) = acc_r + transmittance * settings.background.x();
                    out.color.at(x, y, 1) = acc_g + transmittance * settings.background.y();
                    out.color.at(x, y, 2) = acc_b + transmittance * settings.background.z();
                    out.depth.at(x, y) = acc_d;
                    out.alpha.at(x, y) = acc_w;

                    out.topk.count[out.topk.pixel(x, y)] = static_cast<std::uint8_t>(buf.n);
                    for (int j = 0; j < buf.n; ++j) {
                        const std::size_t s = out.topk.slot(x, y, j);
                        out.topk.index[s] = buf.idx[j];
                        out.topk.weight[s] = buf.w[j];
                    }
                }
            }
        }
    }

    for (int t = 0; t < n_threads; ++t) {
        if (contrib[t].empty()) continue;
        for (std::size_t i = 0; i < prep.map_size; ++i)
            if (contrib[t][i] > out.contributions[i]) out.contributions[i] = contrib[t][i];
    }
}

ImageD feature_pass_full_blend(const PreparedScene& prep, const SceneMap& map,
                               const RenderSettings& settings) {
    const int w = prep.width, h = prep.height;
    const int d = map.feature_dim;
    ImageD out(w, h, d);

    // Flat feature table for cache-friendly accumulation.
    std::vector<double> feat(static_cast<std::size_t>(prep.map_size) * d);
    for (std::size_t i = 0; i < prep.map_size; ++i)
        for (int c = 0; c < d; ++c) feat[i * d + c] = map.gaussians[i].feature[c];

    const int ts = settings.tile_size;
    const int n_tiles = prep.tiles_x * prep.tiles_y;

#pragma omp parallel for schedule(static)
    for (int t = 0; t < n_tiles; ++t) {
        const int tx = t % prep.tiles_x;
        const int ty = t / prep.tiles_x;
        const int x0 = tx * ts, x1 = std::min(w, x0 + ts);
        const int y0 = ty * ts, y1 = std::min(h, y0 + ts);
        const std::int32_t* list = prep.tile_entries.data() + prep.tile_offsets[t];
        const int list_n = prep.tile_offsets[t + 1] - prep.tile_offsets[t];

        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                double transmittance = 1.0;
                double* px = &out.at(x, y, 0);
                for (int li = 0; li < list_n; ++li) {
                    const ProjEntry& e = prep.entries[list[li]];
                    const double dx = x - e.mx, dy = y - e.my;
                    const double power = -0.5 * (e.ixx * dx * dx + e.iyy * dy * dy) - e.ixy * dx * dy;
                    if (power < kLogWeightCutoff) continue;
                    double alpha = e.opacity * std::exp(power);
                    if (alpha > settings.alpha_clamp) alpha = settings.alpha_clamp;
                    const double weight = alpha * transmittance;
                    if (weight > 0.0) {
                        const double* f = feat.data() + static_cast<std::size_t>(e.src) * d;
                        for (int c = 0; c < d; ++c) px[c] += weight * f[c];
                    }
                    transmittance *= 1.0 - alpha;
                    if (transmittance < settings.transmittance_floor) break;
                }
            }
        }
    }

    return out;
}

}  // namespace raster_detail

RenderOutput render_geometric(const SceneMap& map, const Pose& pose, const CameraIntrinsics& cam,
                              const RenderSettings& settings) {
    const raster_detail::PreparedScene prep = raster_detail::prepare_scene(map, pose, cam, settings);
    RenderOutput out;
    raster_detail::geometric_pass(prep, map, settings, out);
    return out;
}

ImageD render_feature(const SceneMap& map, const TopKGrid& topk) {
    const int w = topk.width, h = topk.height, d = map.feature_dim;
    const std::int32_t n = static_cast<std::int32_t>(map.size());

    for (std::size_t s = 0; s < topk.index.size(); ++s) {
        const std::int32_t idx = topk.index[s];
        if (idx >= n)
            throw std::runtime_error("render_feature: top-k record references gaussian " +
                                     std::to_string(idx) + " but the map holds " + std::to_string(n) +
                                     " (stale snapshot)");
    }

    std::vector<double> feat(static_cast<std::size_t>(n) * d);
    for (std::int32_t i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) feat[static_cast<std::size_t>(i) * d + c] = map.gaussians[i].feature[c];

    ImageD out(w, h, d);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int cnt = topk.count[topk.pixel(x, y)];
            if (cnt == 0) continue;
            double sum = 0.0;
            for (int j = 0; j < cnt; ++j) sum += topk.weight[topk.slot(x, y, j)];
            double* px = &out.at(x, y, 0);
            for (int j = 0; j < cnt; ++j) {
                const std::size_t s = topk.slot(x, y, j);
                const double wn = topk.weight[s] / sum;
                const double* f = feat.data() + static_cast<std::size_t>(topk.index[s]) * d;
                for (int c = 0; c < d; ++c) px[c] += wn * f[c];
            }
        }
    }

    return out;
}

ImageD render_feature_full_blend(const SceneMap& map, const Pose& pose, const CameraIntrinsics& cam,
                                 const RenderSettings& settings) {
    const raster_detail::PreparedScene prep = raster_detail::prepare_scene(map, pose, cam, settings);
    return raster_detail::feature_pass_full_blend(prep, map, settings);
}

}  // namespace fslam
