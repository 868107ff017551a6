#include "fslam/map/mapper.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fslam/raster/backward.hpp"

namespace fslam {

namespace {

double canonical_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

int insert_gaussians(SceneMap& map, OptimizerState& opt, const std::vector<SourcePoint>& source,
                     const std::vector<double>& distances, double tau_insert,
                     const Pose& world_to_camera) {
    if (source.size() != distances.size())
        throw std::invalid_argument("insert_gaussians: distances not aligned with source points");

    const Pose cam_to_world = se3_inverse(world_to_camera);
    const Eigen::Quaterniond world_rot = cam_to_world.rotation.normalized();

    int inserted = 0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (distances[i] < tau_insert) continue;
        const SourcePoint& s = source[i];

        Gaussian3D g;
        g.mean = cam_to_world.apply(s.position);
        const double scale = std::max(1e-6, 0.5 * s.spacing);
        g.log_scale = Eigen::Vector3d::Constant(std::log(scale));
        g.rotation = world_rot;
        g.opacity_logit = logit(0.5);
        g.color = s.color;
        if (map.feature_dim == 0 && s.feature.size() > 0)
            map.feature_dim = static_cast<int>(s.feature.size());
        if (map.feature_dim > 0) {
            if (s.feature.size() == map.feature_dim && s.feature.norm() > 1e-9) {
                g.feature = s.feature.normalized();
            } else {
                g.feature = Eigen::VectorXd::Constant(map.feature_dim,
                                                      1.0 / std::sqrt(double(map.feature_dim)));
            }
        }
        map.gaussians.push_back(std::move(g));
        ++inserted;
    }

    if (inserted > 0) {
        if (opt.feature.dim == 0) opt.feature.dim = map.feature_dim;
        opt.extend(static_cast<std::size_t>(inserted));
        ++map.generation;
    }
    return inserted;
}

void update_contribution_stats(SceneMap& map, const RenderOutput& render) {
    if (render.generation != map.generation || render.map_size != map.size())
        throw std::runtime_error("update_contribution_stats: render generation " +
                                 std::to_string(render.generation) + " does not match map generation " +
                                 std::to_string(map.generation));

    const TopKGrid& grid = render.topk;
    for (int y = 0; y < grid.height; ++y)
        for (int x = 0; x < grid.width; ++x) {
            const int cnt = grid.count[grid.pixel(x, y)];
            for (int j = 0; j < cnt; ++j) ++map.gaussians[grid.index[grid.slot(x, y, j)]].topk_count;
        }

    for (std::size_t i = 0; i < map.size(); ++i)
        if (render.contributions[i] > map.gaussians[i].max_contribution)
            map.gaussians[i].max_contribution = render.contributions[i];
}

std::vector<std::int32_t> prune_map(SceneMap& map, OptimizerState& opt, double keep_ratio,
                                    std::uint64_t seed, int topk_count_threshold) {
    std::vector<std::int32_t> candidates;
    for (std::size_t i = 0; i < map.size(); ++i)
        if (map.gaussians[i].topk_count <= topk_count_threshold)
            candidates.push_back(static_cast<std::int32_t>(i));

    std::vector<std::int32_t> removed;
    if (!candidates.empty()) {
        std::vector<double> score(candidates.size());
        double total = 0.0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            score[i] = map.gaussians[candidates[i]].max_contribution;
            total += score[i];
        }

        if (total > 0.0) {
            const std::size_t keep =
                static_cast<std::size_t>(std::ceil(keep_ratio * static_cast<double>(candidates.size())));
            if (keep < candidates.size()) {
                // Successive draws without replacement, proportional to score;
                // once the remaining mass is exhausted, draw uniformly.
                std::mt19937_64 rng(seed);
                std::vector<std::uint8_t> kept(candidates.size(), 0);
                std::vector<std::size_t> pool(candidates.size());
                for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
                double mass = total;

                for (std::size_t draw = 0; draw < keep; ++draw) {
                    std::size_t pick_pos = 0;
                    if (mass > 0.0) {
                        const double u = canonical_unit(rng) * mass;
                        double acc = 0.0;
                        pick_pos = pool.size() - 1;
                        for (std::size_t p = 0; p < pool.size(); ++p) {
                            acc += score[pool[p]];
                            if (u < acc) {
                                pick_pos = p;
                                break;
                            }
                        }
                    } else {
                        pick_pos = static_cast<std::size_t>(rng() % pool.size());
                    }
                    const std::size_t chosen = pool[pick_pos];
                    kept[chosen] = 1;
                    mass -= score[chosen];
                    if (mass < 0.0) mass = 0.0;
                    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick_pos));
                }

                for (std::size_t i = 0; i < candidates.size(); ++i)
                    if (!kept[i]) removed.push_back(candidates[i]);
            }
        }
        // total == 0: survival weights undefined, keep every candidate
    }

    if (!removed.empty()) {
        std::vector<Gaussian3D> survivors;
        survivors.reserve(map.size() - removed.size());
        std::size_t r = 0;
        for (std::size_t i = 0; i < map.size(); ++i) {
            if (r < removed.size() && static_cast<std::size_t>(removed[r]) == i) {
                ++r;
                continue;
            }
            survivors.push_back(std::move(map.gaussians[i]));
        }
        map.gaussians = std::move(survivors);
        opt.compact(removed);
        ++map.generation;
    }

    // Statistics window restarts at every prune.
    for (Gaussian3D& g : map.gaussians) {
        g.topk_count = 0;
        g.max_contribution = 0.0;
    }
    return removed;
}

StepRecord optimize_step(SceneMap& map, OptimizerState& opt, const MapperConfig& cfg,
                         std::int64_t iteration, std::mt19937_64& rng) {
    if (map.keyframes.empty()) throw std::runtime_error("optimize_step: no keyframes");

    StepRecord rec;
    rec.iteration = iteration;
    rec.keyframe = static_cast<int>(rng() % map.keyframes.size());
    const Keyframe& kf = map.keyframes[rec.keyframe];

    rec.feature_step = (iteration % cfg.schedule.feature_update_period) == 0;

    RenderOutput render = render_geometric(map, kf.pose, cfg.cam, cfg.render);
    if (rec.feature_step) render.feature = render_feature(map, render.topk);

    const LossResult loss = compute_losses(render, kf.frame, cfg.loss, rec.feature_step);
    rec.losses = loss.values;

    const GeomGrads grads =
        backward_geometric(map, kf.pose, cfg.cam, cfg.render, loss.grad_color, loss.grad_depth);

    const std::size_t n = map.size();
    {
        // Flatten parameters, update, write back.
        std::vector<double> buf(n * 3), gbuf(n * 3);
        const auto at3 = [](std::vector<double>& v, std::size_t i) {
            return Eigen::Map<Eigen::Vector3d>(v.data() + i * 3);
        };

        for (std::size_t i = 0; i < n; ++i) {
            at3(buf, i) = map.gaussians[i].mean;
            at3(gbuf, i) = grads.mean[i];
        }
        adam_step(opt.mean, cfg.adam, cfg.lr.mean, gbuf.data(), buf.data(), n);
        for (std::size_t i = 0; i < n; ++i) map.gaussians[i].mean = at3(buf, i);

        for (std::size_t i = 0; i < n; ++i) {
            at3(buf, i) = map.gaussians[i].log_scale;
            at3(gbuf, i) = grads.log_scale[i];
        }
        adam_step(opt.log_scale, cfg.adam, cfg.lr.log_scale, gbuf.data(), buf.data(), n);
        for (std::size_t i = 0; i < n; ++i)
            map.gaussians[i].log_scale =
                at3(buf, i).cwiseMax(cfg.min_log_scale).cwiseMin(cfg.max_log_scale);

        std::vector<double> qbuf(n * 4), qgbuf(n * 4);
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Quaterniond& q = map.gaussians[i].rotation;
            qbuf[i * 4 + 0] = q.w();
            qbuf[i * 4 + 1] = q.x();
            qbuf[i * 4 + 2] = q.y();
            qbuf[i * 4 + 3] = q.z();
            Eigen::Map<Eigen::Vector4d> g(qgbuf.data() + i * 4);
            g = grads.rotation[i];
        }
        adam_step(opt.rotation, cfg.adam, cfg.lr.rotation, qgbuf.data(), qbuf.data(), n);
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Quaterniond q(qbuf[i * 4 + 0], qbuf[i * 4 + 1], qbuf[i * 4 + 2], qbuf[i * 4 + 3]);
            map.gaussians[i].rotation = q.normalized();
        }

        std::vector<double> obuf(n), ogbuf(n);
        for (std::size_t i = 0; i < n; ++i) {
            obuf[i] = map.gaussians[i].opacity_logit;
            ogbuf[i] = grads.opacity_logit[i];
        }
        adam_step(opt.opacity, cfg.adam, cfg.lr.opacity, ogbuf.data(), obuf.data(), n);
        for (std::size_t i = 0; i < n; ++i) map.gaussians[i].opacity_logit = obuf[i];

        for (std::size_t i = 0; i < n; ++i) {
            at3(buf, i) = map.gaussians[i].color;
            at3(gbuf, i) = grads.color[i];
        }
        adam_step(opt.color, cfg.adam, cfg.lr.color, gbuf.data(), buf.data(), n);
        for (std::size_t i = 0; i < n; ++i)
            map.gaussians[i].color = at3(buf, i).cwiseMax(0.0).cwiseMin(1.0);
    }

    if (rec.feature_step && map.feature_dim > 0) {
        const std::vector<double> fgrad = backward_feature(map, render.topk, loss.grad_feature);
        const int d = map.feature_dim;
        std::vector<double> fbuf(n * d);
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c) fbuf[i * d + c] = map.gaussians[i].feature[c];
        adam_step(opt.feature, cfg.adam, cfg.lr.feature, fgrad.data(), fbuf.data(), n);
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Map<Eigen::VectorXd> f(&fbuf[i * d], d);
            const double norm = f.norm();
            if (norm > 1e-12) f /= norm;
            map.gaussians[i].feature = f;
        }
    }

    update_contribution_stats(map, render);

    if (cfg.pruning && cfg.schedule.prune_period > 0 && iteration > 0 &&
        iteration % cfg.schedule.prune_period == 0) {
        rec.pruned = prune_map(map, opt, cfg.schedule.prune_keep_ratio, rng(),
                               cfg.schedule.topk_count_threshold)
                         .size();
    }

    rec.gaussian_count = map.size();
    return rec;
}

}  // namespace fslam
