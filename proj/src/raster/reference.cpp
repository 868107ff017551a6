#include "fslam/raster/reference.hpp"

#include <algorithm>
#include <cmath>

#include "fslam/core/projection.hpp"

namespace fslam {

namespace {

struct RefProj {
    Eigen::Vector2d mean2d;
    Eigen::Matrix2d inv_cov;
    double z;
    double opacity;
    std::int32_t src;
};

}  // namespace

ReferenceRender render_reference(const SceneMap& map, const Pose& pose, const CameraIntrinsics& cam,
                                 const RenderSettings& settings, const ReferenceOptions& opts) {
    const int w = cam.width, h = cam.height;
    const int k = std::min(settings.top_k, kMaxTopK);
    const int d = map.feature_dim;

    ReferenceRender out;
    out.color = ImageD(w, h, 3);
    out.depth = ImageD(w, h, 1);
    out.alpha = ImageD(w, h, 1);
    out.transmittance = ImageD(w, h, 1, 1.0);
    if (opts.with_features) out.feature_blend = ImageD(w, h, d);
    out.topk = TopKGrid(w, h, k);
    out.contributions.assign(map.size(), 0.0);
    if (opts.keep_records) out.records.resize(static_cast<std::size_t>(w) * h);

    std::vector<RefProj> proj;
    proj.reserve(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        const Projected2D p = project_gaussian(map.gaussians[i], pose, cam, settings.cov2d_dilation);
        if (!p.visible) continue;
        const double det = p.cov2d.determinant();
        if (!(det > 0.0) || !std::isfinite(det)) continue;
        proj.push_back({p.mean2d, p.cov2d.inverse(), p.depth, map.gaussians[i].opacity(),
                        static_cast<std::int32_t>(i)});
    }
    std::stable_sort(proj.begin(), proj.end(),
                     [](const RefProj& a, const RefProj& b) { return a.z < b.z; });

    std::vector<std::pair<std::int32_t, double>> pixel_hits;  // (position in proj sweep, weight)
    std::vector<int> sel;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double transmittance = 1.0;
            Eigen::Vector3d acc_color = Eigen::Vector3d::Zero();
            double acc_d = 0.0, acc_w = 0.0;
            pixel_hits.clear();

            for (std::size_t pi = 0; pi < proj.size(); ++pi) {
                const RefProj& e = proj[pi];
                const Eigen::Vector2d diff(x - e.mean2d.x(), y - e.mean2d.y());
                const double power = -0.5 * diff.dot(e.inv_cov * diff);
                if (power < raster_detail::kLogWeightCutoff) continue;
                double alpha = e.opacity * std::exp(power);
                if (alpha > settings.alpha_clamp) alpha = settings.alpha_clamp;
                const double weight = alpha * transmittance;
                if (weight > 0.0) {
                    acc_color += weight * map.gaussians[e.src].color;
                    acc_d += weight * e.z;
                    acc_w += weight;
                    pixel_hits.emplace_back(static_cast<std::int32_t>(pi), weight);
                    if (opts.with_features) {
                        double* px = &out.feature_blend.at(x, y, 0);
                        const Eigen::VectorXd& f = map.gaussians[e.src].feature;
                        for (int c = 0; c < d; ++c) px[c] += weight * f[c];
                    }
                    if (weight > out.contributions[e.src]) out.contributions[e.src] = weight;
                }
                transmittance *= 1.0 - alpha;
                if (transmittance < settings.transmittance_floor) break;
            }

            acc_color += transmittance * settings.background;
            out.color.at(x, y, 0) = acc_color.x();
            out.color.at(x, y, 1) = acc_color.y();
            out.color.at(x, y, 2) = acc_color.z();
            out.depth.at(x, y) = acc_d;
            out.alpha.at(x, y) = acc_w;
            out.transmittance.at(x, y) = transmittance;

            // Independent Top-K selection: full sort by (weight desc, depth asc, index asc).
            sel.resize(pixel_hits.size());
            for (std::size_t i = 0; i < sel.size(); ++i) sel[i] = static_cast<int>(i);
            std::sort(sel.begin(), sel.end(), [&](int a, int b) {
                if (pixel_hits[a].second != pixel_hits[b].second)
                    return pixel_hits[a].second > pixel_hits[b].second;
                const RefProj& pa = proj[pixel_hits[a].first];
                const RefProj& pb = proj[pixel_hits[b].first];
                if (pa.z != pb.z) return pa.z < pb.z;
                return pa.src < pb.src;
            });
            const int cnt = std::min<int>(k, static_cast<int>(sel.size()));
            out.topk.count[out.topk.pixel(x, y)] = static_cast<std::uint8_t>(cnt);
            for (int j = 0; j < cnt; ++j) {
                const std::size_t s = out.topk.slot(x, y, j);
                out.topk.index[s] = proj[pixel_hits[sel[j]].first].src;
                out.topk.weight[s] = pixel_hits[sel[j]].second;
            }

            if (opts.keep_records) {
                auto& rec = out.records[static_cast<std::size_t>(y) * w + x];
                rec.reserve(pixel_hits.size());
                for (const auto& [pi, weight] : pixel_hits) rec.emplace_back(proj[pi].src, weight);
            }
        }
    }

    return out;
}

}  // namespace fslam
