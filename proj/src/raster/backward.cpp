#include "fslam/raster/backward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fslam {

namespace {

using raster_detail::kLogWeightCutoff;
using raster_detail::PreparedScene;
using raster_detail::ProjEntry;

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

// Intermediate-space gradient slots per Gaussian.
struct MidGrad {
    double mx = 0, my = 0;           // projected mean
    double ixx = 0, ixy = 0, iyy = 0;  // inverse 2D covariance entries
    double z = 0;
    double opacity = 0;              // w.r.t. opacity value (pre-logit)
    double cr = 0, cg = 0, cb = 0;   // color
};

struct PixContrib {
    std::int32_t entry;  // index into prep.entries
    double alpha;
    double weight;
    double t_before;  // transmittance before this contributor
    double gexp;      // exp(power)
    bool clamped;
};

// d(R)/d(q_k) for a unit quaternion q = (w, x, y, z).
void rotation_jacobians(const Eigen::Quaterniond& q, Eigen::Matrix3d dr[4]) {
    const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
    dr[0] << 0, -2 * z, 2 * y,
             2 * z, 0, -2 * x,
             -2 * y, 2 * x, 0;
    dr[1] << 0, 2 * y, 2 * z,
             2 * y, -4 * x, -2 * w,
             2 * z, 2 * w, -4 * x;
    dr[2] << -4 * y, 2 * x, 2 * w,
             2 * x, 0, 2 * z,
             -2 * w, 2 * z, -4 * y;
    dr[3] << -4 * z, -2 * w, 2 * x,
             2 * w, -4 * z, 2 * y,
             2 * x, 2 * y, 0;
}

}  // namespace

GeomGrads backward_geometric(const SceneMap& map, const Pose& pose, const CameraIntrinsics& cam,
                             const RenderSettings& settings, const ImageD& grad_color,
                             const ImageD& grad_depth) {
    const PreparedScene prep = raster_detail::prepare_scene(map, pose, cam, settings);
    const std::size_t n = map.size();

    const int n_threads = max_threads();
    std::vector<std::vector<MidGrad>> partials(n_threads);

    const int ts = settings.tile_size;
    const int n_tiles = prep.tiles_x * prep.tiles_y;
    const int w = prep.width, h = prep.height;

#pragma omp parallel
    {
        std::vector<MidGrad>& mid = partials[thread_id()];
        mid.assign(n, MidGrad{});
        std::vector<PixContrib> stack;

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
                    const Eigen::Vector3d gc(grad_color.at(x, y, 0), grad_color.at(x, y, 1),
                                             grad_color.at(x, y, 2));
                    const double gd = grad_depth.empty() ? 0.0 : grad_depth.at(x, y);
                    if (gc.isZero(0.0) && gd == 0.0) continue;

                    // Replay the forward sweep.
                    stack.clear();
                    double transmittance = 1.0;
                    for (int li = 0; li < list_n; ++li) {
                        const ProjEntry& e = prep.entries[list[li]];
                        const double dx = x - e.mx, dy = y - e.my;
                        const double power =
                            -0.5 * (e.ixx * dx * dx + e.iyy * dy * dy) - e.ixy * dx * dy;
                        if (power < kLogWeightCutoff) continue;
                        const double gexp = std::exp(power);
                        double alpha = e.opacity * gexp;
                        const bool clamped = alpha > settings.alpha_clamp;
                        if (clamped) alpha = settings.alpha_clamp;
                        stack.push_back({list[li], alpha, alpha * transmittance, transmittance, gexp,
                                         clamped});
                        transmittance *= 1.0 - alpha;
                        if (transmittance < settings.transmittance_floor) break;
                    }

                    // Suffix sums start from the background term.
                    Eigen::Vector3d suffix_color = transmittance * settings.background;
                    double suffix_depth = 0.0;

                    for (std::size_t si = stack.size(); si-- > 0;) {
                        const PixContrib& pc = stack[si];
                        const ProjEntry& e = prep.entries[pc.entry];
                        MidGrad& g = mid[e.src];
                        const Eigen::Vector3d& col = map.gaussians[e.src].color;

                        g.cr += gc.x() * pc.weight;
                        g.cg += gc.y() * pc.weight;
                        g.cb += gc.z() * pc.weight;
                        g.z += gd * pc.weight;

                        const double one_minus = 1.0 - pc.alpha;
                        const double d_alpha =
                            pc.t_before * (gc.dot(col) + gd * e.z) -
                            (gc.dot(suffix_color) + gd * suffix_depth) / one_minus;

                        suffix_color += pc.weight * col;
                        suffix_depth += pc.weight * e.z;

                        if (pc.clamped) continue;  // flat region of the clamp

                        g.opacity += d_alpha * pc.gexp;
                        const double d_power = d_alpha * pc.alpha;

                        const double dx = x - e.mx, dy = y - e.my;
                        g.mx += d_power * (e.ixx * dx + e.ixy * dy);
                        g.my += d_power * (e.ixy * dx + e.iyy * dy);
                        g.ixx += d_power * (-0.5 * dx * dx);
                        g.ixy += d_power * (-dx * dy);
                        g.iyy += d_power * (-0.5 * dy * dy);
                    }
                }
            }
        }
    }

    // Merge per-thread buffers in thread order.
    std::vector<MidGrad> mid(n);
    for (int t = 0; t < n_threads; ++t) {
        if (partials[t].empty()) continue;
        for (std::size_t i = 0; i < n; ++i) {
            MidGrad& a = mid[i];
            const MidGrad& b = partials[t][i];
            a.mx += b.mx; a.my += b.my;
            a.ixx += b.ixx; a.ixy += b.ixy; a.iyy += b.iyy;
            a.z += b.z; a.opacity += b.opacity;
            a.cr += b.cr; a.cg += b.cg; a.cb += b.cb;
        }
    }

    GeomGrads out;
    out.mean.assign(n, Eigen::Vector3d::Zero());
    out.log_scale.assign(n, Eigen::Vector3d::Zero());
    out.rotation.assign(n, Eigen::Vector4d::Zero());
    out.opacity_logit.assign(n, 0.0);
    out.color.assign(n, Eigen::Vector3d::Zero());

    const Eigen::Matrix3d rot_wc = pose.rotation_matrix();
    std::vector<Vec6> twist(n, Vec6::Zero());

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const MidGrad& g = mid[i];
        const bool touched = g.mx != 0 || g.my != 0 || g.ixx != 0 || g.ixy != 0 || g.iyy != 0 ||
                             g.z != 0 || g.opacity != 0 || g.cr != 0 || g.cg != 0 || g.cb != 0;
        if (!touched) continue;

        const Gaussian3D& gs = map.gaussians[i];
        out.color[i] = {g.cr, g.cg, g.cb};
        const double op = gs.opacity();
        out.opacity_logit[i] = g.opacity * op * (1.0 - op);

        // Recompute the projection intermediates.
        const Eigen::Vector3d p = rot_wc * gs.mean + pose.translation;
        const double z = p.z();
        const double inv_z = 1.0 / z, inv_z2 = inv_z * inv_z;

        Eigen::Matrix<double, 2, 3> j;
        j << cam.fx * inv_z, 0.0, -cam.fx * p.x() * inv_z2,
             0.0, cam.fy * inv_z, -cam.fy * p.y() * inv_z2;
        const Eigen::Matrix<double, 2, 3> a = j * rot_wc;

        const Eigen::Quaterniond q = gs.rotation.normalized();
        const Eigen::Matrix3d r = q.toRotationMatrix();
        const Eigen::Vector3d s2 = (2.0 * gs.log_scale).array().exp();
        const Eigen::Matrix3d sigma = r * s2.asDiagonal() * r.transpose();

        Eigen::Matrix2d cov2d = a * sigma * a.transpose();
        cov2d(0, 0) += settings.cov2d_dilation;
        cov2d(1, 1) += settings.cov2d_dilation;
        const Eigen::Matrix2d inv_cov = cov2d.inverse();

        // Gradient w.r.t. the inverse covariance as a matrix (off-diagonal
        // entries were accumulated once each).
        Eigen::Matrix2d g_inv;
        g_inv << g.ixx, 0.5 * g.ixy, 0.5 * g.ixy, g.iyy;
        const Eigen::Matrix2d g_cov2d = -inv_cov * g_inv * inv_cov;

        const Eigen::Matrix3d g_sigma = a.transpose() * g_cov2d * a;
        const Eigen::Matrix<double, 2, 3> g_a = 2.0 * g_cov2d * a * sigma;
        const Eigen::Matrix<double, 2, 3> g_j = g_a * rot_wc.transpose();
        const Eigen::Matrix3d g_w = j.transpose() * g_a;

        // Camera-space point gradient: projected mean, depth and the
        // dependence of the projection Jacobian on (x, y, z).
        Eigen::Vector3d g_pcam = Eigen::Vector3d::Zero();
        g_pcam.x() = g.mx * cam.fx * inv_z + g_j(0, 2) * (-cam.fx * inv_z2);
        g_pcam.y() = g.my * cam.fy * inv_z + g_j(1, 2) * (-cam.fy * inv_z2);
        g_pcam.z() = g.mx * (-cam.fx * p.x() * inv_z2) + g.my * (-cam.fy * p.y() * inv_z2) + g.z +
                     g_j(0, 0) * (-cam.fx * inv_z2) + g_j(0, 2) * (2.0 * cam.fx * p.x() * inv_z2 * inv_z) +
                     g_j(1, 1) * (-cam.fy * inv_z2) + g_j(1, 2) * (2.0 * cam.fy * p.y() * inv_z2 * inv_z);

        out.mean[i] = rot_wc.transpose() * g_pcam;

        // Scale gradient: sigma = R diag(exp(2 ls)) R^T.
        const Eigen::Matrix3d rtgr = r.transpose() * g_sigma * r;
        for (int kk = 0; kk < 3; ++kk) out.log_scale[i][kk] = 2.0 * s2[kk] * rtgr(kk, kk);

        // Rotation gradient through R(q) and the normalization of q.
        const Eigen::Matrix3d g_r = 2.0 * g_sigma * r * s2.asDiagonal();
        Eigen::Matrix3d dr[4];
        rotation_jacobians(q, dr);
        Eigen::Vector4d g_qhat;
        for (int kk = 0; kk < 4; ++kk) g_qhat[kk] = (g_r.array() * dr[kk].array()).sum();
        const Eigen::Vector4d qv(q.w(), q.x(), q.y(), q.z());
        const double qnorm = gs.rotation.norm();
        out.rotation[i] = (g_qhat - qv * qv.dot(g_qhat)) / qnorm;

        // Pose twist: dp_cam = nu + omega x p_cam, dW = [omega]x W.
        Vec6 tw = Vec6::Zero();
        tw.head<3>() = g_pcam;
        tw.tail<3>() = p.cross(g_pcam);
        const Eigen::Matrix3d gwwt = g_w * rot_wc.transpose();
        tw[3] += gwwt(2, 1) - gwwt(1, 2);
        tw[4] += gwwt(0, 2) - gwwt(2, 0);
        tw[5] += gwwt(1, 0) - gwwt(0, 1);
        twist[i] = tw;
    }

    for (std::size_t i = 0; i < n; ++i) out.pose_twist += twist[i];
    return out;
}

std::vector<double> backward_feature(const SceneMap& map, const TopKGrid& topk,
                                     const ImageD& grad_feature) {
    const int w = topk.width, h = topk.height, d = map.feature_dim;
    const std::int32_t n = static_cast<std::int32_t>(map.size());

    for (std::size_t s = 0; s < topk.index.size(); ++s) {
        if (topk.index[s] >= n)
            throw std::runtime_error("backward_feature: top-k record references gaussian " +
                                     std::to_string(topk.index[s]) + " but the map holds " +
                                     std::to_string(n) + " (stale snapshot)");
    }

    const int n_threads = max_threads();
    std::vector<std::vector<double>> partials(n_threads);

#pragma omp parallel
    {
        std::vector<double>& local = partials[thread_id()];
        local.assign(static_cast<std::size_t>(n) * d, 0.0);

#pragma omp for schedule(static)
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int cnt = topk.count[topk.pixel(x, y)];
                if (cnt == 0) continue;
                const double* gf = &grad_feature.at(x, y, 0);
                bool any = false;
                for (int c = 0; c < d; ++c)
                    if (gf[c] != 0.0) { any = true; break; }
                if (!any) continue;
                double sum = 0.0;
                for (int j = 0; j < cnt; ++j) sum += topk.weight[topk.slot(x, y, j)];
                for (int j = 0; j < cnt; ++j) {
                    const std::size_t s = topk.slot(x, y, j);
                    const double wn = topk.weight[s] / sum;
                    double* dst = local.data() + static_cast<std::size_t>(topk.index[s]) * d;
                    for (int c = 0; c < d; ++c) dst[c] += wn * gf[c];
                }
            }
        }
    }

    std::vector<double> out(static_cast<std::size_t>(n) * d, 0.0);
    for (int t = 0; t < n_threads; ++t) {
        if (partials[t].empty()) continue;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += partials[t][i];
    }
    return out;
}

}  // namespace fslam
