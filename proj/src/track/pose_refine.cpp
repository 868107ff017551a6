#include "fslam/track/pose_refine.hpp"

#include "fslam/raster/backward.hpp"

namespace fslam {

namespace {

double geometric_loss(const SceneMap& map, const Frame& frame, const CameraIntrinsics& cam,
                      const Pose& pose, const RefineParams& params) {
    const RenderOutput render = render_geometric(map, pose, cam, params.render);
    return compute_losses(render, frame, params.loss, /*include_feature=*/false).values.geo;
}

}  // namespace

Vec6 pose_loss_gradient(const SceneMap& map, const Frame& frame, const CameraIntrinsics& cam,
                        const Pose& pose, const RefineParams& params, double* loss_out) {
    const RenderOutput render = render_geometric(map, pose, cam, params.render);
    const LossResult loss = compute_losses(render, frame, params.loss, /*include_feature=*/false);
    if (loss_out) *loss_out = loss.values.geo;

    // compute_losses folds lambda_geo into the upstream gradients; undo it so
    // the gradient matches the plain geometric loss.
    ImageD grad_color = loss.grad_color;
    ImageD grad_depth = loss.grad_depth;
    if (params.loss.lambda_geo != 1.0 && params.loss.lambda_geo != 0.0) {
        for (double& v : grad_color.data) v /= params.loss.lambda_geo;
        for (double& v : grad_depth.data) v /= params.loss.lambda_geo;
    }
    return backward_geometric(map, pose, cam, params.render, grad_color, grad_depth).pose_twist;
}

Pose refine_pose_photometric(const SceneMap& map, const Frame& frame, const CameraIntrinsics& cam,
                             const Pose& init, const RefineParams& params) {
    // First-order descent with per-coordinate adaptive steps. Plain steepest
    // descent with a line search stalls on the kink intersections of the L1
    // landscape; per-coordinate normalization walks through them. The best
    // pose seen is returned, so the result never degrades the loss.
    Pose pose = init;
    Pose best_pose = init;
    double best_loss = geometric_loss(map, frame, cam, pose, params);

    Vec6 m = Vec6::Zero(), v = Vec6::Zero();
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-12;

    for (int iter = 1; iter <= params.iterations; ++iter) {
        double current = 0.0;
        const Vec6 grad = pose_loss_gradient(map, frame, cam, pose, params, &current);
        if (current < best_loss) {
            best_loss = current;
            best_pose = pose;
        }
        if (!(grad.norm() > 0.0)) break;

        m = kBeta1 * m + (1.0 - kBeta1) * grad;
        v = kBeta2 * v.array().max(0.0).matrix() + (1.0 - kBeta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(kBeta1, iter);
        const double bc2 = 1.0 - std::pow(kBeta2, iter);
        Vec6 step;
        for (int k = 0; k < 6; ++k)
            step[k] = -params.step_size * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + kEps);
        pose = se3_apply_twist(step, pose);
    }

    const double final_loss = geometric_loss(map, frame, cam, pose, params);
    return final_loss < best_loss ? pose : best_pose;
}

}  // namespace fslam
