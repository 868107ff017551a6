#include "fslam/synth/scene.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "fslam/map/scene_map.hpp"
#include "fslam/raster/render.hpp"

namespace fslam {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

struct Surface {
    Eigen::Vector3d origin;  // corner
    Eigen::Vector3d u_axis;  // unit
    Eigen::Vector3d v_axis;  // unit
    double u_len = 0, v_len = 0;
    Eigen::Vector3d normal;  // into the room
    std::uint8_t class_id = 0;
    Eigen::Vector3d color;
};

const char* kKindNames[4] = {"floor", "ceiling", "wall", "box"};

Eigen::Vector3d palette(int class_id) {
    static const Eigen::Vector3d table[] = {
        {0.85, 0.35, 0.25}, {0.30, 0.65, 0.85}, {0.80, 0.75, 0.40}, {0.40, 0.80, 0.45},
        {0.70, 0.45, 0.80}, {0.90, 0.60, 0.30}, {0.35, 0.80, 0.75}, {0.60, 0.60, 0.60},
    };
    return table[class_id % 8];
}

void tile_surface(const Surface& s, const SceneSpec& spec, const Eigen::MatrixXd& embeddings,
                  std::mt19937_64& rng, std::vector<Gaussian3D>& out,
                  std::vector<std::uint8_t>& class_ids) {
    const int nu = std::max(1, static_cast<int>(std::round(s.u_len / spec.spacing)));
    const int nv = std::max(1, static_cast<int>(std::round(s.v_len / spec.spacing)));
    const double du = s.u_len / nu, dv = s.v_len / nv;

    const Eigen::Quaterniond rot =
        Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), s.normal);
    const double tangent_scale = 0.6 * spec.spacing;
    const double normal_scale = 0.05 * spec.spacing;
    const Eigen::Vector3d log_scale(std::log(tangent_scale), std::log(tangent_scale),
                                    std::log(normal_scale));

    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
            const double ju = uniform(rng, -spec.jitter, spec.jitter) * du;
            const double jv = uniform(rng, -spec.jitter, spec.jitter) * dv;
            Gaussian3D g;
            g.mean = s.origin + (i + 0.5) * du * s.u_axis + (j + 0.5) * dv * s.v_axis +
                     ju * s.u_axis + jv * s.v_axis;
            g.log_scale = log_scale;
            g.rotation = rot;
            g.opacity_logit = logit(spec.opacity);
            g.color = s.color;
            g.feature = embeddings.row(s.class_id);
            out.push_back(std::move(g));
            class_ids.push_back(s.class_id);
        }
    }
}

}  // namespace

SyntheticScene build_synthetic_scene(const SceneSpec& spec) {
    if (spec.feature_dim < spec.classes)
        throw std::invalid_argument("build_synthetic_scene: feature_dim (" +
                                    std::to_string(spec.feature_dim) + ") must be >= classes (" +
                                    std::to_string(spec.classes) + ")");

    SyntheticScene scene;
    scene.spec = spec;
    scene.embeddings = Eigen::MatrixXd::Zero(spec.classes, spec.feature_dim);
    for (int c = 0; c < spec.classes; ++c) scene.embeddings(c, c) = 1.0;
    for (int c = 0; c < spec.classes; ++c)
        scene.class_names.push_back(c < 4 ? kKindNames[c] : "class" + std::to_string(c));

    const auto cls = [&](int kind) { return static_cast<std::uint8_t>(std::min(kind, spec.classes - 1)); };
    const Eigen::Vector3d lo = spec.room_min, hi = spec.room_max;
    const Eigen::Vector3d ext = hi - lo;

    std::vector<Surface> surfaces;
    // Floor and ceiling.
    surfaces.push_back({lo, Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), ext.x(), ext.y(),
                        Eigen::Vector3d::UnitZ(), cls(0), palette(cls(0))});
    surfaces.push_back({{lo.x(), lo.y(), hi.z()}, Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(),
                        ext.x(), ext.y(), -Eigen::Vector3d::UnitZ(), cls(1), palette(cls(1))});
    // Four walls, inward normals; shade each wall slightly differently.
    const Surface walls[4] = {
        {{lo.x(), lo.y(), lo.z()}, Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitZ(), ext.x(),
         ext.z(), Eigen::Vector3d::UnitY(), cls(2), palette(cls(2))},
        {{lo.x(), hi.y(), lo.z()}, Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitZ(), ext.x(),
         ext.z(), -Eigen::Vector3d::UnitY(), cls(2), palette(cls(2)) * 0.85},
        {{lo.x(), lo.y(), lo.z()}, Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ(), ext.y(),
         ext.z(), Eigen::Vector3d::UnitX(), cls(2), palette(cls(2)) * 0.7},
        {{hi.x(), lo.y(), lo.z()}, Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ(), ext.y(),
         ext.z(), -Eigen::Vector3d::UnitX(), cls(2), palette(cls(2)) * 0.55},
    };
    for (const Surface& w : walls) surfaces.push_back(w);

    std::mt19937_64 rng(spec.seed);

    // Axis-aligned boxes on the floor: four sides plus a top. They anchor
    // tracking: a bare box room is rotationally self-similar and
    // plane-regularized alignment cannot observe in-plane sliding.
    for (int b = 0; b < spec.boxes; ++b) {
        const double sx = uniform(rng, 0.18, 0.38) * ext.x();
        const double sy = uniform(rng, 0.18, 0.38) * ext.y();
        const double sz = uniform(rng, 0.25, 0.55) * ext.z();
        const double ang = 2.0 * M_PI * (b + uniform(rng, 0.0, 0.6)) / std::max(1, spec.boxes);
        const double rad = uniform(rng, 0.45, 0.8) * 0.5 * std::min(ext.x(), ext.y());
        const double cx = std::clamp(0.5 * (lo.x() + hi.x()) + rad * std::cos(ang),
                                     lo.x() + 0.2 * ext.x(), hi.x() - 0.2 * ext.x());
        const double cy = std::clamp(0.5 * (lo.y() + hi.y()) + rad * std::sin(ang),
                                     lo.y() + 0.2 * ext.y(), hi.y() - 0.2 * ext.y());
        const Eigen::Vector3d bl(cx - 0.5 * sx, cy - 0.5 * sy, lo.z());
        const Eigen::Vector3d bh(cx + 0.5 * sx, cy + 0.5 * sy, lo.z() + sz);
        const std::uint8_t c = cls(3);
        const Eigen::Vector3d col = palette(c) * (1.0 - 0.25 * b);

        surfaces.push_back({{bl.x(), bl.y(), bh.z()}, Eigen::Vector3d::UnitX(),
                            Eigen::Vector3d::UnitY(), sx, sy, Eigen::Vector3d::UnitZ(), c, col});
        surfaces.push_back({{bl.x(), bl.y(), bl.z()}, Eigen::Vector3d::UnitX(),
                            Eigen::Vector3d::UnitZ(), sx, sz, -Eigen::Vector3d::UnitY(), c, col});
        surfaces.push_back({{bl.x(), bh.y(), bl.z()}, Eigen::Vector3d::UnitX(),
                            Eigen::Vector3d::UnitZ(), sx, sz, Eigen::Vector3d::UnitY(), c, col});
        surfaces.push_back({{bl.x(), bl.y(), bl.z()}, Eigen::Vector3d::UnitY(),
                            Eigen::Vector3d::UnitZ(), sy, sz, -Eigen::Vector3d::UnitX(), c, col});
        surfaces.push_back({{bh.x(), bl.y(), bl.z()}, Eigen::Vector3d::UnitY(),
                            Eigen::Vector3d::UnitZ(), sy, sz, Eigen::Vector3d::UnitX(), c, col});
    }

    for (const Surface& s : surfaces)
        tile_surface(s, spec, scene.embeddings, rng, scene.gaussians, scene.class_ids);
    return scene;
}

namespace {

Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
    // Camera axes: x right, y down, z forward; world up is +z.
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
    if (std::abs(forward.dot(up)) > 0.999) up = Eigen::Vector3d::UnitY();
    const Eigen::Vector3d right = forward.cross(up).normalized();
    const Eigen::Vector3d down = forward.cross(right).normalized();

    Eigen::Matrix3d cam_to_world;
    cam_to_world.col(0) = right;
    cam_to_world.col(1) = down;
    cam_to_world.col(2) = forward;

    Pose pose;  // world-to-camera
    pose.rotation = Eigen::Quaterniond(cam_to_world.transpose()).normalized();
    pose.translation = -(pose.rotation * eye);
    return pose;
}

}  // namespace

std::vector<Pose> generate_trajectory(TrajectoryKind kind, int n, const SceneSpec& spec) {
    if (n < 2) throw std::invalid_argument("generate_trajectory: need at least 2 poses");
    const Eigen::Vector3d center = 0.5 * (spec.room_min + spec.room_max);
    const Eigen::Vector3d ext = spec.room_max - spec.room_min;

    std::vector<Pose> out;
    out.reserve(n);

    if (kind == TrajectoryKind::kOrbit) {
        // Elevated ring, pitched down at the floor region: the view keeps the
        // obstacles and wall bases in frame, so every azimuth is distinctive.
        const double radius = 0.3 * std::min(ext.x(), ext.y());
        const Eigen::Vector3d eye_base(center.x(), center.y(), spec.room_min.z() + 0.72 * ext.z());
        const Eigen::Vector3d target(center.x(), center.y(), spec.room_min.z() + 0.25 * ext.z());
        for (int i = 0; i < n; ++i) {
            const double az = 2.0 * M_PI * i / n;
            const Eigen::Vector3d eye =
                eye_base + Eigen::Vector3d(radius * std::cos(az), radius * std::sin(az), 0.0);
            // Look across the ring at the floor ahead.
            const Eigen::Vector3d ahead =
                target - 2.2 * Eigen::Vector3d(radius * std::cos(az), radius * std::sin(az), 0.0);
            out.push_back(look_at(eye, ahead));
        }
        return out;
    }

    // Lawnmower: three serpentine rows at constant attitude so consecutive
    // orientations are identical; endpoints sit at opposing inset corners.
    const double inset = 0.3;
    const double x0 = spec.room_min.x() + inset * ext.x(), x1 = spec.room_max.x() - inset * ext.x();
    const double y0 = spec.room_min.y() + inset * ext.y(), y1 = spec.room_max.y() - inset * ext.y();
    const double z = center.z() + 0.1 * ext.z();
    const double rows[3] = {y0, 0.5 * (y0 + y1), y1};

    std::vector<Eigen::Vector3d> waypoints;
    for (int r = 0; r < 3; ++r) {
        const bool forward = (r % 2) == 0;
        waypoints.emplace_back(forward ? x0 : x1, rows[r], z);
        waypoints.emplace_back(forward ? x1 : x0, rows[r], z);
    }

    std::vector<double> cum{0.0};
    for (std::size_t i = 1; i < waypoints.size(); ++i)
        cum.push_back(cum.back() + (waypoints[i] - waypoints[i - 1]).norm());
    const double total = cum.back();

    // Fixed attitude: toward +x, pitched down at the floor ahead.
    const Eigen::Vector3d gaze = Eigen::Vector3d(1.0, 0.0, -0.55).normalized();
    const Pose attitude = look_at(Eigen::Vector3d::Zero(), gaze);

    for (int i = 0; i < n; ++i) {
        const double s = total * i / (n - 1);
        std::size_t seg = 1;
        while (seg + 1 < cum.size() && cum[seg] < s) ++seg;
        const double t = (s - cum[seg - 1]) / std::max(1e-12, cum[seg] - cum[seg - 1]);
        const Eigen::Vector3d eye = (1.0 - t) * waypoints[seg - 1] + t * waypoints[seg];
        Pose pose = attitude;
        pose.translation = -(pose.rotation * eye);
        out.push_back(pose);
    }
    return out;
}

std::vector<Frame> render_ground_truth(const SyntheticScene& scene, const std::vector<Pose>& poses,
                                       const CameraIntrinsics& cam, double fps) {
    SceneMap map;
    map.gaussians = scene.gaussians;
    map.feature_dim = static_cast<int>(scene.embeddings.cols());

    RenderSettings settings;
    settings.top_k = 1;
    settings.transmittance_floor = 1e-4;
    settings.background = Eigen::Vector3d::Zero();

    const int d = map.feature_dim;
    std::vector<Frame> frames;
    frames.reserve(poses.size());

    for (std::size_t fi = 0; fi < poses.size(); ++fi) {
        const RenderOutput render = render_geometric(map, poses[fi], cam, settings);

        Frame frame;
        frame.timestamp = static_cast<double>(fi) / fps;
        frame.color = ImageF(cam.width, cam.height, 3);
        frame.depth = ImageF(cam.width, cam.height, 1);
        frame.feature = ImageF(cam.width, cam.height, d);
        frame.label = ImageU8(cam.width, cam.height, 1, kInvalidLabel);

        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                for (int c = 0; c < 3; ++c)
                    frame.color.at(x, y, c) =
                        static_cast<float>(std::clamp(render.color.at(x, y, c), 0.0, 1.0));
                const bool covered =
                    render.alpha.at(x, y) > 0.5 && render.topk.count[render.topk.pixel(x, y)] > 0;
                if (!covered) continue;
                frame.depth.at(x, y) = static_cast<float>(render.depth.at(x, y));
                const std::int32_t g = render.topk.index[render.topk.slot(x, y, 0)];
                const std::uint8_t cls = scene.class_ids[g];
                frame.label.at(x, y) = cls;
                for (int c = 0; c < d; ++c)
                    frame.feature.at(x, y, c) = static_cast<float>(scene.embeddings(cls, c));
            }
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

void add_depth_noise(std::vector<Frame>& frames, double sigma, std::uint64_t seed) {
    if (sigma <= 0.0) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (Frame& f : frames)
        for (float& d : f.depth.data)
            if (d > 0.0f) d = static_cast<float>(std::max(1e-4, d + noise(rng)));
}

}  // namespace fslam
