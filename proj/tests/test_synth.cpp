#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fslam/eval/metrics.hpp"
#include "fslam/synth/dataset.hpp"
#include "fslam/synth/scene.hpp"
#include "testutil.hpp"

using namespace fslam;
namespace tu = fslam::testutil;

namespace {

CameraIntrinsics small_camera() {
    CameraIntrinsics cam = tu::test_camera(64, 48);
    cam.far_plane = 20.0;
    return cam;
}

bool scenes_identical(const SyntheticScene& a, const SyntheticScene& b) {
    if (a.gaussians.size() != b.gaussians.size()) return false;
    for (std::size_t i = 0; i < a.gaussians.size(); ++i) {
        if (a.gaussians[i].mean != b.gaussians[i].mean) return false;
        if (a.gaussians[i].color != b.gaussians[i].color) return false;
        if (a.gaussians[i].feature != b.gaussians[i].feature) return false;
        if (a.class_ids[i] != b.class_ids[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("scene embeddings are orthonormal and classes populated") {
    SceneSpec spec;
    spec.classes = 4;
    spec.feature_dim = 16;
    const SyntheticScene scene = build_synthetic_scene(spec);

    const Eigen::MatrixXd gram = scene.embeddings * scene.embeddings.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-6);
    CHECK(scene.class_names.size() == 4);

    // Every class contributes gaussians; features equal their embedding.
    std::vector<int> counts(4, 0);
    for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
        ++counts[scene.class_ids[i]];
        CHECK((scene.gaussians[i].feature.transpose() -
               scene.embeddings.row(scene.class_ids[i])).norm() == 0.0);
    }
    for (const int c : counts) CHECK(c > 0);
}

TEST_CASE("single-class scenes carry only embedding zero") {
    SceneSpec spec;
    spec.classes = 1;
    spec.feature_dim = 4;
    spec.boxes = 0;
    const SyntheticScene scene = build_synthetic_scene(spec);
    for (const Gaussian3D& g : scene.gaussians) {
        CHECK(g.feature[0] == 1.0);
        CHECK(g.feature.tail(3).norm() == 0.0);
    }
}

TEST_CASE("scene generation is deterministic per seed") {
    SceneSpec spec;
    CHECK(scenes_identical(build_synthetic_scene(spec), build_synthetic_scene(spec)));
    SceneSpec other = spec;
    other.seed = 2;
    CHECK_FALSE(scenes_identical(build_synthetic_scene(spec), build_synthetic_scene(other)));
}

TEST_CASE("feature dim below class count is rejected") {
    SceneSpec spec;
    spec.classes = 8;
    spec.feature_dim = 4;
    CHECK_THROWS(build_synthetic_scene(spec));
}

TEST_CASE("orbit poses spread azimuth evenly") {
    SceneSpec spec;
    const std::vector<Pose> poses = generate_trajectory(TrajectoryKind::kOrbit, 4, spec);
    REQUIRE(poses.size() == 4);
    // Consecutive camera centers are a quarter turn apart around the room center.
    const Eigen::Vector3d center = 0.5 * (spec.room_min + spec.room_max);
    for (int i = 0; i < 4; ++i) {
        const Pose c2w = se3_inverse(poses[i]);
        const Pose c2w_next = se3_inverse(poses[(i + 1) % 4]);
        const Eigen::Vector3d a = (c2w.translation - center).normalized();
        const Eigen::Vector3d b = (c2w_next.translation - center).normalized();
        CHECK(a.dot(b) == doctest::Approx(0.0).epsilon(1e-9));
    }
    CHECK_THROWS(generate_trajectory(TrajectoryKind::kOrbit, 1, spec));
}

TEST_CASE("trajectories are smooth for dense sampling") {
    SceneSpec spec;
    const double diag = (spec.room_max - spec.room_min).norm();
    for (const TrajectoryKind kind : {TrajectoryKind::kOrbit, TrajectoryKind::kLawnmower}) {
        const std::vector<Pose> poses = generate_trajectory(kind, 100, spec);
        for (std::size_t i = 1; i < poses.size(); ++i) {
            CHECK(rotation_distance(poses[i - 1], poses[i]) < 5.0 * M_PI / 180.0);
            CHECK(translation_distance(poses[i - 1], poses[i]) < 0.02 * diag);
        }
    }
}

TEST_CASE("lawnmower endpoints sit at opposing corners") {
    SceneSpec spec;
    const std::vector<Pose> poses = generate_trajectory(TrajectoryKind::kLawnmower, 50, spec);
    const Eigen::Vector3d first = se3_inverse(poses.front()).translation;
    const Eigen::Vector3d last = se3_inverse(poses.back()).translation;
    // Opposite signs in both ground axes relative to the room center.
    const Eigen::Vector3d center = 0.5 * (spec.room_min + spec.room_max);
    CHECK((first.x() - center.x()) * (last.x() - center.x()) < 0.0);
    CHECK((first.y() - center.y()) * (last.y() - center.y()) < 0.0);
    // And near-maximal ground-plane separation within the swept rectangle.
    CHECK((first - last).head<2>().norm() > 0.8 * (last - center).head<2>().norm() * 2.0);
}

TEST_CASE("ground-truth frames are self-consistent") {
    SceneSpec spec;
    spec.spacing = 0.08;
    const SyntheticScene scene = build_synthetic_scene(spec);
    const CameraIntrinsics cam = small_camera();
    const std::vector<Pose> poses = generate_trajectory(TrajectoryKind::kOrbit, 3, spec);
    const std::vector<Frame> frames = render_ground_truth(scene, poses, cam);
    REQUIRE(frames.size() == 3);

    SemanticAccumulator acc(spec.classes);
    std::size_t covered = 0;
    for (const Frame& f : frames) {
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                const std::uint8_t label = f.label.at(x, y);
                Eigen::VectorXd feat(spec.feature_dim);
                for (int c = 0; c < spec.feature_dim; ++c) feat[c] = f.feature.at(x, y, c);
                if (label == kInvalidLabel) {
                    CHECK(f.depth.at(x, y) == 0.0f);
                    CHECK(feat.norm() == 0.0);
                } else {
                    ++covered;
                    CHECK(f.depth.at(x, y) > 0.0f);
                    // Valid features equal one class embedding exactly.
                    CHECK((feat.transpose() - scene.embeddings.row(label)).norm() == 0.0);
                }
            }
        // Classifying the frame's own features recovers its labels exactly.
        ImageD feat_d = image_cast<double>(f.feature);
        acc.add(segment_by_query(feat_d, scene.embeddings), f.label);
    }
    CHECK(covered > 0);
    const SemanticMetrics sm = acc.result();
    CHECK(sm.accuracy == 1.0);
    CHECK(sm.miou == 1.0);
}

TEST_CASE("datasets round-trip through disk") {
    const tu::TempDir dir("dataset");
    SceneSpec spec;
    spec.spacing = 0.1;
    spec.feature_dim = 8;
    const SyntheticScene scene = build_synthetic_scene(spec);
    const CameraIntrinsics cam = small_camera();
    const std::vector<Pose> poses = generate_trajectory(TrajectoryKind::kOrbit, 3, spec);
    const std::vector<Frame> frames = render_ground_truth(scene, poses, cam);

    DatasetManifest manifest;
    manifest.frame_count = 3;
    manifest.intrinsics = cam;
    manifest.feature_dim = 8;
    manifest.class_names = scene.class_names;
    write_dataset(frames, poses, scene.embeddings, manifest, dir.str());

    std::vector<Frame> frames2;
    Trajectory poses2;
    DatasetManifest manifest2;
    Eigen::MatrixXd embeddings2;
    read_dataset(dir.str(), frames2, poses2, manifest2, embeddings2);

    REQUIRE(frames2.size() == 3);
    CHECK(manifest2.frame_count == 3);
    CHECK(manifest2.intrinsics.fx == cam.fx);
    CHECK(manifest2.class_names == scene.class_names);
    CHECK((embeddings2 - scene.embeddings).norm() == 0.0);

    for (int i = 0; i < 3; ++i) {
        // Features and labels are bit-exact; depth within half a quantum.
        CHECK(frames2[i].feature.data == frames[i].feature.data);
        CHECK(frames2[i].label.data == frames[i].label.data);
        REQUIRE(frames2[i].depth.data.size() == frames[i].depth.data.size());
        for (std::size_t p = 0; p < frames[i].depth.data.size(); ++p)
            CHECK(std::abs(frames2[i].depth.data[p] - frames[i].depth.data[p]) <=
                  0.5 / manifest.depth_scale + 1e-9);
        for (std::size_t p = 0; p < frames[i].color.data.size(); ++p)
            CHECK(std::abs(frames2[i].color.data[p] - frames[i].color.data[p]) <= 0.5 / 255.0 + 1e-6);
        // Poses come back at double precision. The file stores the inverse
        // transform, so one inversion's rounding (an ulp or two) is the
        // floor; the angle metric additionally loses half the digits near
        // the identity.
        CHECK(rotation_distance(poses2[i].pose, poses[i]) < 1e-7);
        CHECK(translation_distance(poses2[i].pose, poses[i]) < 1e-12);
    }
}

TEST_CASE("corrupt dataset files raise errors naming the file") {
    const tu::TempDir dir("corrupt");
    SceneSpec spec;
    spec.spacing = 0.12;
    spec.feature_dim = 4;
    const SyntheticScene scene = build_synthetic_scene(spec);
    const CameraIntrinsics cam = small_camera();
    const std::vector<Pose> poses = generate_trajectory(TrajectoryKind::kOrbit, 2, spec);
    const std::vector<Frame> frames = render_ground_truth(scene, poses, cam);

    DatasetManifest manifest;
    manifest.frame_count = 2;
    manifest.intrinsics = cam;
    manifest.feature_dim = 4;
    manifest.class_names = scene.class_names;
    write_dataset(frames, poses, scene.embeddings, manifest, dir.str());

    // Truncate one feature file; the error must name it.
    const std::string victim = (dir.path() / "feature" / "000001.bin").string();
    std::filesystem::resize_file(victim, 24);
    const DatasetReader reader(dir.str());
    CHECK(reader.read_frame(0).feature.channels == 4);
    try {
        reader.read_frame(1);
        FAIL("expected a read error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("000001.bin") != std::string::npos);
    }

    std::filesystem::remove(dir.path() / "color" / "000000.png");
    try {
        reader.read_frame(0);
        FAIL("expected a read error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("000000.png") != std::string::npos);
    }

    CHECK_THROWS(DatasetReader((dir.path() / "nonexistent").string()));
}

TEST_CASE("depth noise is seeded and bounded to valid pixels") {
    SceneSpec spec;
    spec.spacing = 0.12;
    const SyntheticScene scene = build_synthetic_scene(spec);
    const CameraIntrinsics cam = small_camera();
    const std::vector<Pose> poses = generate_trajectory(TrajectoryKind::kOrbit, 2, spec);

    std::vector<Frame> a = render_ground_truth(scene, poses, cam);
    std::vector<Frame> b = a;
    const std::vector<Frame> clean = a;
    add_depth_noise(a, 0.01, 7);
    add_depth_noise(b, 0.01, 7);
    for (int i = 0; i < 2; ++i) {
        CHECK(a[i].depth.data == b[i].depth.data);
        for (std::size_t p = 0; p < a[i].depth.data.size(); ++p) {
            if (clean[i].depth.data[p] == 0.0f)
                CHECK(a[i].depth.data[p] == 0.0f);  // invalid pixels untouched
            else
                CHECK(a[i].depth.data[p] != clean[i].depth.data[p]);
        }
    }
}
