#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "fslam/map/checkpoint.hpp"
#include "fslam/map/mapper.hpp"
#include "fslam/raster/render.hpp"
#include "testutil.hpp"

using namespace fslam;
namespace tu = fslam::testutil;

namespace {

std::vector<SourcePoint> simple_sources(int n, int feature_dim) {
    std::vector<SourcePoint> out(n);
    for (int i = 0; i < n; ++i) {
        out[i].position = {0.1 * i, 0.0, 1.0 + 0.1 * i};
        out[i].color = {0.5, 0.5, 0.5};
        out[i].feature = Eigen::VectorXd::Zero(feature_dim);
        out[i].feature[i % feature_dim] = 1.0;
        out[i].spacing = 0.05;
    }
    return out;
}

// Exact marginal survival probabilities by expanding the draw tree:
// successive draws proportional to the remaining scores, uniform once the
// remaining mass is zero.
std::vector<double> survival_oracle(const std::vector<double>& scores, std::size_t keep) {
    const std::size_t n = scores.size();
    std::vector<double> marginal(n, 0.0);
    struct State {
        std::vector<int> pool;
        double prob;
        std::size_t left;
    };
    std::vector<State> stack;
    std::vector<int> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<int>(i);
    stack.push_back({all, 1.0, keep});
    while (!stack.empty()) {
        State s = stack.back();
        stack.pop_back();
        if (s.left == 0) continue;
        double mass = 0.0;
        for (const int i : s.pool) mass += scores[i];
        for (std::size_t p = 0; p < s.pool.size(); ++p) {
            const int idx = s.pool[p];
            const double pick =
                mass > 0.0 ? scores[idx] / mass : 1.0 / static_cast<double>(s.pool.size());
            if (pick <= 0.0) continue;
            marginal[idx] += s.prob * pick;
            State next;
            next.pool = s.pool;
            next.pool.erase(next.pool.begin() + static_cast<std::ptrdiff_t>(p));
            next.prob = s.prob * pick;
            next.left = s.left - 1;
            stack.push_back(std::move(next));
        }
    }
    return marginal;
}

SceneMap stats_map(const std::vector<int>& topk_counts, const std::vector<double>& max_contrib) {
    SceneMap map;
    map.feature_dim = 2;
    for (std::size_t i = 0; i < topk_counts.size(); ++i) {
        Gaussian3D g;
        g.mean = {static_cast<double>(i), 0, 1};
        g.feature = Eigen::VectorXd::Zero(2);
        g.feature[0] = 1.0;
        g.topk_count = topk_counts[i];
        g.max_contribution = max_contrib[i];
        map.gaussians.push_back(std::move(g));
    }
    return map;
}

}  // namespace

TEST_CASE("insertion keeps only far-enough points") {
    SceneMap map;
    OptimizerState opt(4);
    const std::vector<SourcePoint> source = simple_sources(3, 4);

    SUBCASE("all redundant") {
        const int n = insert_gaussians(map, opt, source, {0.01, 0.02, 0.03}, 0.05, Pose::identity());
        CHECK(n == 0);
        CHECK(map.size() == 0);
        CHECK(map.generation == 0);
    }
    SUBCASE("empty map inserts everything") {
        const std::vector<double> inf(3, kNoCorrespondence);
        const int n = insert_gaussians(map, opt, source, inf, 0.05, Pose::identity());
        CHECK(n == 3);
        CHECK(map.size() == 3);
        CHECK(opt.size() == 3);
        CHECK(map.generation == 1);
        for (const Gaussian3D& g : map.gaussians) {
            CHECK(g.opacity() == doctest::Approx(0.5));
            CHECK(std::abs(g.feature.norm() - 1.0) < 1e-9);
        }
    }
    SUBCASE("threshold rule") {
        const int n = insert_gaussians(map, opt, source, {0.01, 0.2, 0.07}, 0.05, Pose::identity());
        CHECK(n == 2);
        // Inserted means follow the world-frame source positions 1 and 2.
        CHECK((map.gaussians[0].mean - source[1].position).norm() < 1e-12);
        CHECK((map.gaussians[1].mean - source[2].position).norm() < 1e-12);
    }
    SUBCASE("world transform applied") {
        Pose pose;  // camera one unit along +x, world-to-camera
        pose.translation = {-1.0, 0.0, 0.0};
        const std::vector<SourcePoint> one = simple_sources(1, 4);
        const int n = insert_gaussians(map, opt, one, {kNoCorrespondence}, 0.05, pose);
        CHECK(n == 1);
        CHECK((map.gaussians[0].mean - Eigen::Vector3d(1.0, 0.0, 1.0)).norm() < 1e-12);
    }
}

TEST_CASE("contribution statistics accumulate from renders") {
    SceneMap map = stats_map({0, 0, 0}, {0.0, 0.0, 0.0});

    RenderOutput render;
    render.generation = map.generation;
    render.map_size = map.size();
    render.topk = TopKGrid(4, 3, 2);
    // Gaussian 0 selected in 12 slots across the grid, gaussian 1 in one.
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) {
            render.topk.count[render.topk.pixel(x, y)] = 1;
            render.topk.index[render.topk.slot(x, y, 0)] = 0;
            render.topk.weight[render.topk.slot(x, y, 0)] = 0.5;
        }
    render.topk.count[render.topk.pixel(0, 0)] = 2;
    render.topk.index[render.topk.slot(0, 0, 1)] = 1;
    render.topk.weight[render.topk.slot(0, 0, 1)] = 0.25;
    render.contributions = {0.4, 0.25, 0.0};

    update_contribution_stats(map, render);
    CHECK(map.gaussians[0].topk_count == 12);
    CHECK(map.gaussians[1].topk_count == 1);
    CHECK(map.gaussians[2].topk_count == 0);
    CHECK(map.gaussians[0].max_contribution == 0.4);
    CHECK(map.gaussians[2].max_contribution == 0.0);

    render.contributions = {0.7, 0.1, 0.0};
    update_contribution_stats(map, render);
    CHECK(map.gaussians[0].topk_count == 24);  // counts accumulate
    CHECK(map.gaussians[0].max_contribution == 0.7);
    CHECK(map.gaussians[1].max_contribution == 0.25);  // running max keeps the peak

    render.generation = 99;
    CHECK_THROWS(update_contribution_stats(map, render));
}

TEST_CASE("prune keeps non-candidates untouched") {
    SceneMap map = stats_map({5, 0, 3, 0}, {0.1, 0.2, 0.3, 0.4});
    OptimizerState opt(2);
    opt.extend(4);

    SUBCASE("no candidates, nothing removed") {
        SceneMap all_active = stats_map({1, 2, 3, 4}, {0.1, 0.2, 0.3, 0.4});
        OptimizerState o2(2);
        o2.extend(4);
        const auto removed = prune_map(all_active, o2, 0.5, 7, 0);
        CHECK(removed.empty());
        CHECK(all_active.size() == 4);
        // Statistics still reset at the prune boundary.
        for (const Gaussian3D& g : all_active.gaussians) {
            CHECK(g.topk_count == 0);
            CHECK(g.max_contribution == 0.0);
        }
    }
    SUBCASE("candidates with zero total score are all spared") {
        SceneMap zeros = stats_map({0, 0, 5}, {0.0, 0.0, 0.9});
        OptimizerState o2(2);
        o2.extend(3);
        const auto removed = prune_map(zeros, o2, 0.5, 7, 0);
        CHECK(removed.empty());
        CHECK(zeros.size() == 3);
    }
    SUBCASE("non-candidates survive every seed") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            SceneMap m = stats_map({5, 0, 3, 0}, {0.1, 0.2, 0.3, 0.4});
            OptimizerState o2(2);
            o2.extend(4);
            const auto removed = prune_map(m, o2, 0.5, seed, 0);
            for (const std::int32_t r : removed) CHECK((r == 1 || r == 3));
            CHECK(m.size() == 4 - removed.size());
            CHECK(o2.size() == m.size());
        }
    }
}

TEST_CASE("prune survival frequencies match the draw-tree oracle") {
    // Four equal-score candidates, keep half: symmetric marginals of 1/2.
    {
        const std::vector<double> scores{0.25, 0.25, 0.25, 0.25};
        const std::vector<double> oracle = survival_oracle(scores, 2);
        std::vector<int> survived(4, 0);
        const int trials = 4000;
        for (int t = 0; t < trials; ++t) {
            SceneMap m = stats_map({0, 0, 0, 0}, scores);
            OptimizerState o(2);
            o.extend(4);
            std::vector<bool> removed(4, false);
            for (const std::int32_t r : prune_map(m, o, 0.5, 1000 + t, 0)) removed[r] = true;
            for (int i = 0; i < 4; ++i)
                if (!removed[i]) ++survived[i];
            CHECK(m.size() == 2);
        }
        for (int i = 0; i < 4; ++i) {
            CHECK(oracle[i] == doctest::Approx(0.5));
            CHECK(std::abs(static_cast<double>(survived[i]) / trials - oracle[i]) < 0.03);
        }
    }

    // Skewed scores with a zero-mass candidate: the oracle is not uniform and
    // higher scores survive no less often.
    {
        const std::vector<double> scores{0.9, 0.1, 0.05, 0.0};
        const std::vector<double> oracle = survival_oracle(scores, 2);
        CHECK(oracle[0] > oracle[1]);
        CHECK(oracle[1] > oracle[2]);
        CHECK(oracle[3] == doctest::Approx(0.0));

        std::vector<int> survived(4, 0);
        const int trials = 6000;
        for (int t = 0; t < trials; ++t) {
            SceneMap m = stats_map({0, 0, 0, 0}, scores);
            OptimizerState o(2);
            o.extend(4);
            std::vector<bool> removed(4, false);
            for (const std::int32_t r : prune_map(m, o, 0.5, 9000 + t, 0)) removed[r] = true;
            for (int i = 0; i < 4; ++i)
                if (!removed[i]) ++survived[i];
        }
        for (int i = 0; i < 4; ++i)
            CHECK(std::abs(static_cast<double>(survived[i]) / trials - oracle[i]) < 0.02);
    }

    // Positive mass exhausted before the quota: zero-score candidates fill
    // the remaining slots uniformly.
    {
        const std::vector<double> scores{0.9, 0.0, 0.0, 0.0};
        const std::vector<double> oracle = survival_oracle(scores, 2);
        CHECK(oracle[0] == doctest::Approx(1.0));
        CHECK(oracle[1] == doctest::Approx(1.0 / 3.0));
        std::vector<int> survived(4, 0);
        const int trials = 6000;
        for (int t = 0; t < trials; ++t) {
            SceneMap m = stats_map({0, 0, 0, 0}, scores);
            OptimizerState o(2);
            o.extend(4);
            std::vector<bool> removed(4, false);
            for (const std::int32_t r : prune_map(m, o, 0.5, 40000 + t, 0)) removed[r] = true;
            for (int i = 0; i < 4; ++i)
                if (!removed[i]) ++survived[i];
        }
        CHECK(survived[0] == trials);
        for (int i = 1; i < 4; ++i)
            CHECK(std::abs(static_cast<double>(survived[i]) / trials - oracle[i]) < 0.025);
    }
}

TEST_CASE("loss values follow the stated mix") {
    const CameraIntrinsics cam = tu::test_camera(16, 16);
    SceneMap map = tu::random_scene(5, 4, 3);
    RenderSettings settings;
    const RenderOutput render = render_geometric(map, Pose::identity(), cam, settings);

    Frame frame;
    frame.color = image_cast<float>(render.color);
    frame.depth = image_cast<float>(render.depth);
    frame.feature = ImageF(16, 16, 4, 0.0f);

    LossWeights weights;  // defaults
    SUBCASE("identical render gives zero loss") {
        const LossResult r = compute_losses(render, frame, weights, false);
        CHECK(r.values.geo < 1e-7);   // float casts only
        CHECK(r.values.map < 1e-7);
    }
    SUBCASE("uniform color offset with plain L1") {
        weights.lambda1 = 0.0;
        weights.lambda2 = 0.0;
        weights.lambda_feat = 0.0;
        RenderOutput shifted = render;
        for (double& v : shifted.color.data) v += 0.1;
        const LossResult r = compute_losses(shifted, frame, weights, false);
        CHECK(r.values.map == doctest::Approx(0.1).epsilon(1e-6));
    }
    SUBCASE("invalid-depth pixels carry no depth loss") {
        Frame masked = frame;
        for (float& d : masked.depth.data) d = 0.0f;
        RenderOutput corrupted = render;
        for (double& v : corrupted.depth.data) v += 123.0;
        weights.lambda1 = 0.0;
        const LossResult r = compute_losses(corrupted, masked, weights, false);
        CHECK(r.values.geo < 1e-7);
        for (const double g : r.grad_depth.data) CHECK(g == 0.0);
    }
    SUBCASE("shape mismatch is fatal") {
        Frame wrong;
        wrong.color = ImageF(8, 8, 3, 0.0f);
        wrong.depth = ImageF(8, 8, 1, 0.0f);
        CHECK_THROWS(compute_losses(render, wrong, weights, false));
    }
}

namespace {

// One ground-truth gaussian rendered into a keyframe; the map starts from a
// perturbed copy and has to fit it.
void setup_single_gaussian_problem(SceneMap& map, OptimizerState& opt, MapperConfig& cfg) {
    cfg.cam = tu::test_camera(24, 24);
    cfg.render.transmittance_floor = 0.0;
    cfg.schedule.prune_period = 0;  // no pruning in this experiment

    Gaussian3D truth;
    truth.mean = {0.05, -0.03, 1.5};
    truth.log_scale = Eigen::Vector3d::Constant(std::log(0.12));
    truth.opacity_logit = logit(0.8);
    truth.color = {0.8, 0.3, 0.2};
    truth.feature = Eigen::VectorXd::Zero(2);
    truth.feature[0] = 1.0;

    SceneMap gt_map;
    gt_map.feature_dim = 2;
    gt_map.gaussians.push_back(truth);
    const RenderOutput gt = render_geometric(gt_map, Pose::identity(), cfg.cam, cfg.render);

    Frame frame;
    frame.color = image_cast<float>(gt.color);
    frame.depth = image_cast<float>(gt.depth);
    frame.feature = ImageF(24, 24, 2, 0.0f);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            if (gt.alpha.at(x, y) > 0.3) frame.feature.at(x, y, 0) = 1.0f;

    Gaussian3D start = truth;
    start.mean += Eigen::Vector3d(0.06, -0.04, 0.08);
    start.color = {0.5, 0.5, 0.5};
    start.opacity_logit = logit(0.5);
    start.feature = Eigen::VectorXd::Zero(2);
    start.feature[1] = 1.0;

    map.feature_dim = 2;
    map.gaussians.push_back(start);
    map.keyframes.push_back({frame, Pose::identity()});
    opt = OptimizerState(2);
    opt.extend(1);
}

}  // namespace

TEST_CASE("hybrid schedule touches features only on its period") {
    SceneMap map;
    OptimizerState opt(2);
    MapperConfig cfg;
    setup_single_gaussian_problem(map, opt, cfg);
    cfg.schedule.feature_update_period = 5;

    std::mt19937_64 rng(77);
    for (std::int64_t iter = 1; iter <= 12; ++iter) {
        const Eigen::VectorXd before = map.gaussians[0].feature;
        const StepRecord rec = optimize_step(map, opt, cfg, iter, rng);
        const bool changed = (map.gaussians[0].feature - before).norm() > 0.0;
        CHECK(rec.feature_step == (iter % 5 == 0));
        CHECK(changed == rec.feature_step);
        if (!rec.feature_step) CHECK(rec.losses.feat == 0.0);
    }
}

TEST_CASE("every step carries the feature term when the period is one") {
    SceneMap map;
    OptimizerState opt(2);
    MapperConfig cfg;
    setup_single_gaussian_problem(map, opt, cfg);
    cfg.schedule.feature_update_period = 1;

    std::mt19937_64 rng(78);
    for (std::int64_t iter = 1; iter <= 5; ++iter) {
        const StepRecord rec = optimize_step(map, opt, cfg, iter, rng);
        CHECK(rec.feature_step);
        CHECK(rec.losses.feat > 0.0);
    }
}

TEST_CASE("a single gaussian fits its keyframe") {
    SceneMap map;
    OptimizerState opt(2);
    MapperConfig cfg;
    setup_single_gaussian_problem(map, opt, cfg);
    cfg.schedule.feature_update_period = 1;  // fitting test, not a schedule test

    std::mt19937_64 rng(79);
    double first_geo = 0.0, last_geo = 0.0;
    for (std::int64_t iter = 1; iter <= 200; ++iter) {
        const StepRecord rec = optimize_step(map, opt, cfg, iter, rng);
        if (iter == 1) first_geo = rec.losses.geo;
        last_geo = rec.losses.geo;
    }
    CHECK(last_geo < first_geo / 10.0);

    // Features realigned to the observed class direction.
    CHECK(map.gaussians[0].feature[0] > 0.9);
    CHECK(std::abs(map.gaussians[0].feature.norm() - 1.0) < 1e-6);
    CHECK(map.gaussians[0].rotation.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(map.gaussians[0].color.maxCoeff() <= 1.0);
    CHECK(map.gaussians[0].color.minCoeff() >= 0.0);
}

TEST_CASE("optimizer state stays in lockstep through insert and prune") {
    SceneMap map;
    OptimizerState opt(4);
    const std::vector<SourcePoint> source = simple_sources(6, 4);
    insert_gaussians(map, opt, source, std::vector<double>(6, kNoCorrespondence), 0.05,
                     Pose::identity());
    CHECK(opt.size() == 6);

    // Mark half as prune candidates with distinct moments to track moves.
    for (int i = 0; i < 6; ++i) {
        map.gaussians[i].topk_count = (i % 2 == 0) ? 3 : 0;
        map.gaussians[i].max_contribution = 0.1 * (i + 1);
        opt.mean.m[i * 3] = 100.0 + i;
    }
    const auto removed = prune_map(map, opt, 0.5, 5, 0);
    CHECK(removed.size() == 1);  // ceil(0.5 * 3) kept of the 3 candidates
    CHECK(opt.size() == map.size());

    // Moments moved with their gaussians.
    for (std::size_t i = 0; i < map.size(); ++i) {
        const double tag = opt.mean.m[i * 3] - 100.0;
        CHECK((map.gaussians[i].mean - simple_sources(6, 4)[static_cast<int>(tag)].position).norm() <
              1e-12);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    const tu::TempDir dir("ckpt");
    SceneMap map = tu::random_scene(25, 8, 5);
    map.generation = 42;

    const std::string p1 = (dir.path() / "a.bin").string();
    const std::string p2 = (dir.path() / "b.bin").string();
    save_checkpoint(map, p1);
    const SceneMap loaded = load_checkpoint(p1);
    CHECK(loaded.size() == map.size());
    CHECK(loaded.feature_dim == map.feature_dim);
    save_checkpoint(loaded, p2);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(b1.size() == 20 + map.size() * (14 + 8) * 4);

    CHECK_THROWS(load_checkpoint((dir.path() / "missing.bin").string()));

    // Truncated file names the path.
    const std::string p3 = (dir.path() / "short.bin").string();
    std::ofstream(p3, std::ios::binary).write(b1.data(), 40);
    CHECK_THROWS(load_checkpoint(p3));
}
