#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cyclecorr/applications.hpp"
#include "cyclecorr/synthetic.hpp"
#include "doctest.h"

using namespace cyclecorr;
namespace fs = std::filesystem;

namespace {

fs::path app_tmpdir() {
    fs::path p = fs::temp_directory_path() / "cyclecorr_app_test";
    fs::create_directories(p);
    return p;
}

EncoderConfig small_enc() {
    EncoderConfig cfg;
    cfg.neighborhood_k = 4;
    cfg.lift_width = 8;
    cfg.stage_widths = {{8, 8}, {8, 8}};
    cfg.attention_heads = 2;
    cfg.out_dim = 6;
    cfg.seed = 11;
    return cfg;
}

std::vector<Eigen::Vector3d> random_points(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::vector<Eigen::Vector3d> pts(n);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    return pts;
}

PointCloud random_cloud(std::size_t n, unsigned seed) {
    PointCloud c;
    c.points = random_points(n, seed);
    c.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) c.ids[i] = int(i);
    return normalize_shape(c);
}

RigidTransform random_rigid(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    std::uniform_real_distribution<double> off(-1.0, 1.0);
    RigidTransform T;
    T.rotation = euler_xyz_to_matrix(ang(rng), ang(rng) / 2.0, ang(rng));
    T.translation = {off(rng), off(rng), off(rng)};
    return T;
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(bool(in));
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// rgb bytes from the fixed vertex layout written by export_features
std::vector<std::array<uint8_t, 3>> ply_colors(const fs::path& p) {
    std::string raw = slurp(p);
    const std::string marker = "end_header\n";
    auto pos = raw.find(marker);
    REQUIRE(pos != std::string::npos);
    pos += marker.size();
    std::vector<std::array<uint8_t, 3>> out;
    while (pos + 27 <= raw.size()) {
        out.push_back({uint8_t(raw[pos + 24]), uint8_t(raw[pos + 25]), uint8_t(raw[pos + 26])});
        pos += 27;
    }
    return out;
}

}  // namespace

TEST_CASE("alignment of a set with itself is the identity") {
    auto pts = random_points(30, 1);
    RigidTransform T = estimate_rigid(pts, pts);
    CHECK((T.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(T.translation.norm() < 1e-12);
    CHECK(T.scale == 1.0);
    CHECK_NOTHROW(T.validate());
}

TEST_CASE("noise-free pose recovery is exact") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        auto src = random_points(40, 100 + unsigned(trial));
        RigidTransform gt = random_rigid(rng);
        std::vector<Eigen::Vector3d> tgt(src.size());
        for (std::size_t i = 0; i < src.size(); ++i) tgt[i] = gt.apply(src[i]);
        RigidTransform est = estimate_rigid(src, tgt);
        CHECK((est.rotation - gt.rotation).norm() < 1e-9);
        CHECK((est.translation - gt.translation).norm() < 1e-9);
        CHECK_NOTHROW(est.validate());
    }
}

TEST_CASE("mirrored targets still yield a proper rotation") {
    auto src = random_points(25, 3);
    std::vector<Eigen::Vector3d> tgt(src.size());
    for (std::size_t i = 0; i < src.size(); ++i)
        tgt[i] = {-src[i].x(), src[i].y(), src[i].z()};
    RigidTransform est = estimate_rigid(src, tgt);
    CHECK(est.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_NOTHROW(est.validate());
}

TEST_CASE("alignment rejects undersized and degenerate inputs") {
    auto two = random_points(2, 4);
    CHECK_THROWS_AS(estimate_rigid(two, two), std::invalid_argument);
    auto a = random_points(5, 5);
    auto b = random_points(4, 5);
    CHECK_THROWS_AS(estimate_rigid(a, b), std::invalid_argument);

    std::vector<Eigen::Vector3d> line, line_t;
    for (int i = 0; i < 10; ++i) {
        line.push_back(Eigen::Vector3d(double(i), 2.0 * i, -double(i)));
        line_t.push_back(Eigen::Vector3d(double(i) + 1.0, 2.0 * i, -double(i)));
    }
    CHECK_THROWS_WITH_AS(estimate_rigid(line, line_t), doctest::Contains("degenerate"),
                         std::invalid_argument);
    std::vector<Eigen::Vector3d> same(6, Eigen::Vector3d(0.3, -0.1, 0.2));
    CHECK_THROWS_AS(estimate_rigid(same, same), std::invalid_argument);
}

TEST_CASE("registering a cloud onto itself stays at the identity") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    PointCloud cloud = random_cloud(48, 21);
    RegistrationResult r = register_partial(params, enc, cloud, cloud, 3);
    CHECK(r.per_iteration.size() == 3);
    CHECK(r.matches.size() == cloud.size());
    CHECK((r.estimated.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-6);
    CHECK(r.estimated.translation.norm() < 1e-6);
    for (const auto& [i, j] : r.matches) CHECK(i == j);
}

TEST_CASE("composed estimate equals the fold of per-iteration transforms") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    PointCloud src = random_cloud(40, 31);
    PointCloud tgt = random_cloud(40, 32);
    RegistrationResult r = register_partial(params, enc, src, tgt, 3);
    RigidTransform fold;
    for (const auto& t : r.per_iteration) fold = t.after(fold);
    CHECK((r.estimated.rotation - fold.rotation).norm() == 0.0);
    CHECK((r.estimated.translation - fold.translation).norm() == 0.0);
    CHECK_NOTHROW(r.estimated.validate());
}

TEST_CASE("perfect correspondences recover the pose in one round") {
    // with a ground-truth match the iterative loop reduces to one noise-free
    // least-squares fit
    PointCloud src = random_cloud(32, 41);
    std::mt19937_64 rng(42);
    RigidTransform gt = random_rigid(rng);
    PointCloud tgt = apply_transform(src, gt);
    std::vector<Eigen::Vector3d> matched_tgt(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) matched_tgt[i] = tgt.points[i];
    RigidTransform est = estimate_rigid(src.points, matched_tgt);
    CHECK((est.rotation - gt.rotation).norm() < 1e-9);
    CHECK((est.translation - gt.translation).norm() < 1e-9);
}

TEST_CASE("collapsed correspondences surface as a registration failure") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    PointCloud src = random_cloud(24, 51);
    PointCloud tgt;
    tgt.points.assign(24, Eigen::Vector3d(0.1, 0.2, 0.3));  // every feature row equal
    CHECK_THROWS_WITH_AS(register_partial(params, enc, src, tgt, 2),
                         doctest::Contains("registration failure"), std::runtime_error);

    CHECK_THROWS_AS(register_partial(params, enc, PointCloud{}, tgt, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(register_partial(params, enc, src, tgt, 0), std::invalid_argument);
}

TEST_CASE("metrics vanish when estimates equal ground truth") {
    std::mt19937_64 rng(61);
    std::vector<RigidTransform> ts;
    for (int i = 0; i < 8; ++i) ts.push_back(random_rigid(rng));
    RegistrationMetrics m = registration_metrics(ts, ts);
    CHECK(m.rot_rmse < 1e-12);  // R * R^T leaves rounding residue
    CHECK(m.rot_mae < 1e-12);
    CHECK(m.trans_rmse == 0.0);
    CHECK(m.trans_mae == 0.0);
    CHECK(m.rot_angle_mae < 1e-6);
}

TEST_CASE("a pure 10 degree z error lands where hand computation says") {
    RigidTransform est, gt;
    est.rotation = euler_xyz_to_matrix(0.0, 0.0, 10.0 * M_PI / 180.0);
    RegistrationMetrics m = registration_metrics({est}, {gt});
    CHECK(m.rot_mae == doctest::Approx(10.0 / 3.0).epsilon(1e-9));
    CHECK(m.rot_rmse == doctest::Approx(10.0 / std::sqrt(3.0)).epsilon(1e-9));
    CHECK(m.trans_mae == 0.0);
    CHECK(m.rot_angle_mae == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(m.rot_angle_rmse == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("mean absolute error never exceeds the rms error") {
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<RigidTransform> est, gt;
        for (int i = 0; i < 6; ++i) {
            est.push_back(random_rigid(rng));
            gt.push_back(random_rigid(rng));
        }
        RegistrationMetrics m = registration_metrics(est, gt);
        CHECK(m.rot_mae <= m.rot_rmse + 1e-12);
        CHECK(m.trans_mae <= m.trans_rmse + 1e-12);
        CHECK(m.rot_angle_mae <= m.rot_angle_rmse + 1e-12);
    }
    CHECK_THROWS_AS(registration_metrics({RigidTransform{}}, {}), std::invalid_argument);
}

TEST_CASE("self-transfer averages the nearest source neighborhood") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    PointCloud cloud = random_cloud(40, 81);
    KeypointSet kps;
    kps.labels = {"a", "b"};
    kps.positions = {cloud.points[7], Eigen::Vector3d(0.1, 0.1, 0.1)};

    KeypointSet one = transfer_keypoints(params, enc, cloud, kps, cloud, 1);
    CHECK(one.labels == kps.labels);
    CHECK((one.positions[0] - cloud.points[7]).norm() < 1e-12);

    KeypointSet five = transfer_keypoints(params, enc, cloud, kps, cloud, 5);
    for (std::size_t k = 0; k < kps.size(); ++k) {
        std::vector<std::size_t> order(cloud.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
            return (cloud.points[i] - kps.positions[k]).squaredNorm() <
                   (cloud.points[j] - kps.positions[k]).squaredNorm();
        });
        Eigen::Vector3d want = Eigen::Vector3d::Zero();
        for (int i = 0; i < 5; ++i) want += cloud.points[order[std::size_t(i)]];
        want /= 5.0;
        CHECK((five.positions[k] - want).norm() < 1e-12);
    }
}

TEST_CASE("oracle-matched transfer hits most landmarks on synthetic pairs") {
    SyntheticCategoryConfig cfg;
    cfg.family = ShapeFamily::Winged;
    cfg.instances = 8;
    cfg.points_per_shape = 256;
    cfg.seed = 17;
    auto shapes = make_category(cfg);

    std::vector<std::size_t> identity(cfg.points_per_shape);
    std::iota(identity.begin(), identity.end(), std::size_t{0});

    std::size_t hits = 0, total = 0;
    for (std::size_t a = 0; a + 1 < shapes.size(); a += 2) {
        const auto& s = shapes[a];
        const auto& t = shapes[a + 1];
        KeypointSet pred =
            transfer_keypoints_matched(s.cloud, s.keypoints, t.cloud, identity, 5);
        for (std::size_t k = 0; k < pred.size(); ++k) {
            ++total;
            if ((pred.positions[k] - t.keypoints.positions[k]).norm() < 0.05) ++hits;
        }
    }
    CHECK(100.0 * double(hits) / double(total) >= 90.0);
}

TEST_CASE("hit rate counts thresholded distances and stays monotone") {
    KeypointSet gt;
    gt.labels = {"p", "q", "r", "s"};
    gt.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    CHECK(keypoint_hit_rate(gt, gt) == 100.0);

    KeypointSet off = gt;
    for (auto& p : off.positions) p.x() += 0.1;
    CHECK(keypoint_hit_rate(off, gt, 0.05) == 0.0);
    CHECK(keypoint_hit_rate(off, gt, 0.2) == 100.0);

    KeypointSet mixed = gt;
    mixed.positions[0].x() += 0.01;
    mixed.positions[1].x() += 0.04;
    mixed.positions[2].x() += 0.08;
    mixed.positions[3].x() += 0.50;
    double prev = 0.0;
    for (double t : {0.005, 0.02, 0.05, 0.1, 0.6}) {
        double rate = keypoint_hit_rate(mixed, gt, t);
        CHECK(rate >= prev);
        prev = rate;
    }
    CHECK(keypoint_hit_rate(mixed, gt, 0.05) == 50.0);

    KeypointSet renamed = gt;
    renamed.labels[1] = "zz";
    CHECK_THROWS_AS(keypoint_hit_rate(renamed, gt, 0.05), std::invalid_argument);
}

TEST_CASE("feature export writes one row per point and is deterministic") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    PointCloud cloud = random_cloud(30, 91);
    fs::path dir = app_tmpdir();
    export_features(params, enc, cloud, dir / "f1.txt", dir / "c1.ply");
    export_features(params, enc, cloud, dir / "f2.txt", dir / "c2.ply");

    CHECK(line_count(dir / "f1.txt") == cloud.size());
    std::ifstream in(dir / "f1.txt");
    std::string first;
    std::getline(in, first);
    std::istringstream row(first);
    double value;
    std::size_t cols = 0;
    while (row >> value) ++cols;
    CHECK(cols == enc.out_dim);

    CHECK(slurp(dir / "f1.txt") == slurp(dir / "f2.txt"));
    CHECK(slurp(dir / "c1.ply") == slurp(dir / "c2.ply"));
    CHECK(ply_colors(dir / "c1.ply").size() == cloud.size());
}

TEST_CASE("identical feature rows export as one uniform color") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    PointCloud cloud;
    cloud.points.assign(20, Eigen::Vector3d(0.25, -0.25, 0.0));
    fs::path dir = app_tmpdir();
    export_features(params, enc, cloud, dir / "flat.txt", dir / "flat.ply");
    auto colors = ply_colors(dir / "flat.ply");
    REQUIRE(colors.size() == 20);
    for (const auto& c : colors) CHECK(c == colors[0]);
}

TEST_CASE("joint export gives matching points matching colors") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    PointCloud cloud = random_cloud(26, 95);
    fs::path dir = app_tmpdir();
    export_features(params, enc, {cloud, cloud}, {dir / "ja.txt", dir / "jb.txt"},
                    {dir / "ja.ply", dir / "jb.ply"});
    auto ca = ply_colors(dir / "ja.ply");
    auto cb = ply_colors(dir / "jb.ply");
    REQUIRE(ca.size() == cb.size());
    for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca[i] == cb[i]);
    CHECK(slurp(dir / "ja.txt") == slurp(dir / "jb.txt"));

    CHECK_THROWS_AS(export_features(params, enc, std::vector<PointCloud>{}, {}, {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        export_features(params, enc, std::vector<PointCloud>{cloud},
                        std::vector<fs::path>{dir / "x.txt"}, std::vector<fs::path>{}),
        std::invalid_argument);
}
