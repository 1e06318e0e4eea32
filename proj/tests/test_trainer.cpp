#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "cyclecorr/io.hpp"
#include "cyclecorr/trainer.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cyclecorr;
namespace fs = std::filesystem;

namespace {

fs::path trainer_tmpdir() {
    fs::path p = fs::temp_directory_path() / "cyclecorr_trainer_test";
    fs::create_directories(p);
    return p;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed, bool with_ids = true) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    PointCloud c;
    c.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double x = u(rng), y = u(rng), z = u(rng);
        c.points.emplace_back(x, y, z);
    }
    if (with_ids) {
        c.ids.resize(n);
        for (std::size_t i = 0; i < n; ++i) c.ids[i] = int(i);
    }
    return normalize_shape(c);
}

std::vector<PointCloud> random_dataset(std::size_t count, std::size_t pts, std::uint64_t seed) {
    std::vector<PointCloud> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_cloud(pts, seed + 100 * i));
    return out;
}

EncoderConfig small_enc() {
    EncoderConfig c;
    c.neighborhood_k = 4;
    c.lift_width = 8;
    c.stage_widths = {{8, 8}, {8, 8}};
    c.attention_heads = 2;
    c.out_dim = 6;
    return c;
}

AugmentConfig zero_aug() { return {0.0, 0.0, 0.0, 0.0, 1.0, 1.0}; }

TrainConfig fast_cfg() {
    TrainConfig c;
    c.steps = 1;
    c.batch = 1;
    c.points_per_shape = 12;
    c.eval_every = 1;
    c.checkpoint_every = 1;
    c.eval_pairs = 1;
    c.held_out_fraction = 0.25;
    return c;
}

bool params_bitwise_equal(const EncoderParams& a, const EncoderParams& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        const auto& ea = a.entries[i];
        const auto& eb = b.entries[i];
        if (ea.name != eb.name || ea.is_bias != eb.is_bias) return false;
        if (!ea.value.same_shape(eb.value)) return false;
        if (std::memcmp(ea.value.values().data(), eb.value.values().data(),
                        ea.value.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("dataset split partitions deterministically") {
    DatasetSplit s = split_dataset(200, 0.1, 7);
    CHECK(s.held_out.size() == 20);
    CHECK(s.train.size() == 180);

    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.held_out.begin(), s.held_out.end());
    CHECK(all.size() == 200);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 199);

    DatasetSplit again = split_dataset(200, 0.1, 7);
    CHECK(again.held_out == s.held_out);
    CHECK(again.train == s.train);
    CHECK(split_dataset(200, 0.1, 8).held_out != s.held_out);

    CHECK(split_dataset(10, 0.0, 3).held_out.empty());
    // a tiny positive fraction still holds something out
    CHECK(split_dataset(30, 0.01, 3).held_out.size() == 1);
    // never starves the training side
    CHECK(split_dataset(1, 0.5, 3).train.size() == 1);

    CHECK_THROWS_AS(split_dataset(0, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_dataset(10, 0.6, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_dataset(10, -0.1, 1), std::invalid_argument);
}

TEST_CASE("zero-width augmentation gives identical source copies") {
    auto shapes = random_dataset(3, 16, 21);
    std::vector<std::size_t> pool = {0, 1, 2};
    std::mt19937_64 rng(5);

    Triplet t = sample_triplet(shapes, pool, rng, zero_aug(), 16);
    REQUIRE(t.p.size() == 16);
    REQUIRE(t.p_prime.size() == 16);
    for (std::size_t i = 0; i < 16; ++i)
        for (int d = 0; d < 3; ++d) CHECK(t.p.points[i][d] == t.p_prime.points[i][d]);
    CHECK(t.p.ids == t.p_prime.ids);
    CHECK(t.q.has_ids());
}

TEST_CASE("downsampled triplet keeps p and p_prime aligned") {
    auto shapes = random_dataset(3, 30, 22);
    std::vector<std::size_t> pool = {0, 1, 2};
    std::mt19937_64 rng(5);

    AugmentConfig aug;  // full-width ranges
    Triplet t = sample_triplet(shapes, pool, rng, aug, 8);
    REQUIRE(t.p.size() == 8);
    CHECK(t.q.size() == 8);
    CHECK(t.p.ids == t.p_prime.ids);
    // ids name base-shape vertices, so the subset must be duplicate-free
    std::set<int> distinct(t.p.ids.begin(), t.p.ids.end());
    CHECK(distinct.size() == 8);
}

TEST_CASE("triplet target index is uniform over the pool") {
    const std::size_t n_shapes = 8;
    auto shapes = random_dataset(n_shapes, 12, 77);
    std::vector<std::size_t> pool(n_shapes);
    for (std::size_t i = 0; i < n_shapes; ++i) pool[i] = i;

    std::mt19937_64 rng(123);
    std::vector<std::size_t> counts(n_shapes, 0);
    const std::size_t draws = 10000;
    for (std::size_t d = 0; d < draws; ++d) {
        Triplet t = sample_triplet(shapes, pool, rng, zero_aug(), 12);
        bool found = false;
        for (std::size_t j = 0; j < n_shapes; ++j) {
            if (t.q.points[0] == shapes[j].points[0]) {
                counts[j]++;
                found = true;
                break;
            }
        }
        REQUIRE(found);
    }

    const double expected = double(draws) / double(n_shapes);
    double chi2 = 0.0;
    for (std::size_t j = 0; j < n_shapes; ++j) {
        const double d = double(counts[j]) - expected;
        chi2 += d * d / expected;
    }
    // 7 degrees of freedom, significance 0.01
    CHECK(chi2 < 18.4753);

    CHECK_THROWS_AS(sample_triplet(shapes, {}, rng, zero_aug(), 12), std::invalid_argument);
    CHECK_THROWS_AS(sample_triplet(shapes, {99}, rng, zero_aug(), 12), std::invalid_argument);
}

TEST_CASE("zero learning rates leave parameters untouched") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    EncoderParams before = params;
    OptimizerState opt = init_optimizer(params);

    TrainConfig cfg = fast_cfg();
    cfg.lr_bias = 0.0;
    cfg.lr_rest = 0.0;

    PointCloud c = random_cloud(10, 31);
    Triplet t{c, c, c};
    LossReport rep = train_step(params, opt, enc, t, cfg);

    CHECK(std::isfinite(rep.total));
    CHECK(rep.total > 0.0);
    CHECK(params_bitwise_equal(params, before));
    CHECK(opt.step == 1);
}

TEST_CASE("bias entries move at the bias learning rate") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    OptimizerState opt = init_optimizer(params);
    TrainConfig cfg;  // defaults: lr_bias 1e-4, lr_rest 5e-4

    for (auto& e : params.entries) {
        auto& g = e.value.ensure_grad();
        std::fill(g.begin(), g.end(), 1.0);
    }
    const double w_before = params.at("lift.w")[0];
    const double b_before = params.at("lift.b")[0];
    optimizer_update(params, opt, cfg);
    const double dw = w_before - params.at("lift.w")[0];
    const double db = b_before - params.at("lift.b")[0];

    CHECK(dw > 0.0);
    CHECK(db > 0.0);
    // identical unit gradients, so the step sizes differ only by group lr
    CHECK(db / dw == doctest::Approx(cfg.lr_bias / cfg.lr_rest).epsilon(1e-12));
}

TEST_CASE("amsgrad off reduces exactly to adam on a quadratic") {
    const std::vector<double> target = {1.0, -2.0, 0.5, 3.0};
    EncoderParams params;
    params.entries.push_back({"w", Tensor({4}, {0.0, 0.0, 0.0, 0.0}), false});
    OptimizerState opt = init_optimizer(params);

    TrainConfig cfg;
    cfg.amsgrad = false;

    std::vector<double> ref = {0.0, 0.0, 0.0, 0.0};
    std::vector<double> m(4, 0.0), v(4, 0.0);
    const double eps = 1e-8;

    for (int step = 1; step <= 60; ++step) {
        Tensor& w = params.at("w");
        auto& g = w.ensure_grad();
        for (int j = 0; j < 4; ++j) g[j] = 2.0 * (w[j] - target[j]);
        optimizer_update(params, opt, cfg);

        // plain Adam, written out independently
        const double bc1 = 1.0 - std::pow(cfg.beta1, double(step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, double(step));
        for (int j = 0; j < 4; ++j) {
            const double gr = 2.0 * (ref[j] - target[j]);
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gr;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gr * gr;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            ref[j] -= cfg.lr_rest * mhat / (std::sqrt(vhat) + eps);
        }
        for (int j = 0; j < 4; ++j) CHECK(params.at("w")[j] == ref[j]);
    }
    // 60 steps of lr 5e-4 should have moved toward the target
    CHECK(std::abs(params.at("w")[0] - 0.0) > 1e-3);
}

TEST_CASE("amsgrad clamps the second moment after a gradient spike") {
    auto make = [] {
        EncoderParams p;
        p.entries.push_back({"w", Tensor({1}, {0.0}), false});
        return p;
    };
    EncoderParams pa = make(), pb = make();
    OptimizerState oa = init_optimizer(pa), ob = init_optimizer(pb);
    TrainConfig on, off;
    on.amsgrad = true;
    off.amsgrad = false;

    const double grads[3] = {10.0, 0.1, 0.1};
    for (double gv : grads) {
        pa.at("w").ensure_grad()[0] = gv;
        pb.at("w").ensure_grad()[0] = gv;
        optimizer_update(pa, oa, on);
        optimizer_update(pb, ob, off);
    }
    // the retained max denominator must damp the amsgrad trajectory
    CHECK(std::abs(pa.at("w")[0]) < std::abs(pb.at("w")[0]));
}

TEST_CASE("identity triplet with sharp tau gives near-zero cycle loss") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    OptimizerState opt = init_optimizer(params);

    TrainConfig cfg = fast_cfg();
    cfg.tau = 1e-6;

    PointCloud c = random_cloud(12, 40);
    Triplet t{c, c, c};
    LossReport rep = train_step(params, opt, enc, t, cfg);

    CHECK(rep.cycle < 1e-2);
    CHECK(rep.rigid < 1e-2);
    CHECK(rep.sinkhorn >= 0.0);
    CHECK(std::isfinite(rep.total));
}

TEST_CASE("a training step is bitwise reproducible") {
    EncoderConfig enc = small_enc();
    auto shapes = random_dataset(4, 16, 50);
    std::vector<std::size_t> pool = {0, 1, 2, 3};
    TrainConfig cfg = fast_cfg();
    cfg.batch = 2;

    auto run_once = [&](EncoderParams& params) {
        OptimizerState opt = init_optimizer(params);
        std::mt19937_64 rng(11);
        std::vector<Triplet> batch;
        for (std::size_t b = 0; b < cfg.batch; ++b)
            batch.push_back(sample_triplet(shapes, pool, rng, cfg.aug, cfg.points_per_shape));
        return train_step(params, opt, enc, batch, cfg);
    };

    EncoderParams pa = init_params(enc);
    EncoderParams pb = init_params(enc);
    LossReport ra = run_once(pa);
    LossReport rb = run_once(pb);

    CHECK(ra.total == rb.total);
    CHECK(ra.cycle == rb.cycle);
    CHECK(ra.rigid == rb.rigid);
    CHECK(ra.sinkhorn == rb.sinkhorn);
    CHECK(params_bitwise_equal(pa, pb));
}

TEST_CASE("non-finite loss dumps the offending triplet") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    params.at("head.w")[0] = std::numeric_limits<double>::infinity();
    OptimizerState opt = init_optimizer(params);

    TrainConfig cfg = fast_cfg();
    fs::path dir = trainer_tmpdir() / "diverged";
    fs::remove_all(dir);
    cfg.diagnostic_dir = dir;

    PointCloud c = random_cloud(10, 60);
    Triplet t{c, c, c};
    bool threw = false;
    try {
        train_step(params, opt, enc, t, cfg);
    } catch (const std::runtime_error& e) {
        threw = true;
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
    CHECK(threw);
    CHECK(fs::exists(dir / "diverged_step1_p.xyz"));
    CHECK(fs::exists(dir / "diverged_step1_p_prime.xyz"));
    CHECK(fs::exists(dir / "diverged_step1_q.xyz"));
}

TEST_CASE("coordinate features on a self-triplet cycle back perfectly") {
    // points on the unit sphere double as unique unit-norm features, so the
    // top inner product for every row is the point itself; rejection keeps
    // the directions separated enough for a sharp softmax
    std::mt19937_64 rng(8);
    std::normal_distribution<double> gauss(0.0, 1.0);
    PointCloud c;
    const std::size_t n = 24;
    while (c.points.size() < n) {
        Eigen::Vector3d v(gauss(rng), gauss(rng), gauss(rng));
        v.normalize();
        bool ok = true;
        for (const auto& q : c.points)
            if (v.dot(q) > 0.9) ok = false;
        if (ok) c.points.push_back(v);
    }

    Tensor feats({n, 3});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < 3; ++d) feats(i, d) = c.points[i][d];

    CCResult r = cc_pair_from_features(feats, feats, feats, c, 0.01, 0.05);
    CHECK(r.strict == 100.0);
    CHECK(r.relaxed == 100.0);
}

TEST_CASE("untrained encoder scores near chance in strict mode") {
    const std::size_t n = 64;
    auto shapes = random_dataset(6, n, 500);
    std::vector<std::size_t> pool = {0, 1, 2, 3, 4, 5};

    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);

    std::mt19937_64 rng(64);
    AugmentConfig aug;  // full-width augmentation
    auto pairs = make_eval_pairs(shapes, pool, 10, rng, aug, n);
    CCResult r = cc_percent(params, enc, pairs, kCorrespondenceTau, 0.05);

    const double chance = 100.0 / double(n);  // 1.5625%
    CHECK(r.strict > 0.3 * chance);
    CHECK(r.strict < 2.5 * chance);
    CHECK(r.relaxed >= r.strict);
}

TEST_CASE("cc evaluation demands aligned ground truth") {
    PointCloud c = random_cloud(12, 80);
    Tensor short_feats({10, 3});
    CHECK_THROWS_AS(cc_pair_from_features(short_feats, short_feats, short_feats, c, 0.07, 0.05),
                    std::invalid_argument);

    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    CHECK_THROWS_AS(cc_percent(params, enc, {}, 0.07), std::invalid_argument);

    Triplet bad{c, random_cloud(12, 81), random_cloud(12, 82)};
    bad.p_prime.ids[3] = 99;  // same size, different labels
    CHECK_THROWS_AS(cc_percent(params, enc, {bad}, 0.07), std::invalid_argument);
}

TEST_CASE("collision count is size minus distinct targets") {
    CHECK(collision_count({}) == 0);
    CHECK(collision_count({0, 1, 2, 3}) == 0);
    CHECK(collision_count({0, 0, 1, 1}) == 2);
    CHECK(collision_count({5, 5, 5, 5}) == 3);
}

TEST_CASE("identical clouds produce a collision-free two-hop map") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    PointCloud c = random_cloud(14, 90);
    Triplet t{c, c, c};
    CHECK(mean_collisions(params, enc, {t}, 1e-6) == 0.0);
}

TEST_CASE("checkpoint save-load-save round trips bitwise") {
    EncoderConfig enc = small_enc();
    EncoderParams params = init_params(enc);
    OptimizerState opt = init_optimizer(params);
    TrainConfig cfg = fast_cfg();
    PointCloud c = random_cloud(10, 91);
    Triplet t{c, c, c};
    train_step(params, opt, enc, t, cfg);  // nonzero moments

    std::mt19937_64 rng(17);
    rng.discard(5);
    std::ostringstream ss;
    ss << rng;

    Checkpoint ck;
    ck.encoder = enc;
    ck.params = params;
    ck.opt = opt;
    ck.step = 3;
    ck.rng_state = ss.str();

    fs::path p1 = trainer_tmpdir() / "ck1.cycc";
    fs::path p2 = trainer_tmpdir() / "ck2.cycc";
    checkpoint_save(ck, p1);
    Checkpoint back = checkpoint_load(p1);

    CHECK(back.step == 3);
    CHECK(back.rng_state == ck.rng_state);
    CHECK(back.encoder.out_dim == enc.out_dim);
    CHECK(back.encoder.stage_widths == enc.stage_widths);
    CHECK(params_bitwise_equal(back.params, params));
    CHECK(back.opt.step == opt.step);
    REQUIRE(back.opt.slots.size() == opt.slots.size());
    for (std::size_t i = 0; i < opt.slots.size(); ++i) {
        CHECK(back.opt.slots[i].m == opt.slots[i].m);
        CHECK(back.opt.slots[i].v == opt.slots[i].v);
        CHECK(back.opt.slots[i].vmax == opt.slots[i].vmax);
    }

    checkpoint_save(back, p2);
    CHECK(slurp(p1) == slurp(p2));

    // restored rng state must continue the stream
    std::mt19937_64 restored;
    std::istringstream(back.rng_state) >> restored;
    CHECK(restored() == rng());
}

TEST_CASE("corrupt checkpoints are rejected") {
    EncoderConfig enc = small_enc();
    Checkpoint ck;
    ck.encoder = enc;
    ck.params = init_params(enc);
    ck.opt = init_optimizer(ck.params);
    std::ostringstream ss;
    std::mt19937_64 rng(1);
    ss << rng;
    ck.rng_state = ss.str();

    fs::path good = trainer_tmpdir() / "good.cycc";
    checkpoint_save(ck, good);
    const std::string bytes = slurp(good);

    SUBCASE("truncated file") {
        fs::path p = trainer_tmpdir() / "trunc.cycc";
        std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
        CHECK_THROWS_WITH_AS(checkpoint_load(p), doctest::Contains("truncated"),
                             std::runtime_error);
    }
    SUBCASE("bad magic") {
        fs::path p = trainer_tmpdir() / "magic.cycc";
        std::string b = bytes;
        b[0] = 'X';
        std::ofstream(p, std::ios::binary) << b;
        CHECK_THROWS_WITH_AS(checkpoint_load(p), doctest::Contains("magic"), std::runtime_error);
    }
    SUBCASE("unsupported version") {
        fs::path p = trainer_tmpdir() / "ver.cycc";
        std::string b = bytes;
        b[4] = 9;
        std::ofstream(p, std::ios::binary) << b;
        CHECK_THROWS_WITH_AS(checkpoint_load(p), doctest::Contains("version"), std::runtime_error);
    }
    SUBCASE("trailing bytes") {
        fs::path p = trainer_tmpdir() / "trail.cycc";
        std::ofstream(p, std::ios::binary) << bytes << "junk";
        CHECK_THROWS_WITH_AS(checkpoint_load(p), doctest::Contains("trailing"),
                             std::runtime_error);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(checkpoint_load("/nonexistent.cycc"), std::runtime_error); }
}

TEST_CASE("config hash guards checkpoint compatibility") {
    EncoderConfig a = small_enc();
    EncoderConfig b = small_enc();
    CHECK(encoder_config_hash(a) == encoder_config_hash(b));

    b.seed = 999;  // init seed is not part of the architecture
    CHECK(encoder_config_hash(a) == encoder_config_hash(b));

    b = small_enc();
    b.out_dim = 7;
    CHECK(encoder_config_hash(a) != encoder_config_hash(b));

    Checkpoint ck;
    ck.encoder = a;
    CHECK_NOTHROW(require_matching_config(ck, a));
    CHECK_THROWS_AS(require_matching_config(ck, b), std::runtime_error);
    CHECK_NOTHROW(require_matching_config(ck, b, true));
}

TEST_CASE("one training step logs exactly one row") {
    EncoderConfig enc = small_enc();
    auto shapes = random_dataset(4, 16, 200);
    TrainConfig cfg = fast_cfg();
    cfg.rng_seed = 13;

    fs::path dir = trainer_tmpdir() / "run_single";
    fs::remove_all(dir);
    TrainResult res = train(shapes, enc, cfg, dir);

    CHECK(fs::exists(res.checkpoint_path));
    CHECK(res.checkpoint.step == 1);

    std::ifstream log(res.log_path);
    REQUIRE(bool(log));
    std::string line;
    std::size_t rows = 0;
    nlohmann::json rec;
    while (std::getline(log, line)) {
        if (line.empty()) continue;
        rows++;
        rec = nlohmann::json::parse(line);
    }
    CHECK(rows == 1);
    CHECK(rec.at("step").get<std::uint64_t>() == 1);
    for (const char* key : {"L", "L_C", "L_R", "L_S", "cc_strict", "cc_relaxed"}) {
        REQUIRE(rec.contains(key));
        CHECK(std::isfinite(rec.at(key).get<double>()));
    }
    CHECK(rec.at("L").get<double>() > 0.0);
}

TEST_CASE("same-seed runs and resumed runs produce identical artifacts") {
    EncoderConfig enc = small_enc();
    auto shapes = random_dataset(4, 16, 300);

    TrainConfig cfg = fast_cfg();
    cfg.steps = 4;
    cfg.eval_every = 2;
    cfg.checkpoint_every = 2;
    cfg.rng_seed = 9;

    fs::path da = trainer_tmpdir() / "run_a";
    fs::path db = trainer_tmpdir() / "run_b";
    fs::path dc = trainer_tmpdir() / "run_c";
    fs::remove_all(da);
    fs::remove_all(db);
    fs::remove_all(dc);

    TrainResult ra = train(shapes, enc, cfg, da);

    TrainConfig half = cfg;
    half.steps = 2;
    train(shapes, enc, half, db);
    TrainResult rb = train(shapes, enc, cfg, db, db / "checkpoint.cycc");

    TrainResult rc = train(shapes, enc, cfg, dc);

    CHECK(slurp(ra.log_path) == slurp(rc.log_path));
    CHECK(slurp(ra.checkpoint_path) == slurp(rc.checkpoint_path));
    CHECK(slurp(ra.log_path) == slurp(rb.log_path));
    CHECK(slurp(ra.checkpoint_path) == slurp(rb.checkpoint_path));
    CHECK(params_bitwise_equal(ra.checkpoint.params, rb.checkpoint.params));
}

TEST_CASE("train validates its inputs") {
    EncoderConfig enc = small_enc();
    TrainConfig cfg = fast_cfg();
    fs::path dir = trainer_tmpdir() / "run_invalid";

    CHECK_THROWS_AS(train({random_cloud(16, 1)}, enc, cfg, dir), std::invalid_argument);

    TrainConfig bad = cfg;
    bad.checkpoint_every = 3;  // not a multiple of eval_every=1? 3 is a multiple of 1
    bad.eval_every = 2;        // 3 % 2 != 0
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = cfg;
    bad.steps = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.lr_rest = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    // resuming under a different architecture must fail
    auto shapes = random_dataset(4, 16, 400);
    fs::path dres = trainer_tmpdir() / "run_res_mismatch";
    fs::remove_all(dres);
    train(shapes, enc, cfg, dres);
    EncoderConfig other = enc;
    other.out_dim = 12;
    CHECK_THROWS_AS(train(shapes, other, cfg, dres, dres / "checkpoint.cycc"),
                    std::runtime_error);
}
