// cyclecorr command line: dataset generation, training, evaluation and the
// downstream tasks, all reproducible from a manifest.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cyclecorr/applications.hpp"
#include "cyclecorr/correspondence.hpp"
#include "cyclecorr/encoder.hpp"
#include "cyclecorr/geometry.hpp"
#include "cyclecorr/io.hpp"
#include "cyclecorr/synthetic.hpp"
#include "cyclecorr/trainer.hpp"
#include "json.hpp"

namespace {

using json = nlohmann::json;
using namespace cyclecorr;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

/// Post-parse problems that are the caller's fault (unknown config keys,
/// inconsistent flags) exit 1 like any other usage error.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    fs::path config_path;
    fs::path out = "out";
    std::uint64_t seed = 0;
    bool seed_given = false;

    ConfigMap config;  // parsed from config_path, keys consumed per command
};

void load_config(Globals& g) {
    if (!g.config_path.empty()) g.config = parse_config_file(g.config_path);
}

/// Keys any subcommand understands; commands consume what they use first,
/// the rest of the shared universe is dropped here so one config file can
/// drive a whole pipeline, and anything still left is a typo.
void reject_unknown_keys(Globals& g) {
    static const char* kKnown[] = {
        "encoder.use_normals", "encoder.neighborhood_k", "encoder.lift_width",
        "encoder.stages", "encoder.attention_heads", "encoder.out_dim",
        "encoder.normalize_output", "encoder.seed", "train.steps", "train.batch",
        "train.lr_bias", "train.lr_rest", "train.beta1", "train.beta2", "train.amsgrad",
        "train.tau", "train.points_per_shape", "train.rng_seed", "train.held_out_fraction",
        "train.eval_every", "train.eval_pairs", "train.checkpoint_every", "train.cc_radius",
        "loss.cycle", "loss.rigid", "loss.sinkhorn", "sinkhorn.temperature",
        "sinkhorn.iterations", "sinkhorn.stop_gradient", "aug.rot_deg_lo", "aug.rot_deg_hi",
        "aug.trans_lo", "aug.trans_hi", "aug.scale_lo", "aug.scale_hi", "gen.family",
        "gen.instances", "gen.points_per_shape", "gen.seed", "register.pairs",
        "register.iters", "register.rot_deg", "register.truncate", "register.trans_range"};
    for (const char* k : kKnown) g.config.take_string(k, "");
    static const char* kRangeNames[] = {
        "body_length", "body_radius", "wing_span", "wing_chord", "wing_sweep", "fin_height",
        "top_width", "top_depth", "leg_height", "leg_radius", "seat_height", "back_height",
        "back_tilt"};
    for (const char* r : kRangeNames) {
        g.config.take_string(std::string("gen.") + r + "_lo", "");
        g.config.take_string(std::string("gen.") + r + "_hi", "");
    }
    const auto leftover = g.config.remaining();
    if (leftover.empty()) return;
    std::string msg = "unknown config key(s):";
    for (const auto& k : leftover) msg += " " + k;
    throw UsageError(msg);
}

void write_manifest(const Globals& g, const std::string& command, json resolved) {
    resolved["seed"] = g.seed;
    json m;
    m["command"] = command;
    m["out"] = g.out.string();
    m["config_file"] = g.config_path.string();
    m["resolved"] = std::move(resolved);
    m["version"] = {{"cyclecorr", kVersion},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                  std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)}};
    fs::create_directories(g.out);
    std::ofstream out(g.out / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest under " + g.out.string());
    out << m.dump(2) << "\n";
}

// flag wins over config key wins over the built-in default
double merge_double(const CLI::App* sub, const std::string& flag, double flag_val, Globals& g,
                    const std::string& key, double fallback) {
    const double from_config = g.config.take_double(key, fallback);
    return sub->count(flag) ? flag_val : from_config;
}

std::size_t merge_size(const CLI::App* sub, const std::string& flag, std::size_t flag_val,
                       Globals& g, const std::string& key, std::size_t fallback) {
    const std::size_t from_config = g.config.take_size(key, fallback);
    return sub->count(flag) ? flag_val : from_config;
}

std::string merge_string(const CLI::App* sub, const std::string& flag, std::string flag_val,
                         Globals& g, const std::string& key, std::string fallback) {
    std::string from_config = g.config.take_string(key, std::move(fallback));
    return sub->count(flag) ? std::move(flag_val) : std::move(from_config);
}

/// "8,8|16,16" -> {{8,8},{16,16}}
std::vector<std::vector<std::size_t>> parse_stages(const std::string& text) {
    std::vector<std::vector<std::size_t>> stages;
    std::stringstream by_stage(text);
    std::string stage;
    while (std::getline(by_stage, stage, '|')) {
        std::vector<std::size_t> widths;
        std::stringstream by_width(stage);
        std::string w;
        while (std::getline(by_width, w, ',')) {
            try {
                widths.push_back(std::stoul(w));
            } catch (const std::exception&) {
                throw UsageError("bad stage widths '" + text + "'");
            }
        }
        if (widths.empty()) throw UsageError("bad stage widths '" + text + "'");
        stages.push_back(std::move(widths));
    }
    if (stages.empty()) throw UsageError("bad stage widths '" + text + "'");
    return stages;
}

std::string stages_to_string(const std::vector<std::vector<std::size_t>>& stages) {
    std::string out;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        if (s) out += "|";
        for (std::size_t i = 0; i < stages[s].size(); ++i) {
            if (i) out += ",";
            out += std::to_string(stages[s][i]);
        }
    }
    return out;
}

EncoderConfig encoder_from_config(Globals& g) {
    EncoderConfig enc;
    enc.use_normals = g.config.take_bool("encoder.use_normals", enc.use_normals);
    enc.neighborhood_k = g.config.take_size("encoder.neighborhood_k", enc.neighborhood_k);
    enc.lift_width = g.config.take_size("encoder.lift_width", enc.lift_width);
    enc.stage_widths =
        parse_stages(g.config.take_string("encoder.stages", stages_to_string(enc.stage_widths)));
    enc.attention_heads = g.config.take_size("encoder.attention_heads", enc.attention_heads);
    enc.out_dim = g.config.take_size("encoder.out_dim", enc.out_dim);
    enc.normalize_output = g.config.take_bool("encoder.normalize_output", enc.normalize_output);
    enc.seed = std::uint64_t(g.config.take_int("encoder.seed", std::int64_t(enc.seed)));
    if (g.seed_given) enc.seed = g.seed;
    return enc;
}

json encoder_to_json(const EncoderConfig& enc) {
    return {{"use_normals", enc.use_normals},
            {"neighborhood_k", enc.neighborhood_k},
            {"lift_width", enc.lift_width},
            {"stages", stages_to_string(enc.stage_widths)},
            {"attention_heads", enc.attention_heads},
            {"out_dim", enc.out_dim},
            {"normalize_output", enc.normalize_output},
            {"seed", enc.seed}};
}

AugmentConfig augment_from_config(Globals& g) {
    AugmentConfig aug;
    aug.rot_deg_lo = g.config.take_double("aug.rot_deg_lo", aug.rot_deg_lo);
    aug.rot_deg_hi = g.config.take_double("aug.rot_deg_hi", aug.rot_deg_hi);
    aug.trans_lo = g.config.take_double("aug.trans_lo", aug.trans_lo);
    aug.trans_hi = g.config.take_double("aug.trans_hi", aug.trans_hi);
    aug.scale_lo = g.config.take_double("aug.scale_lo", aug.scale_lo);
    aug.scale_hi = g.config.take_double("aug.scale_hi", aug.scale_hi);
    return aug;
}

json augment_to_json(const AugmentConfig& aug) {
    return {{"rot_deg_lo", aug.rot_deg_lo}, {"rot_deg_hi", aug.rot_deg_hi},
            {"trans_lo", aug.trans_lo},     {"trans_hi", aug.trans_hi},
            {"scale_lo", aug.scale_lo},     {"scale_hi", aug.scale_hi}};
}

json train_to_json(const TrainConfig& cfg) {
    return {{"steps", cfg.steps},
            {"batch", cfg.batch},
            {"lr_bias", cfg.lr_bias},
            {"lr_rest", cfg.lr_rest},
            {"beta1", cfg.beta1},
            {"beta2", cfg.beta2},
            {"amsgrad", cfg.amsgrad},
            {"lambda_cycle", cfg.weights.cycle},
            {"lambda_rigid", cfg.weights.rigid},
            {"lambda_sinkhorn", cfg.weights.sinkhorn},
            {"sinkhorn_temperature", cfg.sinkhorn.temperature},
            {"sinkhorn_iterations", cfg.sinkhorn.iterations},
            {"sinkhorn_stop_gradient", cfg.sinkhorn.stop_gradient},
            {"tau", cfg.tau},
            {"augment", augment_to_json(cfg.aug)},
            {"points_per_shape", cfg.points_per_shape},
            {"rng_seed", cfg.rng_seed},
            {"held_out_fraction", cfg.held_out_fraction},
            {"eval_every", cfg.eval_every},
            {"eval_pairs", cfg.eval_pairs},
            {"checkpoint_every", cfg.checkpoint_every},
            {"cc_radius", cfg.cc_radius}};
}

int run_gen_data(Globals& g, const CLI::App* sub, const std::string& family,
                 std::size_t instances, std::size_t points) {
    SyntheticCategoryConfig cfg;
    cfg.family = family_from_name(
        merge_string(sub, "--family", family, g, "gen.family", family_name(cfg.family)));
    cfg.instances = merge_size(sub, "--instances", instances, g, "gen.instances", cfg.instances);
    cfg.points_per_shape =
        merge_size(sub, "--points", points, g, "gen.points_per_shape", cfg.points_per_shape);
    cfg.seed = std::uint64_t(g.config.take_int("gen.seed", std::int64_t(cfg.seed)));
    if (g.seed_given) cfg.seed = g.seed;

    const std::vector<std::pair<std::string, ParamRange*>> ranges = {
        {"body_length", &cfg.body_length}, {"body_radius", &cfg.body_radius},
        {"wing_span", &cfg.wing_span},     {"wing_chord", &cfg.wing_chord},
        {"wing_sweep", &cfg.wing_sweep},   {"fin_height", &cfg.fin_height},
        {"top_width", &cfg.top_width},     {"top_depth", &cfg.top_depth},
        {"leg_height", &cfg.leg_height},   {"leg_radius", &cfg.leg_radius},
        {"seat_height", &cfg.seat_height}, {"back_height", &cfg.back_height},
        {"back_tilt", &cfg.back_tilt}};
    json range_json;
    for (const auto& [name, range] : ranges) {
        range->lo = g.config.take_double("gen." + name + "_lo", range->lo);
        range->hi = g.config.take_double("gen." + name + "_hi", range->hi);
        range_json[name] = {range->lo, range->hi};
    }
    reject_unknown_keys(g);

    generate_synthetic_category(cfg, g.out);
    write_manifest(g, "gen-data",
                   {{"family", family_name(cfg.family)},
                    {"instances", cfg.instances},
                    {"points_per_shape", cfg.points_per_shape},
                    {"gen_seed", cfg.seed},
                    {"ranges", range_json}});
    std::cout << "wrote " << cfg.instances << " " << family_name(cfg.family) << " shapes to "
              << g.out.string() << "\n";
    return 0;
}

TrainConfig train_from_config(Globals& g, const CLI::App* sub, std::size_t steps,
                              std::size_t batch, double lambda_sinkhorn) {
    TrainConfig cfg;
    cfg.steps = merge_size(sub, "--steps", steps, g, "train.steps", cfg.steps);
    cfg.batch = merge_size(sub, "--batch", batch, g, "train.batch", cfg.batch);
    cfg.lr_bias = g.config.take_double("train.lr_bias", cfg.lr_bias);
    cfg.lr_rest = g.config.take_double("train.lr_rest", cfg.lr_rest);
    cfg.beta1 = g.config.take_double("train.beta1", cfg.beta1);
    cfg.beta2 = g.config.take_double("train.beta2", cfg.beta2);
    cfg.amsgrad = g.config.take_bool("train.amsgrad", cfg.amsgrad);
    cfg.weights.cycle = g.config.take_double("loss.cycle", cfg.weights.cycle);
    cfg.weights.rigid = g.config.take_double("loss.rigid", cfg.weights.rigid);
    cfg.weights.sinkhorn = merge_double(sub, "--lambda-sinkhorn", lambda_sinkhorn, g,
                                        "loss.sinkhorn", cfg.weights.sinkhorn);
    cfg.sinkhorn.temperature =
        g.config.take_double("sinkhorn.temperature", cfg.sinkhorn.temperature);
    cfg.sinkhorn.iterations = g.config.take_size("sinkhorn.iterations", cfg.sinkhorn.iterations);
    cfg.sinkhorn.stop_gradient =
        g.config.take_bool("sinkhorn.stop_gradient", cfg.sinkhorn.stop_gradient);
    cfg.tau = g.config.take_double("train.tau", cfg.tau);
    cfg.aug = augment_from_config(g);
    cfg.points_per_shape = g.config.take_size("train.points_per_shape", cfg.points_per_shape);
    cfg.rng_seed = std::uint64_t(g.config.take_int("train.rng_seed", std::int64_t(cfg.rng_seed)));
    if (g.seed_given) cfg.rng_seed = g.seed;
    cfg.held_out_fraction =
        g.config.take_double("train.held_out_fraction", cfg.held_out_fraction);
    cfg.eval_every = g.config.take_size("train.eval_every", cfg.eval_every);
    cfg.eval_pairs = g.config.take_size("train.eval_pairs", cfg.eval_pairs);
    cfg.checkpoint_every = g.config.take_size("train.checkpoint_every", cfg.checkpoint_every);
    cfg.cc_radius = g.config.take_double("train.cc_radius", cfg.cc_radius);
    return cfg;
}

int run_train(Globals& g, const CLI::App* sub, const fs::path& data, const fs::path& resume,
              std::size_t steps, std::size_t batch, double lambda_sinkhorn) {
    EncoderConfig enc = encoder_from_config(g);
    TrainConfig cfg = train_from_config(g, sub, steps, batch, lambda_sinkhorn);
    reject_unknown_keys(g);

    CategoryData dataset = load_category(data);
    std::optional<fs::path> resume_from;
    if (!resume.empty()) resume_from = resume;

    write_manifest(g, "train",
                   {{"data", data.string()},
                    {"resume", resume.string()},
                    {"encoder", encoder_to_json(enc)},
                    {"train", train_to_json(cfg)}});
    TrainResult result = train(dataset.clouds, enc, cfg, g.out, resume_from);

    json summary = {{"steps", cfg.steps},
                    {"final_loss", result.final_loss.total},
                    {"cc_strict", result.final_cc.strict},
                    {"cc_relaxed", result.final_cc.relaxed},
                    {"checkpoint", result.checkpoint_path.string()},
                    {"log", result.log_path.string()}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_eval_cc(Globals& g, const CLI::App* sub, const fs::path& checkpoint,
                const fs::path& data, std::size_t pairs, double radius) {
    Checkpoint ck = checkpoint_load(checkpoint);
    const double tau = g.config.take_double("train.tau", kCorrespondenceTau);
    const double held = g.config.take_double("train.held_out_fraction", 0.1);
    const std::size_t points = g.config.take_size("train.points_per_shape", 256);
    pairs = merge_size(sub, "--pairs", pairs, g, "train.eval_pairs", pairs);
    radius = merge_double(sub, "--radius", radius, g, "train.cc_radius", radius);
    AugmentConfig aug = augment_from_config(g);
    reject_unknown_keys(g);

    CategoryData dataset = load_category(data);
    DatasetSplit split = split_dataset(dataset.clouds.size(), held, g.seed);
    const auto& pool = split.held_out.empty() ? split.train : split.held_out;
    std::mt19937_64 rng(g.seed);
    auto eval_pairs = make_eval_pairs(dataset.clouds, pool, pairs, rng, aug,
                                      std::min(points, dataset.clouds[0].size()));
    CCResult cc = cc_percent(ck.params, ck.encoder, eval_pairs, tau, radius);
    const double collisions = mean_collisions(ck.params, ck.encoder, eval_pairs, tau);

    write_manifest(g, "eval-cc",
                   {{"checkpoint", checkpoint.string()},
                    {"data", data.string()},
                    {"pairs", pairs},
                    {"tau", tau},
                    {"radius", radius},
                    {"held_out_fraction", held},
                    {"points_per_shape", points},
                    {"augment", augment_to_json(aug)}});
    json out = {{"cc_strict", cc.strict},
                {"cc_relaxed", cc.relaxed},
                {"mean_collisions", collisions}};
    std::cout << out.dump() << "\n";
    return 0;
}

int run_register(Globals& g, const CLI::App* sub, const fs::path& checkpoint,
                 const fs::path& data, std::size_t pairs, std::size_t iters, double rot_deg,
                 double truncate_frac) {
    Checkpoint ck = checkpoint_load(checkpoint);
    const double tau = g.config.take_double("train.tau", kCorrespondenceTau);
    pairs = merge_size(sub, "--pairs", pairs, g, "register.pairs", pairs);
    iters = merge_size(sub, "--iters", iters, g, "register.iters", iters);
    rot_deg = merge_double(sub, "--rot-deg", rot_deg, g, "register.rot_deg", rot_deg);
    truncate_frac =
        merge_double(sub, "--truncate", truncate_frac, g, "register.truncate", truncate_frac);
    const double trans_range = g.config.take_double("register.trans_range", 0.2);
    reject_unknown_keys(g);
    if (truncate_frac < 0.0 || truncate_frac >= 1.0)
        throw UsageError("--truncate must lie in [0, 1)");

    CategoryData dataset = load_category(data);
    AugmentConfig pose;
    pose.rot_deg_lo = -rot_deg;
    pose.rot_deg_hi = rot_deg;
    pose.trans_lo = -trans_range;
    pose.trans_hi = trans_range;
    pose.scale_lo = pose.scale_hi = 1.0;  // strictly rigid poses

    std::mt19937_64 rng(g.seed);
    std::vector<RigidTransform> estimates, truths;
    std::size_t monotone = 0;
    for (std::size_t i = 0; i < pairs; ++i) {
        const PointCloud& shape =
            dataset.clouds[std::uniform_int_distribution<std::size_t>(
                0, dataset.clouds.size() - 1)(rng)];
        const RigidTransform gt = sample_rigid_transform(rng, pose);
        const std::size_t keep = std::max<std::size_t>(
            4, std::size_t(std::llround((1.0 - truncate_frac) * double(shape.size()))));
        PointCloud src = truncate_partial(shape, keep, rng);
        PointCloud tgt = apply_transform(shape, gt);

        RegistrationResult r = register_partial(ck.params, ck.encoder, src, tgt, iters, tau);
        estimates.push_back(r.estimated);
        truths.push_back(gt);

        // angle error of each partial composition; count pairs whose error
        // never increases from one iteration to the next
        RigidTransform sofar;
        double prev = std::numeric_limits<double>::infinity();
        bool ok = true;
        for (const auto& t : r.per_iteration) {
            sofar = t.after(sofar);
            const double c = std::clamp(
                ((sofar.rotation * gt.rotation.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
            const double err = std::acos(c);
            if (err > prev + 1e-9) ok = false;
            prev = err;
        }
        if (ok) ++monotone;
    }

    RegistrationMetrics m = registration_metrics(estimates, truths);
    json out = {{"rot_rmse", m.rot_rmse},
                {"rot_mae", m.rot_mae},
                {"trans_rmse", m.trans_rmse},
                {"trans_mae", m.trans_mae},
                {"rot_angle_rmse", m.rot_angle_rmse},
                {"rot_angle_mae", m.rot_angle_mae},
                {"monotone_fraction", double(monotone) / double(pairs)}};

    write_manifest(g, "register",
                   {{"checkpoint", checkpoint.string()},
                    {"data", data.string()},
                    {"pairs", pairs},
                    {"iters", iters},
                    {"rot_deg", rot_deg},
                    {"truncate", truncate_frac},
                    {"trans_range", trans_range},
                    {"tau", tau}});
    std::ofstream csv(g.out / "registration_metrics.csv");
    csv << "pairs,rot_rmse,rot_mae,trans_rmse,trans_mae,rot_angle_rmse,rot_angle_mae\n";
    csv << pairs << "," << m.rot_rmse << "," << m.rot_mae << "," << m.trans_rmse << ","
        << m.trans_mae << "," << m.rot_angle_rmse << "," << m.rot_angle_mae << "\n";
    std::cout << out.dump() << "\n";
    return 0;
}

int run_transfer(Globals& g, const CLI::App*, const fs::path& checkpoint, const fs::path& src,
                 const fs::path& src_kps, const fs::path& tgt, const fs::path& gt,
                 std::size_t neighbors, double threshold) {
    Checkpoint ck = checkpoint_load(checkpoint);
    const double tau = g.config.take_double("train.tau", kCorrespondenceTau);
    reject_unknown_keys(g);

    PointCloud src_cloud = load_cloud(src);
    PointCloud tgt_cloud = load_cloud(tgt);
    KeypointSet kps = load_keypoints(src_kps);
    KeypointSet predicted =
        transfer_keypoints(ck.params, ck.encoder, src_cloud, kps, tgt_cloud, neighbors, tau);

    fs::create_directories(g.out);
    const fs::path out_path = g.out / "predicted.keypoints";
    save_keypoints(predicted, out_path);
    write_manifest(g, "transfer-keypoints",
                   {{"checkpoint", checkpoint.string()},
                    {"src", src.string()},
                    {"src_keypoints", src_kps.string()},
                    {"tgt", tgt.string()},
                    {"gt", gt.string()},
                    {"neighbors", neighbors},
                    {"threshold", threshold},
                    {"tau", tau}});

    json out = {{"predicted", out_path.string()}, {"keypoints", predicted.size()}};
    if (!gt.empty())
        out["hit_rate"] = keypoint_hit_rate(predicted, load_keypoints(gt), threshold);
    std::cout << out.dump() << "\n";
    return 0;
}

int run_export(Globals& g, const CLI::App*, const fs::path& checkpoint,
               const std::vector<fs::path>& cloud_paths) {
    Checkpoint ck = checkpoint_load(checkpoint);
    reject_unknown_keys(g);
    if (cloud_paths.empty()) throw UsageError("export-features needs at least one --cloud");

    std::vector<PointCloud> clouds;
    std::vector<fs::path> feature_paths, ply_paths;
    fs::create_directories(g.out);
    for (std::size_t i = 0; i < cloud_paths.size(); ++i) {
        clouds.push_back(load_cloud(cloud_paths[i]));
        const std::string stem = cloud_paths[i].stem().string();
        feature_paths.push_back(g.out / (stem + "_features.txt"));
        ply_paths.push_back(g.out / (stem + "_colors.ply"));
    }
    export_features(ck.params, ck.encoder, clouds, feature_paths, ply_paths);

    json files = json::array();
    for (std::size_t i = 0; i < clouds.size(); ++i)
        files.push_back({{"cloud", cloud_paths[i].string()},
                         {"features", feature_paths[i].string()},
                         {"colors", ply_paths[i].string()}});
    json manifest_resolved = {{"checkpoint", checkpoint.string()}, {"outputs", files}};
    write_manifest(g, "export-features", manifest_resolved);
    std::cout << json{{"exported", clouds.size()}}.dump() << "\n";
    return 0;
}

int run_gradcheck(Globals& g, const CLI::App*, std::size_t points, std::size_t sinkhorn_iters,
                  std::size_t samples, double eps, double threshold) {
    const double tau = g.config.take_double("train.tau", kCorrespondenceTau);
    reject_unknown_keys(g);

    EncoderConfig enc;
    enc.neighborhood_k = 4;
    enc.lift_width = 8;
    enc.stage_widths = {{8, 8}, {8, 8}};
    enc.attention_heads = 2;
    enc.out_dim = 8;
    enc.seed = g.seed;
    EncoderParams params = init_params(enc);
    params.set_requires_grad(true);
    // jitter off the zero-bias init: an all-negative relu row feeds the next
    // layer an exactly-zero vector, parking its bias on the relu kink where
    // finite differences disagree with any one-sided derivative
    std::mt19937_64 jitter_rng(g.seed ^ 0x9e3779b9u);
    std::uniform_real_distribution<double> jd(-0.05, 0.05);
    for (auto& e : params.entries)
        for (auto& v : e.value.values()) v += jd(jitter_rng);

    std::mt19937_64 rng(g.seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    PointCloud p;
    for (std::size_t i = 0; i < points; ++i)
        p.points.push_back({u(rng), u(rng), u(rng)});
    p = normalize_shape(p);
    AugmentConfig aug;
    PointCloud p_prime = apply_transform(p, sample_rigid_transform(rng, aug));
    PointCloud q = apply_transform(p, sample_rigid_transform(rng, aug));

    SinkhornConfig sh;
    sh.iterations = sinkhorn_iters;
    LossWeights weights;
    Tensor dist = pairwise_distance_matrix(p);

    LossProgram prog = [&](bool acc) {
        Graph graph;
        auto f_p = encode(graph, params, p, enc);
        auto f_q = encode(graph, params, q, enc);
        auto f_pp = encode(graph, params, p_prime, enc);
        auto c1 = soft_correspondence(graph, f_p, f_q, tau);
        auto c2 = soft_correspondence(graph, f_q, f_pp, tau);
        auto c3 = soft_correspondence(graph, f_pp, f_p, tau);
        auto c12 = compose_cycle(graph, c1, c2);
        auto d = graph.constant(dist);
        auto loss = total_loss(graph, distance_weighted_mass(graph, d, c12),
                               distance_weighted_mass(graph, d, c3),
                               sinkhorn_loss(graph, compose_cycle(graph, c12, c3), sh),
                               weights);
        if (acc) graph.backward(loss);
        return graph.value(loss).item();
    };
    auto tensors = params.tensors();
    const double max_rel =
        grad_check(prog, std::span<Tensor* const>(tensors.data(), tensors.size()), eps, samples,
                   g.seed);

    write_manifest(g, "gradcheck",
                   {{"points", points},
                    {"sinkhorn_iterations", sinkhorn_iters},
                    {"samples", samples},
                    {"eps", eps},
                    {"threshold", threshold},
                    {"tau", tau},
                    {"max_relative_error", max_rel}});
    std::cout << "max relative error: " << max_rel << "\n";
    if (!(max_rel < threshold)) {
        std::cerr << "gradcheck failed: " << max_rel << " >= " << threshold << "\n";
        return 2;
    }
    return 0;
}

int run_sinkhorn(Globals& g, const CLI::App*, std::size_t size, double temperature,
                 std::size_t iterations) {
    SinkhornConfig sh;
    sh.temperature = g.config.take_double("sinkhorn.temperature", temperature);
    sh.iterations = g.config.take_size("sinkhorn.iterations", iterations);
    reject_unknown_keys(g);

    std::mt19937_64 rng(g.seed);
    std::uniform_real_distribution<double> u(1e-3, 1.0);
    Tensor c({size, size});
    for (auto& v : c.values()) v = u(rng);

    const auto start = std::chrono::steady_clock::now();
    Tensor s = sinkhorn_normalize(c, sh);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();

    double row_dev = 0.0, col_dev = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        double rs = 0.0, cs = 0.0;
        for (std::size_t j = 0; j < size; ++j) {
            rs += s(i, j);
            cs += s(j, i);
        }
        row_dev = std::max(row_dev, std::abs(rs - 1.0));
        col_dev = std::max(col_dev, std::abs(cs - 1.0));
    }

    write_manifest(g, "sinkhorn",
                   {{"size", size},
                    {"temperature", sh.temperature},
                    {"iterations", sh.iterations}});
    json out = {{"size", size},
                {"temperature", sh.temperature},
                {"iterations", sh.iterations},
                {"max_row_dev", row_dev},
                {"max_col_dev", col_dev},
                {"ms", ms}};
    std::cout << out.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cycle-consistent point cloud correspondence toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.failure_message(CLI::FailureMessage::help);

    Globals g;
    app.add_option("--config", g.config_path, "key = value config file");
    auto* seed_opt = app.add_option("--seed", g.seed, "master seed for every stochastic part");
    app.add_option("--out", g.out, "output directory")->capture_default_str();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic category with ground truth");
    std::string family = "winged";
    std::size_t instances = 200, gen_points = 256;
    gen->add_option("--family", family, "winged | four-leg-table | chair-like")
        ->capture_default_str();
    gen->add_option("--instances", instances, "shape count")->capture_default_str();
    gen->add_option("--points", gen_points, "points per shape")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "train the encoder on a generated category");
    fs::path train_data, resume;
    std::size_t steps = 5000, batch = 4;
    double lambda_sinkhorn = 0.06;
    tr->add_option("--data", train_data, "dataset directory from gen-data")->required();
    tr->add_option("--resume", resume, "checkpoint to continue from");
    tr->add_option("--steps", steps, "optimizer steps")->capture_default_str();
    tr->add_option("--batch", batch, "triplets per step")->capture_default_str();
    tr->add_option("--lambda-sinkhorn", lambda_sinkhorn, "bijectivity regularizer weight")
        ->capture_default_str();

    // eval-cc
    auto* ev = app.add_subcommand("eval-cc", "cycle-consistency percentage of a checkpoint");
    fs::path eval_ck, eval_data;
    std::size_t eval_pairs = 10;
    double eval_radius = 0.05;
    ev->add_option("--checkpoint", eval_ck, "trained checkpoint")->required();
    ev->add_option("--data", eval_data, "dataset directory")->required();
    ev->add_option("--pairs", eval_pairs, "held-out eval triplets")->capture_default_str();
    ev->add_option("--radius", eval_radius, "relaxed-hit radius")->capture_default_str();

    // register
    auto* rg = app.add_subcommand("register", "partial rigid registration benchmark");
    fs::path reg_ck, reg_data;
    std::size_t reg_pairs = 50, reg_iters = 3;
    double rot_deg = 15.0, truncate_frac = 0.25;
    rg->add_option("--checkpoint", reg_ck, "trained checkpoint")->required();
    rg->add_option("--data", reg_data, "dataset directory")->required();
    rg->add_option("--pairs", reg_pairs, "test pair count")->capture_default_str();
    rg->add_option("--iters", reg_iters, "match-and-transform rounds")->capture_default_str();
    rg->add_option("--rot-deg", rot_deg, "pose rotation range, +/- degrees")
        ->capture_default_str();
    rg->add_option("--truncate", truncate_frac, "fraction of source points removed")
        ->capture_default_str();

    // transfer-keypoints
    auto* tk = app.add_subcommand("transfer-keypoints", "move labeled landmarks between shapes");
    fs::path tk_ck, tk_src, tk_kps, tk_tgt, tk_gt;
    std::size_t neighbors = 5;
    double threshold = 0.05;
    tk->add_option("--checkpoint", tk_ck, "trained checkpoint")->required();
    tk->add_option("--src", tk_src, "source cloud file")->required();
    tk->add_option("--src-keypoints", tk_kps, "source keypoint file")->required();
    tk->add_option("--tgt", tk_tgt, "target cloud file")->required();
    tk->add_option("--gt", tk_gt, "target ground-truth keypoints (prints hit rate)");
    tk->add_option("--neighbors", neighbors, "source points averaged per keypoint")
        ->capture_default_str();
    tk->add_option("--threshold", threshold, "hit distance")->capture_default_str();

    // export-features
    auto* ex = app.add_subcommand("export-features", "per-point features and PCA colors");
    fs::path ex_ck;
    std::vector<fs::path> ex_clouds;
    ex->add_option("--checkpoint", ex_ck, "trained checkpoint")->required();
    ex->add_option("--cloud", ex_clouds, "cloud file (repeat for a joint color basis)")
        ->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full loss chain");
    std::size_t gc_points = 24, gc_sh_iters = 5, gc_samples = 60;
    double gc_eps = 1e-5, gc_threshold = 1e-4;
    gc->add_option("--points", gc_points, "cloud size")->capture_default_str();
    gc->add_option("--sinkhorn-iters", gc_sh_iters, "unrolled normalization passes")
        ->capture_default_str();
    gc->add_option("--samples", gc_samples, "parameter entries probed")->capture_default_str();
    gc->add_option("--eps", gc_eps, "finite-difference step")->capture_default_str();
    gc->add_option("--threshold", gc_threshold, "pass bound on max relative error")
        ->capture_default_str();

    // sinkhorn
    auto* sk = app.add_subcommand("sinkhorn", "normalize a random matrix and report deviations");
    std::size_t sk_size = 256, sk_iters = 30;
    double sk_temp = 0.3;
    sk->add_option("--size", sk_size, "matrix side")->capture_default_str();
    sk->add_option("--temperature", sk_temp, "softmax temperature")->capture_default_str();
    sk->add_option("--iters", sk_iters, "normalization passes")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        g.seed_given = seed_opt->count() > 0;
        load_config(g);
        if (gen->parsed()) return run_gen_data(g, gen, family, instances, gen_points);
        if (tr->parsed())
            return run_train(g, tr, train_data, resume, steps, batch, lambda_sinkhorn);
        if (ev->parsed()) return run_eval_cc(g, ev, eval_ck, eval_data, eval_pairs, eval_radius);
        if (rg->parsed())
            return run_register(g, rg, reg_ck, reg_data, reg_pairs, reg_iters, rot_deg,
                                truncate_frac);
        if (tk->parsed())
            return run_transfer(g, tk, tk_ck, tk_src, tk_kps, tk_tgt, tk_gt, neighbors,
                                threshold);
        if (ex->parsed()) return run_export(g, ex, ex_ck, ex_clouds);
        if (gc->parsed())
            return run_gradcheck(g, gc, gc_points, gc_sh_iters, gc_samples, gc_eps,
                                 gc_threshold);
        if (sk->parsed()) return run_sinkhorn(g, sk, sk_size, sk_temp, sk_iters);
        std::cerr << app.help();
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
