#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <numeric>
#include <random>

#include "cyclecorr/applications.hpp"
#include "cyclecorr/correspondence.hpp"
#include "cyclecorr/encoder.hpp"
#include "cyclecorr/geometry.hpp"
#include "cyclecorr/io.hpp"
#include "cyclecorr/synthetic.hpp"
#include "cyclecorr/trainer.hpp"

namespace py = pybind11;
using namespace cyclecorr;

namespace {

using Matrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Matrix& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
    const auto rows = std::size_t(a.shape(0)), cols = std::size_t(a.shape(1));
    Tensor t({rows, cols});
    std::copy(a.data(), a.data() + rows * cols, t.data());
    return t;
}

py::array_t<double> from_tensor(const Tensor& t) {
    if (t.ndim() != 2) throw std::invalid_argument("expected a 2-d tensor");
    py::array_t<double> out({t.rows(), t.cols()});
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

std::vector<Eigen::Vector3d> to_points(const Matrix& a) {
    if (a.ndim() != 2 || a.shape(1) != 3)
        throw std::invalid_argument("expected an N x 3 array");
    std::vector<Eigen::Vector3d> pts(std::size_t(a.shape(0)));
    for (std::size_t i = 0; i < pts.size(); ++i)
        pts[i] = {a.at(i, 0), a.at(i, 1), a.at(i, 2)};
    return pts;
}

py::array_t<double> from_points(const std::vector<Eigen::Vector3d>& pts) {
    py::array_t<double> out({pts.size(), std::size_t(3)});
    auto w = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (int a = 0; a < 3; ++a) w(py::ssize_t(i), a) = pts[i][a];
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "cycle-consistent point cloud correspondence";
    m.attr("__version__") = "0.1.0";
    m.attr("CORRESPONDENCE_TAU") = kCorrespondenceTau;

    py::class_<PointCloud>(m, "PointCloud")
        .def(py::init<>())
        .def(py::init([](const Matrix& pts) {
                 PointCloud c;
                 c.points = to_points(pts);
                 return c;
             }),
             py::arg("points"))
        .def_property(
            "points", [](const PointCloud& c) { return from_points(c.points); },
            [](PointCloud& c, const Matrix& a) { c.points = to_points(a); })
        .def_property(
            "normals", [](const PointCloud& c) { return from_points(c.normals); },
            [](PointCloud& c, const Matrix& a) { c.normals = to_points(a); })
        .def_property(
            "ids", [](const PointCloud& c) { return c.ids; },
            [](PointCloud& c, std::vector<int> v) { c.ids = std::move(v); })
        .def("__len__", &PointCloud::size)
        .def("validate", &PointCloud::validate);

    py::class_<RigidTransform>(m, "RigidTransform")
        .def(py::init<>())
        .def_readwrite("rotation", &RigidTransform::rotation)
        .def_readwrite("translation", &RigidTransform::translation)
        .def_readwrite("scale", &RigidTransform::scale)
        .def("apply", &RigidTransform::apply)
        .def("inverse", &RigidTransform::inverse)
        .def("after", &RigidTransform::after)
        .def("validate", &RigidTransform::validate);

    py::class_<AugmentConfig>(m, "AugmentConfig")
        .def(py::init<>())
        .def_readwrite("rot_deg_lo", &AugmentConfig::rot_deg_lo)
        .def_readwrite("rot_deg_hi", &AugmentConfig::rot_deg_hi)
        .def_readwrite("trans_lo", &AugmentConfig::trans_lo)
        .def_readwrite("trans_hi", &AugmentConfig::trans_hi)
        .def_readwrite("scale_lo", &AugmentConfig::scale_lo)
        .def_readwrite("scale_hi", &AugmentConfig::scale_hi);

    m.def("normalize_shape", &normalize_shape, py::arg("cloud"));
    m.def(
        "apply_transform",
        [](const PointCloud& c, const RigidTransform& t) { return apply_transform(c, t); },
        py::arg("cloud"), py::arg("transform"));
    m.def(
        "farthest_point_sample",
        [](const PointCloud& c, std::size_t k, std::size_t seed) {
            return farthest_point_sample(c, k, seed);
        },
        py::arg("cloud"), py::arg("k"), py::arg("seed") = 0);
    m.def(
        "pairwise_distance_matrix",
        [](const PointCloud& c) { return from_tensor(pairwise_distance_matrix(c)); },
        py::arg("cloud"));

    py::class_<SinkhornConfig>(m, "SinkhornConfig")
        .def(py::init<>())
        .def_readwrite("temperature", &SinkhornConfig::temperature)
        .def_readwrite("iterations", &SinkhornConfig::iterations)
        .def_readwrite("stop_gradient", &SinkhornConfig::stop_gradient);

    py::class_<LossWeights>(m, "LossWeights")
        .def(py::init<>())
        .def_readwrite("cycle", &LossWeights::cycle)
        .def_readwrite("rigid", &LossWeights::rigid)
        .def_readwrite("sinkhorn", &LossWeights::sinkhorn);
    m.def("registration_weights", &registration_weights);

    m.def(
        "soft_correspondence",
        [](const Matrix& f_src, const Matrix& f_tgt, double tau) {
            return from_tensor(soft_correspondence(to_tensor(f_src), to_tensor(f_tgt), tau));
        },
        py::arg("f_src"), py::arg("f_tgt"), py::arg("tau") = kCorrespondenceTau);
    m.def(
        "sinkhorn_normalize",
        [](const Matrix& c, const SinkhornConfig& cfg) {
            return from_tensor(sinkhorn_normalize(to_tensor(c), cfg));
        },
        py::arg("c"), py::arg("config") = SinkhornConfig{});
    m.def(
        "cycle_loss",
        [](const Matrix& dist, const Matrix& c12) {
            return cycle_loss(to_tensor(dist), to_tensor(c12));
        },
        py::arg("dist"), py::arg("c12"));
    m.def(
        "rigid_loss",
        [](const Matrix& dist, const Matrix& c3) {
            return rigid_loss(to_tensor(dist), to_tensor(c3));
        },
        py::arg("dist"), py::arg("c3"));
    m.def(
        "sinkhorn_loss",
        [](const Matrix& c12, const SinkhornConfig& cfg) {
            return sinkhorn_loss(to_tensor(c12), cfg);
        },
        py::arg("c12"), py::arg("config") = SinkhornConfig{});
    m.def("total_loss", py::overload_cast<double, double, double, const LossWeights&>(&total_loss),
          py::arg("lc"), py::arg("lr"), py::arg("ls"), py::arg("weights") = LossWeights{});
    m.def(
        "hard_correspondence",
        [](const Matrix& c) { return hard_correspondence(to_tensor(c)); }, py::arg("c"));

    py::class_<EncoderConfig>(m, "EncoderConfig")
        .def(py::init<>())
        .def_readwrite("use_normals", &EncoderConfig::use_normals)
        .def_readwrite("neighborhood_k", &EncoderConfig::neighborhood_k)
        .def_readwrite("lift_width", &EncoderConfig::lift_width)
        .def_readwrite("stage_widths", &EncoderConfig::stage_widths)
        .def_readwrite("attention_heads", &EncoderConfig::attention_heads)
        .def_readwrite("out_dim", &EncoderConfig::out_dim)
        .def_readwrite("normalize_output", &EncoderConfig::normalize_output)
        .def_readwrite("seed", &EncoderConfig::seed)
        .def("validate", &EncoderConfig::validate);

    py::class_<EncoderParams>(m, "EncoderParams")
        .def("scalar_count", &EncoderParams::scalar_count)
        .def("all_finite", &EncoderParams::all_finite)
        .def("names", [](const EncoderParams& p) {
            std::vector<std::string> out;
            for (const auto& e : p.entries) out.push_back(e.name);
            return out;
        });

    m.def("init_params", py::overload_cast<const EncoderConfig&>(&init_params), py::arg("config"));
    m.def(
        "encode_features",
        [](EncoderParams& p, const PointCloud& c, const EncoderConfig& cfg) {
            return from_tensor(encode_features(p, c, cfg));
        },
        py::arg("params"), py::arg("cloud"), py::arg("config"));

    py::enum_<ShapeFamily>(m, "ShapeFamily")
        .value("Winged", ShapeFamily::Winged)
        .value("FourLegTable", ShapeFamily::FourLegTable)
        .value("ChairLike", ShapeFamily::ChairLike);

    py::class_<SyntheticCategoryConfig>(m, "SyntheticCategoryConfig")
        .def(py::init<>())
        .def_readwrite("family", &SyntheticCategoryConfig::family)
        .def_readwrite("instances", &SyntheticCategoryConfig::instances)
        .def_readwrite("points_per_shape", &SyntheticCategoryConfig::points_per_shape)
        .def_readwrite("seed", &SyntheticCategoryConfig::seed);

    py::class_<SyntheticInstance>(m, "SyntheticInstance")
        .def_readonly("cloud", &SyntheticInstance::cloud)
        .def_readonly("keypoints", &SyntheticInstance::keypoints)
        .def_readonly("params", &SyntheticInstance::params);

    m.def("make_category", &make_category, py::arg("config"));
    m.def("generate_synthetic_category", &generate_synthetic_category, py::arg("config"),
          py::arg("out_dir"));

    py::class_<KeypointSet>(m, "KeypointSet")
        .def(py::init<>())
        .def_readwrite("labels", &KeypointSet::labels)
        .def_property(
            "positions", [](const KeypointSet& k) { return from_points(k.positions); },
            [](KeypointSet& k, const Matrix& a) { k.positions = to_points(a); })
        .def("__len__", &KeypointSet::size);

    py::class_<CategoryData>(m, "CategoryData")
        .def_readonly("clouds", &CategoryData::clouds)
        .def_readonly("keypoints", &CategoryData::keypoints);
    m.def("load_category", &load_category, py::arg("directory"));

    m.def("load_cloud", &load_cloud, py::arg("path"));
    m.def("save_cloud", &save_cloud, py::arg("cloud"), py::arg("path"));
    m.def("load_keypoints", &load_keypoints, py::arg("path"));
    m.def("save_keypoints", &save_keypoints, py::arg("keypoints"), py::arg("path"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("steps", &TrainConfig::steps)
        .def_readwrite("batch", &TrainConfig::batch)
        .def_readwrite("lr_bias", &TrainConfig::lr_bias)
        .def_readwrite("lr_rest", &TrainConfig::lr_rest)
        .def_readwrite("beta1", &TrainConfig::beta1)
        .def_readwrite("beta2", &TrainConfig::beta2)
        .def_readwrite("amsgrad", &TrainConfig::amsgrad)
        .def_readwrite("weights", &TrainConfig::weights)
        .def_readwrite("sinkhorn", &TrainConfig::sinkhorn)
        .def_readwrite("tau", &TrainConfig::tau)
        .def_readwrite("aug", &TrainConfig::aug)
        .def_readwrite("points_per_shape", &TrainConfig::points_per_shape)
        .def_readwrite("rng_seed", &TrainConfig::rng_seed)
        .def_readwrite("held_out_fraction", &TrainConfig::held_out_fraction)
        .def_readwrite("eval_every", &TrainConfig::eval_every)
        .def_readwrite("eval_pairs", &TrainConfig::eval_pairs)
        .def_readwrite("checkpoint_every", &TrainConfig::checkpoint_every)
        .def_readwrite("cc_radius", &TrainConfig::cc_radius);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_readonly("encoder", &Checkpoint::encoder)
        .def_readonly("params", &Checkpoint::params)
        .def_readonly("step", &Checkpoint::step);
    m.def("checkpoint_load", &checkpoint_load, py::arg("path"));
    m.def("checkpoint_save", &checkpoint_save, py::arg("checkpoint"), py::arg("path"));

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("checkpoint_path", &TrainResult::checkpoint_path)
        .def_readonly("log_path", &TrainResult::log_path)
        .def_property_readonly("final_loss",
                               [](const TrainResult& r) { return r.final_loss.total; })
        .def_property_readonly("cc_strict",
                               [](const TrainResult& r) { return r.final_cc.strict; })
        .def_property_readonly("cc_relaxed",
                               [](const TrainResult& r) { return r.final_cc.relaxed; });
    m.def(
        "train",
        [](const std::vector<PointCloud>& shapes, const EncoderConfig& enc,
           const TrainConfig& cfg, const std::filesystem::path& out_dir,
           std::optional<std::filesystem::path> resume) {
            return train(shapes, enc, cfg, out_dir, resume);
        },
        py::arg("shapes"), py::arg("encoder"), py::arg("config"), py::arg("out_dir"),
        py::arg("resume") = std::nullopt,
        py::call_guard<py::gil_scoped_release>());

    py::class_<Triplet>(m, "Triplet")
        .def_readonly("p", &Triplet::p)
        .def_readonly("p_prime", &Triplet::p_prime)
        .def_readonly("q", &Triplet::q);
    m.def(
        "make_eval_pairs",
        [](const std::vector<PointCloud>& shapes, std::size_t count, std::uint64_t seed,
           const AugmentConfig& aug, std::size_t points_per_shape) {
            std::vector<std::size_t> pool(shapes.size());
            std::iota(pool.begin(), pool.end(), std::size_t{0});
            std::mt19937_64 rng(seed);
            return make_eval_pairs(shapes, pool, count, rng, aug, points_per_shape);
        },
        py::arg("shapes"), py::arg("count"), py::arg("seed") = 0,
        py::arg("aug") = AugmentConfig{}, py::arg("points_per_shape") = 256);

    py::class_<CCResult>(m, "CCResult")
        .def_readonly("strict", &CCResult::strict)
        .def_readonly("relaxed", &CCResult::relaxed);
    m.def(
        "cc_percent",
        [](EncoderParams& p, const EncoderConfig& enc, const std::vector<Triplet>& pairs,
           double tau, double radius) { return cc_percent(p, enc, pairs, tau, radius); },
        py::arg("params"), py::arg("encoder"), py::arg("pairs"),
        py::arg("tau") = kCorrespondenceTau, py::arg("radius") = 0.05);
    m.def(
        "mean_collisions",
        [](EncoderParams& p, const EncoderConfig& enc, const std::vector<Triplet>& pairs,
           double tau) { return mean_collisions(p, enc, pairs, tau); },
        py::arg("params"), py::arg("encoder"), py::arg("pairs"),
        py::arg("tau") = kCorrespondenceTau);

    m.def(
        "estimate_rigid",
        [](const Matrix& src, const Matrix& tgt) {
            return estimate_rigid(to_points(src), to_points(tgt));
        },
        py::arg("src"), py::arg("tgt"));

    py::class_<RegistrationResult>(m, "RegistrationResult")
        .def_readonly("estimated", &RegistrationResult::estimated)
        .def_readonly("per_iteration", &RegistrationResult::per_iteration)
        .def_readonly("matches", &RegistrationResult::matches);
    m.def(
        "register_partial",
        [](EncoderParams& p, const EncoderConfig& enc, const PointCloud& src,
           const PointCloud& tgt, std::size_t iters, double tau) {
            return register_partial(p, enc, src, tgt, iters, tau);
        },
        py::arg("params"), py::arg("encoder"), py::arg("src"), py::arg("tgt"),
        py::arg("iters") = 3, py::arg("tau") = kCorrespondenceTau);

    py::class_<RegistrationMetrics>(m, "RegistrationMetrics")
        .def_readonly("rot_rmse", &RegistrationMetrics::rot_rmse)
        .def_readonly("rot_mae", &RegistrationMetrics::rot_mae)
        .def_readonly("trans_rmse", &RegistrationMetrics::trans_rmse)
        .def_readonly("trans_mae", &RegistrationMetrics::trans_mae)
        .def_readonly("rot_angle_rmse", &RegistrationMetrics::rot_angle_rmse)
        .def_readonly("rot_angle_mae", &RegistrationMetrics::rot_angle_mae);
    m.def("registration_metrics", &registration_metrics, py::arg("estimates"),
          py::arg("ground_truths"));

    m.def(
        "transfer_keypoints",
        [](EncoderParams& p, const EncoderConfig& enc, const PointCloud& src,
           const KeypointSet& kps, const PointCloud& tgt, std::size_t neighbors, double tau) {
            return transfer_keypoints(p, enc, src, kps, tgt, neighbors, tau);
        },
        py::arg("params"), py::arg("encoder"), py::arg("src"), py::arg("src_keypoints"),
        py::arg("tgt"), py::arg("neighbors") = 5, py::arg("tau") = kCorrespondenceTau);
    m.def("transfer_keypoints_matched", &transfer_keypoints_matched, py::arg("src"),
          py::arg("src_keypoints"), py::arg("tgt"), py::arg("match"), py::arg("neighbors") = 5);
    m.def("keypoint_hit_rate", &keypoint_hit_rate, py::arg("pred"), py::arg("gt"),
          py::arg("threshold") = 0.05);

    m.def(
        "export_features",
        [](EncoderParams& p, const EncoderConfig& enc, const PointCloud& cloud,
           const std::filesystem::path& feature_path, const std::filesystem::path& ply_path) {
            export_features(p, enc, cloud, feature_path, ply_path);
        },
        py::arg("params"), py::arg("encoder"), py::arg("cloud"), py::arg("feature_path"),
        py::arg("ply_path"));
}
