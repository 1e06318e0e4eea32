#include "cyclecorr/applications.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace cyclecorr {

namespace fs = std::filesystem;

RigidTransform estimate_rigid(const std::vector<Eigen::Vector3d>& src,
                              const std::vector<Eigen::Vector3d>& tgt) {
    if (src.size() != tgt.size())
        throw std::invalid_argument("estimate_rigid: point lists differ in size");
    const std::size_t n = src.size();
    if (n < 3) throw std::invalid_argument("estimate_rigid: need at least 3 point pairs");

    Eigen::Vector3d cs = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        cs += src[i];
        ct += tgt[i];
    }
    cs /= double(n);
    ct /= double(n);

    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i) h += (src[i] - cs) * (tgt[i] - ct).transpose();

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d& sv = svd.singularValues();
    // a unique rotation needs rank >= 2: colinear or coincident sets leave a
    // free spin about the common axis
    if (sv(1) <= 1e-12 * std::max(sv(0), 1.0))
        throw std::invalid_argument(
            "estimate_rigid: degenerate configuration (colinear or coincident points)");

    Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
    Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() > 0 ? 1.0 : -1.0);
    RigidTransform out;
    out.rotation = v * d.asDiagonal() * u.transpose();
    out.translation = ct - out.rotation * cs;
    return out;
}

RegistrationResult register_partial(EncoderParams& params, const EncoderConfig& enc,
                                    const PointCloud& src, const PointCloud& tgt,
                                    std::size_t iters, double tau) {
    if (src.size() == 0 || tgt.size() == 0)
        throw std::invalid_argument("register_partial: empty cloud");
    if (iters == 0) throw std::invalid_argument("register_partial: iters must be positive");

    RegistrationResult out;
    PointCloud current = src;
    for (std::size_t it = 0; it < iters; ++it) {
        Tensor f_src = encode_features(params, current, enc);
        Tensor f_tgt = encode_features(params, tgt, enc);
        const std::vector<std::size_t> match = hard_correspondence(
            soft_correspondence(f_src, f_tgt, tau));

        std::set<std::size_t> distinct(match.begin(), match.end());
        if (distinct.size() < 3)
            throw std::runtime_error(
                "register_partial: registration failure, correspondences collapsed onto " +
                std::to_string(distinct.size()) + " target point(s)");

        std::vector<Eigen::Vector3d> a(current.size()), b(current.size());
        for (std::size_t i = 0; i < current.size(); ++i) {
            a[i] = current.points[i];
            b[i] = tgt.points[match[i]];
        }
        RigidTransform step = estimate_rigid(a, b);
        current = apply_transform(current, step);
        out.per_iteration.push_back(step);
        out.estimated = step.after(out.estimated);
        if (it + 1 == iters) {
            out.matches.reserve(match.size());
            for (std::size_t i = 0; i < match.size(); ++i) out.matches.emplace_back(i, match[i]);
        }
    }
    return out;
}

RegistrationMetrics registration_metrics(const std::vector<RigidTransform>& estimates,
                                         const std::vector<RigidTransform>& ground_truths) {
    if (estimates.size() != ground_truths.size())
        throw std::invalid_argument("registration_metrics: list lengths differ");
    RegistrationMetrics m;
    if (estimates.empty()) return m;

    const double rad2deg = 180.0 / M_PI;
    double rot_sq = 0.0, rot_abs = 0.0, tr_sq = 0.0, tr_abs = 0.0;
    double ang_sq = 0.0, ang_abs = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const Eigen::Matrix3d r_err =
            estimates[i].rotation * ground_truths[i].rotation.transpose();
        const Eigen::Vector3d euler = matrix_to_euler_xyz(r_err) * rad2deg;
        const Eigen::Vector3d t_err = estimates[i].translation - ground_truths[i].translation;
        for (int a = 0; a < 3; ++a) {
            rot_sq += euler[a] * euler[a];
            rot_abs += std::abs(euler[a]);
            tr_sq += t_err[a] * t_err[a];
            tr_abs += std::abs(t_err[a]);
        }
        const double c = std::clamp((r_err.trace() - 1.0) / 2.0, -1.0, 1.0);
        const double angle = std::acos(c) * rad2deg;
        ang_sq += angle * angle;
        ang_abs += angle;
    }
    const double n3 = 3.0 * double(estimates.size());
    const double n = double(estimates.size());
    m.rot_rmse = std::sqrt(rot_sq / n3);
    m.rot_mae = rot_abs / n3;
    m.trans_rmse = std::sqrt(tr_sq / n3);
    m.trans_mae = tr_abs / n3;
    m.rot_angle_rmse = std::sqrt(ang_sq / n);
    m.rot_angle_mae = ang_abs / n;
    return m;
}

KeypointSet transfer_keypoints_matched(const PointCloud& src, const KeypointSet& src_kps,
                                       const PointCloud& tgt,
                                       const std::vector<std::size_t>& match,
                                       std::size_t neighbors) {
    if (src.size() == 0 || tgt.size() == 0)
        throw std::invalid_argument("transfer_keypoints: empty cloud");
    src_kps.validate();
    if (neighbors == 0 || neighbors > src.size())
        throw std::invalid_argument("transfer_keypoints: neighbors must be in [1, |src|]");
    if (match.size() != src.size())
        throw std::invalid_argument("transfer_keypoints: match length must equal |src|");
    for (std::size_t m : match)
        if (m >= tgt.size())
            throw std::invalid_argument("transfer_keypoints: match index out of range");

    KeypointSet out;
    out.labels = src_kps.labels;
    out.positions.reserve(src_kps.size());
    std::vector<std::size_t> order(src.size());
    for (std::size_t k = 0; k < src_kps.size(); ++k) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        const Eigen::Vector3d& kp = src_kps.positions[k];
        std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(neighbors), order.end(),
                          [&](std::size_t i, std::size_t j) {
                              const double di = (src.points[i] - kp).squaredNorm();
                              const double dj = (src.points[j] - kp).squaredNorm();
                              return di != dj ? di < dj : i < j;
                          });
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        for (std::size_t i = 0; i < neighbors; ++i) acc += tgt.points[match[order[i]]];
        out.positions.push_back(acc / double(neighbors));
    }
    return out;
}

KeypointSet transfer_keypoints(EncoderParams& params, const EncoderConfig& enc,
                               const PointCloud& src, const KeypointSet& src_kps,
                               const PointCloud& tgt, std::size_t neighbors, double tau) {
    if (src.size() == 0 || tgt.size() == 0)
        throw std::invalid_argument("transfer_keypoints: empty cloud");
    Tensor f_src = encode_features(params, src, enc);
    Tensor f_tgt = encode_features(params, tgt, enc);
    return transfer_keypoints_matched(
        src, src_kps, tgt, hard_correspondence(soft_correspondence(f_src, f_tgt, tau)),
        neighbors);
}

double keypoint_hit_rate(const KeypointSet& pred, const KeypointSet& gt, double threshold) {
    pred.validate();
    gt.validate();
    if (pred.labels != gt.labels)
        throw std::invalid_argument("keypoint_hit_rate: keypoint labels differ");
    std::size_t hits = 0;
    for (std::size_t k = 0; k < pred.size(); ++k)
        if ((pred.positions[k] - gt.positions[k]).norm() < threshold) ++hits;
    return 100.0 * double(hits) / double(pred.size());
}

namespace {

void write_feature_text(const Tensor& f, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_features: cannot open " + path.string());
    out.precision(9);
    const std::size_t rows = f.rows(), cols = f.cols();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (j) out << ' ';
            out << f(i, j);
        }
        out << '\n';
    }
}

void write_colored_ply(const PointCloud& cloud, const std::vector<std::array<uint8_t, 3>>& rgb,
                       const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("export_features: cannot open " + path.string());
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << cloud.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double xyz[3] = {cloud.points[i].x(), cloud.points[i].y(), cloud.points[i].z()};
        out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
        out.write(reinterpret_cast<const char*>(rgb[i].data()), 3);
    }
    if (!out) throw std::runtime_error("export_features: write failed for " + path.string());
}

}  // namespace

void export_features(EncoderParams& params, const EncoderConfig& enc,
                     const std::vector<PointCloud>& clouds,
                     const std::vector<fs::path>& feature_paths,
                     const std::vector<fs::path>& ply_paths) {
    if (clouds.empty()) throw std::invalid_argument("export_features: no clouds");
    if (feature_paths.size() != clouds.size() || ply_paths.size() != clouds.size())
        throw std::invalid_argument("export_features: path lists must run parallel to clouds");

    std::vector<Tensor> feats;
    std::size_t total = 0;
    feats.reserve(clouds.size());
    for (const auto& c : clouds) {
        feats.push_back(encode_features(params, c, enc));
        total += c.size();
    }
    const std::size_t dim = feats[0].cols();

    Eigen::MatrixXd stacked(total, dim);
    std::size_t row = 0;
    for (const auto& f : feats) {
        const std::size_t n = f.rows();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < dim; ++j) stacked(row + i, j) = f(i, j);
        row += n;
    }

    // joint PCA: shared basis and shared color range keep hues comparable
    // across clouds
    const Eigen::RowVectorXd mean = stacked.colwise().mean();
    stacked.rowwise() -= mean;
    const Eigen::MatrixXd cov =
        stacked.transpose() * stacked / std::max<double>(1.0, double(total - 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Eigen::MatrixXd basis(dim, 3);
    for (int k = 0; k < 3; ++k) {
        Eigen::VectorXd v = eig.eigenvectors().col(Eigen::Index(dim) - 1 - k);
        Eigen::Index imax;
        v.cwiseAbs().maxCoeff(&imax);
        if (v(imax) < 0) v = -v;  // pin the sign so reruns color identically
        basis.col(k) = v;
    }
    const Eigen::MatrixXd proj = stacked * basis;
    Eigen::Vector3d lo = proj.colwise().minCoeff(), hi = proj.colwise().maxCoeff();

    row = 0;
    for (std::size_t c = 0; c < clouds.size(); ++c) {
        write_feature_text(feats[c], feature_paths[c]);
        const std::size_t n = clouds[c].size();
        std::vector<std::array<uint8_t, 3>> rgb(n);
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) {
                const double span = hi[k] - lo[k];
                const double t =
                    span > 1e-12 ? (proj(Eigen::Index(row + i), k) - lo[k]) / span : 0.5;
                rgb[i][std::size_t(k)] = uint8_t(std::lround(t * 255.0));
            }
        write_colored_ply(clouds[c], rgb, ply_paths[c]);
        row += n;
    }
}

void export_features(EncoderParams& params, const EncoderConfig& enc, const PointCloud& cloud,
                     const fs::path& feature_path, const fs::path& ply_path) {
    export_features(params, enc, std::vector<PointCloud>{cloud}, {feature_path}, {ply_path});
}

}  // namespace cyclecorr
