#include "cyclecorr/geometry.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cyclecorr {

void PointCloud::validate() const {
    if (points.empty()) throw std::invalid_argument("PointCloud: at least one point required");
    if (has_normals()) {
        if (normals.size() != points.size())
            throw std::invalid_argument("PointCloud: normals length mismatch");
        for (const auto& n : normals)
            if (std::abs(n.norm() - 1.0) > 1e-6)
                throw std::invalid_argument("PointCloud: non-unit normal");
    }
    if (has_ids() && ids.size() != points.size())
        throw std::invalid_argument("PointCloud: ids length mismatch");
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.scale = 1.0 / scale;
    inv.translation = -inv.scale * (inv.rotation * translation);
    return inv;
}

RigidTransform RigidTransform::after(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.scale = scale * other.scale;
    out.translation = scale * (rotation * other.translation) + translation;
    return out;
}

void RigidTransform::validate() const {
    if (!(scale > 0.0)) throw std::invalid_argument("RigidTransform: scale must be positive");
    const Eigen::Matrix3d gram = rotation.transpose() * rotation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument("RigidTransform: rotation not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
        throw std::invalid_argument("RigidTransform: rotation is a reflection");
}

Eigen::Matrix3d euler_xyz_to_matrix(double a, double b, double c) {
    Eigen::Matrix3d Rx, Ry, Rz;
    Rx << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    Ry << std::cos(b), 0, std::sin(b), 0, 1, 0, -std::sin(b), 0, std::cos(b);
    Rz << std::cos(c), -std::sin(c), 0, std::sin(c), std::cos(c), 0, 0, 0, 1;
    return Rz * Ry * Rx;
}

Eigen::Vector3d matrix_to_euler_xyz(const Eigen::Matrix3d& R) {
    const double sb = -R(2, 0);
    const double b = std::asin(std::clamp(sb, -1.0, 1.0));
    if (std::abs(R(2, 0)) > 1.0 - 1e-12) {
        // gimbal lock: only a +/- c is determined; put it all in c
        return {0.0, b, std::atan2(-R(0, 1), R(1, 1))};
    }
    const double a = std::atan2(R(2, 1), R(2, 2));
    const double c = std::atan2(R(1, 0), R(0, 0));
    return {a, b, c};
}

Tensor pairwise_distance_matrix(const PointCloud& cloud) {
    const std::size_t n = cloud.size();
    Tensor d({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dist = (cloud.points[i] - cloud.points[j]).norm();
            d(i, j) = dist;
            d(j, i) = dist;
        }
    return d;
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::size_t seed) {
    const std::size_t n = cloud.size();
    if (k < 1 || k > n) throw std::invalid_argument("farthest_point_sample: k out of range");
    if (seed >= n) throw std::invalid_argument("farthest_point_sample: seed out of range");
    std::vector<std::size_t> picked;
    picked.reserve(k);
    picked.push_back(seed);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    for (std::size_t step = 1; step < k; ++step) {
        const auto& last = cloud.points[picked.back()];
        std::size_t far_idx = 0;
        double far_dist = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            best[i] = std::min(best[i], (cloud.points[i] - last).squaredNorm());
            if (best[i] > far_dist) {
                far_dist = best[i];
                far_idx = i;
            }
        }
        picked.push_back(far_idx);
    }
    return picked;
}

RigidTransform sample_rigid_transform(std::mt19937_64& rng, const AugmentConfig& ranges) {
    if (ranges.rot_deg_lo > ranges.rot_deg_hi || ranges.trans_lo > ranges.trans_hi ||
        ranges.scale_lo > ranges.scale_hi)
        throw std::invalid_argument("sample_rigid_transform: inverted range");
    auto uni = [&rng](double lo, double hi) {
        if (lo == hi) return lo;
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    constexpr double deg = 3.14159265358979323846 / 180.0;
    const double a = uni(ranges.rot_deg_lo, ranges.rot_deg_hi) * deg;
    const double b = uni(ranges.rot_deg_lo, ranges.rot_deg_hi) * deg;
    const double c = uni(ranges.rot_deg_lo, ranges.rot_deg_hi) * deg;
    RigidTransform T;
    T.rotation = euler_xyz_to_matrix(a, b, c);
    T.translation = {uni(ranges.trans_lo, ranges.trans_hi), uni(ranges.trans_lo, ranges.trans_hi),
                     uni(ranges.trans_lo, ranges.trans_hi)};
    T.scale = uni(ranges.scale_lo, ranges.scale_hi);
    return T;
}

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& T) {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const auto& p : cloud.points) out.points.push_back(T.apply(p));
    if (cloud.has_normals()) {
        out.normals.reserve(cloud.size());
        for (const auto& n : cloud.normals) out.normals.push_back((T.rotation * n).normalized());
    }
    out.ids = cloud.ids;
    return out;
}

PointCloud truncate_partial(const PointCloud& cloud, std::size_t keep, std::mt19937_64& rng) {
    const std::size_t n = cloud.size();
    if (keep < 1 || keep > n) throw std::invalid_argument("truncate_partial: keep out of range");
    const std::size_t anchor = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto& ap = cloud.points[anchor];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return (cloud.points[i] - ap).squaredNorm() < (cloud.points[j] - ap).squaredNorm();
    });
    std::vector<bool> kept(n, false);
    for (std::size_t r = 0; r < keep; ++r) kept[order[r]] = true;
    PointCloud out;
    out.points.reserve(keep);
    for (std::size_t i = 0; i < n; ++i) {
        if (!kept[i]) continue;
        out.points.push_back(cloud.points[i]);
        if (cloud.has_normals()) out.normals.push_back(cloud.normals[i]);
        if (cloud.has_ids()) out.ids.push_back(cloud.ids[i]);
    }
    return out;
}

std::vector<std::size_t> knn_indices(const PointCloud& cloud, std::size_t k) {
    const std::size_t n = cloud.size();
    if (k < 1 || k > n) throw std::invalid_argument("knn_indices: k out of range");
    std::vector<std::size_t> table(n * k);
    std::vector<std::size_t> order(n);
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) dist[j] = (cloud.points[i] - cloud.points[j]).squaredNorm();
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
        order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
        const std::size_t want = k - 1;
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(want),
                          order.end(), [&](std::size_t a, std::size_t b) {
                              return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
                          });
        table[i * k] = i;
        for (std::size_t r = 0; r < want; ++r) table[i * k + 1 + r] = order[r];
    }
    return table;
}

PointCloud normalize_shape(const PointCloud& cloud) {
    if (cloud.points.empty())
        throw std::invalid_argument("normalize_shape: empty cloud");
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : cloud.points) centroid += p;
    centroid /= static_cast<double>(cloud.size());
    double radius = 0.0;
    for (const auto& p : cloud.points) radius = std::max(radius, (p - centroid).norm());
    const double s = radius > 0.0 ? 1.0 / (2.0 * radius) : 1.0;
    PointCloud out = cloud;
    for (auto& p : out.points) p = (p - centroid) * s;
    return out;
}

}  // namespace cyclecorr
