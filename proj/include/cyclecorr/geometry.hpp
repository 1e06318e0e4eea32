#pragma once

#include <Eigen/Core>
#include <random>
#include <vector>

#include "cyclecorr/tensor.hpp"

namespace cyclecorr {

/// Point set in model units. Shapes are normalized to roughly unit diameter.
/// Normals and semantic ids are optional; when present they run parallel to
/// `points` (ids carry ground-truth correspondence labels from the synthetic
/// generator).
struct PointCloud {
    std::vector<Eigen::Vector3d> points;
    std::vector<Eigen::Vector3d> normals;
    std::vector<int> ids;

    std::size_t size() const { return points.size(); }
    bool has_normals() const { return !normals.empty(); }
    bool has_ids() const { return !ids.empty(); }

    /// Throws std::invalid_argument when the container invariants are broken
    /// (empty cloud, length mismatch, non-unit normal).
    void validate() const;
};

/// Similarity transform p -> scale * R * p + t. scale stays 1 for strictly
/// rigid motion.
struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double scale = 1.0;

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
        return scale * (rotation * p) + translation;
    }

    RigidTransform inverse() const;

    /// Composition this(other(x)).
    RigidTransform after(const RigidTransform& other) const;

    /// Throws std::invalid_argument unless rotation is orthonormal with
    /// determinant +1 (within 1e-9) and scale is positive.
    void validate() const;
};

struct AugmentConfig {
    double rot_deg_lo = -15.0;
    double rot_deg_hi = 15.0;
    double trans_lo = -0.2;
    double trans_hi = 0.2;
    double scale_lo = 0.8;
    double scale_hi = 1.25;
};

/// R = Rz(c) * Ry(b) * Rx(a), angles in radians.
Eigen::Matrix3d euler_xyz_to_matrix(double a, double b, double c);

/// Inverse of euler_xyz_to_matrix; returns (a, b, c) in radians. Near gimbal
/// lock (|cos b| ~ 0) the split between a and c is conventional: a = 0.
Eigen::Vector3d matrix_to_euler_xyz(const Eigen::Matrix3d& R);

/// Symmetric N x N matrix of Euclidean distances, exact zeros on the
/// diagonal.
Tensor pairwise_distance_matrix(const PointCloud& cloud);

/// Greedy max-min coverage: starts at `seed`, then repeatedly takes the point
/// farthest from everything selected so far. Ties go to the lower index.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::size_t seed);

/// Per-axis rotation angles, per-axis translations and the scale are drawn
/// uniformly from their ranges, in that fixed order.
RigidTransform sample_rigid_transform(std::mt19937_64& rng, const AugmentConfig& ranges);

/// Transforms points (and rotates normals, renormalized); ids and point order
/// are untouched.
PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& T);

/// Simulated occlusion: picks a uniformly random anchor point and keeps the
/// `keep` points nearest to it (anchor included), preserving input order.
PointCloud truncate_partial(const PointCloud& cloud, std::size_t keep, std::mt19937_64& rng);

/// Flattened N x k neighbor table (row i at [i*k, (i+1)*k)). Each row starts
/// with i itself, followed by the nearest other points; distance ties break
/// toward the lower index.
std::vector<std::size_t> knn_indices(const PointCloud& cloud, std::size_t k);

/// Centroid to the origin, then scaled so the bounding-sphere diameter is 1.
PointCloud normalize_shape(const PointCloud& cloud);

}  // namespace cyclecorr
