#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "cyclecorr/correspondence.hpp"
#include "cyclecorr/encoder.hpp"
#include "cyclecorr/geometry.hpp"
#include "cyclecorr/io.hpp"

namespace cyclecorr {

/// Least-squares rigid alignment of two point lists in one-to-one order
/// (centroid shift, cross-covariance SVD, reflection-safe rotation).
/// Throws std::invalid_argument for fewer than 3 points, mismatched sizes
/// or a degenerate (colinear / coincident) configuration.
RigidTransform estimate_rigid(const std::vector<Eigen::Vector3d>& src,
                              const std::vector<Eigen::Vector3d>& tgt);

struct RegistrationResult {
    RigidTransform estimated;  // composition of all per-iteration transforms
    std::vector<RigidTransform> per_iteration;
    /// (src index, tgt index) matches from the last iteration.
    std::vector<std::pair<std::size_t, std::size_t>> matches;
};

/// Iterative match-and-transform alignment: each round encodes both clouds,
/// takes hard feature correspondences src -> tgt, fits a rigid transform on
/// the matched pairs and moves src by it. Clouds may be truncated partials.
/// Throws std::runtime_error when the correspondences collapse onto too few
/// distinct target points to constrain a transform.
RegistrationResult register_partial(EncoderParams& params, const EncoderConfig& enc,
                                    const PointCloud& src, const PointCloud& tgt,
                                    std::size_t iters = 3, double tau = kCorrespondenceTau);

/// Rotation errors come from the XYZ Euler angles of R_est * R_gt^T in
/// degrees, translation errors from per-component differences; both are
/// aggregated over all pairs and axes. rot_angle_* aggregates the single
/// angle of rotation of R_est * R_gt^T instead of per-axis angles.
struct RegistrationMetrics {
    double rot_rmse = 0.0;
    double rot_mae = 0.0;
    double trans_rmse = 0.0;
    double trans_mae = 0.0;
    double rot_angle_rmse = 0.0;
    double rot_angle_mae = 0.0;
};

RegistrationMetrics registration_metrics(const std::vector<RigidTransform>& estimates,
                                         const std::vector<RigidTransform>& ground_truths);

/// Moves each keypoint by averaging where its `neighbors` nearest source
/// points land under the hard feature correspondence src -> tgt.
KeypointSet transfer_keypoints(EncoderParams& params, const EncoderConfig& enc,
                               const PointCloud& src, const KeypointSet& src_kps,
                               const PointCloud& tgt, std::size_t neighbors = 5,
                               double tau = kCorrespondenceTau);

/// Same transfer rule with the src -> tgt match supplied by the caller
/// (match[i] is the target index of source point i).
KeypointSet transfer_keypoints_matched(const PointCloud& src, const KeypointSet& src_kps,
                                       const PointCloud& tgt,
                                       const std::vector<std::size_t>& match,
                                       std::size_t neighbors = 5);

/// Percentage of keypoints whose prediction lies within `threshold` of the
/// ground truth. Labels must match pairwise.
double keypoint_hit_rate(const KeypointSet& pred, const KeypointSet& gt,
                         double threshold = 0.05);

/// Writes per-point features as text (one row per point) and a colored
/// binary PLY whose RGB channels are the top three principal components of
/// the feature matrix mapped to [0, 255]. The multi-cloud overload fits one
/// joint PCA basis and one joint color range so corresponding parts share
/// hues across clouds; paths run parallel to `clouds`.
void export_features(EncoderParams& params, const EncoderConfig& enc,
                     const std::vector<PointCloud>& clouds,
                     const std::vector<std::filesystem::path>& feature_paths,
                     const std::vector<std::filesystem::path>& ply_paths);
void export_features(EncoderParams& params, const EncoderConfig& enc, const PointCloud& cloud,
                     const std::filesystem::path& feature_path,
                     const std::filesystem::path& ply_path);

}  // namespace cyclecorr
