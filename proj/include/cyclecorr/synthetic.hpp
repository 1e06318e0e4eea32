#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cyclecorr/geometry.hpp"
#include "cyclecorr/io.hpp"

namespace cyclecorr {

/// Procedural stand-in categories with built-in dense correspondence: every
/// instance of a family samples the same fixed parametric pattern, so point
/// index i means the same surface location on every shape (ids[i] = i).
enum class ShapeFamily { Winged, FourLegTable, ChairLike };

ShapeFamily family_from_name(std::string_view name);
std::string family_name(ShapeFamily family);

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct SyntheticCategoryConfig {
    ShapeFamily family = ShapeFamily::Winged;
    std::size_t instances = 200;
    std::size_t points_per_shape = 256;
    std::uint64_t seed = 0;

    // winged: fuselage spindle + two swept wing panels + tail fin
    ParamRange body_length{0.8, 1.2};
    ParamRange body_radius{0.08, 0.14};
    ParamRange wing_span{0.9, 1.4};
    ParamRange wing_chord{0.18, 0.30};
    ParamRange wing_sweep{0.05, 0.25};
    ParamRange fin_height{0.15, 0.30};

    // four-leg-table: slab top + four cylindrical legs
    // chair-like reuses top_width/top_depth as the seat plus a tilted back
    ParamRange top_width{0.8, 1.2};
    ParamRange top_depth{0.6, 1.0};
    ParamRange leg_height{0.5, 0.9};
    ParamRange leg_radius{0.03, 0.06};
    ParamRange seat_height{0.35, 0.55};
    ParamRange back_height{0.4, 0.7};
    ParamRange back_tilt{0.0, 0.3};

    void validate() const;
};

/// Where point index i lives on the family surface: which part, and the
/// fixed 2-d parameter inside that part. The pattern depends only on
/// (family, points_per_shape), never on the instance.
struct ParametricAddress {
    int component = 0;
    double u = 0.0;
    double v = 0.0;
};

std::vector<ParametricAddress> parametric_pattern(ShapeFamily family, std::size_t n);

/// Family surface evaluated under one instance's parameter vector (order as
/// drawn in make_instance; see source). Raw model frame, no normalization.
Eigen::Vector3d surface_point(ShapeFamily family, const std::vector<double>& params,
                              const ParametricAddress& a);
Eigen::Vector3d surface_normal(ShapeFamily family, const std::vector<double>& params,
                               const ParametricAddress& a);

struct SyntheticInstance {
    PointCloud cloud;        // raw model frame, ids[i] = i, unit normals
    KeypointSet keypoints;   // exact parametric landmarks, same frame
    std::vector<double> params;
};

/// One instance with parameters drawn uniformly from the config ranges.
SyntheticInstance make_instance(const SyntheticCategoryConfig& cfg, std::mt19937_64& rng);

/// Similarity-transforms cloud and keypoints together: centroid to origin,
/// bounding-sphere diameter 1.
SyntheticInstance normalize_instance(const SyntheticInstance& inst);

/// cfg.instances normalized shapes, deterministic for a given cfg.seed.
std::vector<SyntheticInstance> make_category(const SyntheticCategoryConfig& cfg);

/// Writes shape_NNNN.xyz (x y z nx ny nz id), shape_NNNN.keypoints and a
/// category.txt config echo under out_dir. Returns out_dir.
std::filesystem::path generate_synthetic_category(const SyntheticCategoryConfig& cfg,
                                                  const std::filesystem::path& out_dir);

struct CategoryData {
    std::vector<PointCloud> clouds;
    std::vector<KeypointSet> keypoints;  // empty when no keypoint files exist
};

/// Loads every shape_*.xyz under dir (sorted), with keypoints when present.
CategoryData load_category(const std::filesystem::path& dir);

}  // namespace cyclecorr
