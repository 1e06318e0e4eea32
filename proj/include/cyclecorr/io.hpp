#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "cyclecorr/geometry.hpp"

namespace cyclecorr {

/// Named landmark positions on a shape.
struct KeypointSet {
    std::vector<std::string> labels;
    std::vector<Eigen::Vector3d> positions;

    std::size_t size() const { return labels.size(); }
    void validate() const;
};

/// Text clouds: one point per line, "x y z [nx ny nz] [id]", whitespace
/// separated, '#' starts a comment. Column count is inferred per file
/// (3, 4, 6 or 7) and must be consistent. Coordinates are written with 9
/// significant digits.
PointCloud load_xyz(const std::filesystem::path& path);
void save_xyz(const PointCloud& cloud, const std::filesystem::path& path);

/// Binary little-endian PLY (ascii accepted on read). Normals map to
/// nx/ny/nz, ids to an int "id" property. Unknown vertex properties are
/// skipped on read.
PointCloud load_ply(const std::filesystem::path& path);
void save_ply(const PointCloud& cloud, const std::filesystem::path& path);

/// Extension dispatch: .xyz/.txt text, .ply binary.
PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

/// Keypoint files: "label x y z" per line, '#' comments, labels without
/// whitespace.
KeypointSet load_keypoints(const std::filesystem::path& path);
void save_keypoints(const KeypointSet& kps, const std::filesystem::path& path);

/// Flat "key = value" configuration with [section] headers; keys outside a
/// section keep their bare name, others become "section.key". Callers pull
/// the keys they understand via the take_* accessors and then fail on
/// leftovers, so typos never pass silently.
struct ConfigMap {
    std::map<std::string, std::string> values;

    bool contains(const std::string& key) const { return values.count(key) != 0; }
    /// Removes and parses the key; returns fallback when absent. Throws
    /// std::runtime_error on malformed values.
    double take_double(const std::string& key, double fallback);
    std::int64_t take_int(const std::string& key, std::int64_t fallback);
    std::size_t take_size(const std::string& key, std::size_t fallback);
    bool take_bool(const std::string& key, bool fallback);
    std::string take_string(const std::string& key, std::string fallback);
    /// Keys nobody consumed; non-empty means the config had unknown entries.
    std::vector<std::string> remaining() const;
};

ConfigMap parse_config_text(const std::string& text, const std::string& origin = "<config>");
ConfigMap parse_config_file(const std::filesystem::path& path);

}  // namespace cyclecorr
