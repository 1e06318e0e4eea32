#include "cyclecorr/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cyclecorr {

namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line,
                             const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

double parse_coord(const std::string& tok, const std::filesystem::path& path, std::size_t line) {
    double v = 0.0;
    const char* b = tok.data();
    const char* e = b + tok.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e) parse_fail(path, line, "bad number '" + tok + "'");
    if (!std::isfinite(v)) parse_fail(path, line, "non-finite coordinate '" + tok + "'");
    return v;
}

int parse_id(const std::string& tok, const std::filesystem::path& path, std::size_t line) {
    int v = 0;
    const char* b = tok.data();
    const char* e = b + tok.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e) parse_fail(path, line, "bad id '" + tok + "'");
    return v;
}

std::string strip_comment(const std::string& line) {
    const auto pos = line.find('#');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

void write_g9(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    out += buf;
}

}  // namespace

void KeypointSet::validate() const {
    if (labels.empty()) throw std::invalid_argument("KeypointSet: at least one keypoint required");
    if (labels.size() != positions.size())
        throw std::invalid_argument("KeypointSet: labels/positions length mismatch");
}

PointCloud load_xyz(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    PointCloud cloud;
    std::string line;
    std::size_t lineno = 0;
    int columns = -1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto toks = split_ws(strip_comment(line));
        if (toks.empty()) continue;
        const int n = static_cast<int>(toks.size());
        if (n != 3 && n != 4 && n != 6 && n != 7)
            parse_fail(path, lineno, "expected 3, 4, 6 or 7 columns, got " + std::to_string(n));
        if (columns == -1) columns = n;
        if (n != columns)
            parse_fail(path, lineno,
                       "inconsistent column count (" + std::to_string(n) + " vs " +
                           std::to_string(columns) + ")");
        Eigen::Vector3d p{parse_coord(toks[0], path, lineno), parse_coord(toks[1], path, lineno),
                          parse_coord(toks[2], path, lineno)};
        cloud.points.push_back(p);
        if (n >= 6) {
            cloud.normals.push_back({parse_coord(toks[3], path, lineno),
                                     parse_coord(toks[4], path, lineno),
                                     parse_coord(toks[5], path, lineno)});
        }
        if (n == 4) cloud.ids.push_back(parse_id(toks[3], path, lineno));
        if (n == 7) cloud.ids.push_back(parse_id(toks[6], path, lineno));
    }
    if (cloud.points.empty()) throw std::runtime_error(path.string() + ": no points");
    return cloud;
}

void save_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
    std::string out;
    out.reserve(cloud.size() * 48);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            if (a) out += ' ';
            write_g9(out, cloud.points[i][a]);
        }
        if (cloud.has_normals())
            for (int a = 0; a < 3; ++a) {
                out += ' ';
                write_g9(out, cloud.normals[i][a]);
            }
        if (cloud.has_ids()) {
            out += ' ';
            out += std::to_string(cloud.ids[i]);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << out;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

namespace {

struct PlyProperty {
    std::string type;
    std::string name;
};

std::size_t ply_type_size(const std::string& t, const std::filesystem::path& path) {
    if (t == "char" || t == "int8" || t == "uchar" || t == "uint8") return 1;
    if (t == "short" || t == "int16" || t == "ushort" || t == "uint16") return 2;
    if (t == "int" || t == "int32" || t == "uint" || t == "uint32" || t == "float" ||
        t == "float32")
        return 4;
    if (t == "double" || t == "float64") return 8;
    throw std::runtime_error(path.string() + ": unsupported ply type '" + t + "'");
}

double ply_read_binary(std::ifstream& in, const std::string& type,
                       const std::filesystem::path& path) {
    char buf[8];
    const std::size_t sz = ply_type_size(type, path);
    if (!in.read(buf, static_cast<std::streamsize>(sz)))
        throw std::runtime_error(path.string() + ": truncated vertex data");
    if (type == "float" || type == "float32") {
        float f;
        std::memcpy(&f, buf, 4);
        return f;
    }
    if (type == "double" || type == "float64") {
        double d;
        std::memcpy(&d, buf, 8);
        return d;
    }
    if (type == "char" || type == "int8") return static_cast<signed char>(buf[0]);
    if (type == "uchar" || type == "uint8") return static_cast<unsigned char>(buf[0]);
    if (type == "short" || type == "int16") {
        std::int16_t v;
        std::memcpy(&v, buf, 2);
        return v;
    }
    if (type == "ushort" || type == "uint16") {
        std::uint16_t v;
        std::memcpy(&v, buf, 2);
        return v;
    }
    if (type == "int" || type == "int32") {
        std::int32_t v;
        std::memcpy(&v, buf, 4);
        return v;
    }
    std::uint32_t v;
    std::memcpy(&v, buf, 4);
    return v;
}

}  // namespace

PointCloud load_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply")
        throw std::runtime_error(path.string() + ": not a ply file");
    bool binary = false;
    bool in_vertex = false;
    std::size_t vertex_count = 0;
    std::vector<PlyProperty> props;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (toks[0] == "format") {
            if (toks.size() < 2) throw std::runtime_error(path.string() + ": bad format line");
            if (toks[1] == "binary_little_endian") binary = true;
            else if (toks[1] == "ascii") binary = false;
            else throw std::runtime_error(path.string() + ": unsupported format " + toks[1]);
        } else if (toks[0] == "element") {
            in_vertex = toks.size() >= 3 && toks[1] == "vertex";
            if (in_vertex) vertex_count = std::stoull(toks[2]);
        } else if (toks[0] == "property" && in_vertex) {
            if (toks.size() >= 2 && toks[1] == "list")
                throw std::runtime_error(path.string() + ": list property on vertices");
            if (toks.size() < 3) throw std::runtime_error(path.string() + ": bad property line");
            props.push_back({toks[1], toks[2]});
        } else if (toks[0] == "end_header") {
            break;
        }
    }
    if (vertex_count == 0) throw std::runtime_error(path.string() + ": no vertex element");

    auto index_of = [&](const char* name) -> int {
        for (std::size_t i = 0; i < props.size(); ++i)
            if (props[i].name == name) return static_cast<int>(i);
        return -1;
    };
    const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
    if (ix < 0 || iy < 0 || iz < 0)
        throw std::runtime_error(path.string() + ": vertex element lacks x/y/z");
    const int inx = index_of("nx"), iny = index_of("ny"), inz = index_of("nz");
    const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;
    const int iid = index_of("id");

    PointCloud cloud;
    std::vector<double> row(props.size());
    for (std::size_t v = 0; v < vertex_count; ++v) {
        for (std::size_t p = 0; p < props.size(); ++p) {
            if (binary) {
                row[p] = ply_read_binary(in, props[p].type, path);
            } else {
                if (!(in >> row[p]))
                    throw std::runtime_error(path.string() + ": truncated vertex data");
            }
        }
        cloud.points.push_back({row[ix], row[iy], row[iz]});
        if (has_normals) cloud.normals.push_back({row[inx], row[iny], row[inz]});
        if (iid >= 0) cloud.ids.push_back(static_cast<int>(row[iid]));
    }
    return cloud;
}

void save_ply(const PointCloud& cloud, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << cloud.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (cloud.has_normals())
        out << "property double nx\nproperty double ny\nproperty double nz\n";
    if (cloud.has_ids()) out << "property int id\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double xyz[3] = {cloud.points[i][0], cloud.points[i][1], cloud.points[i][2]};
        out.write(reinterpret_cast<const char*>(xyz), sizeof xyz);
        if (cloud.has_normals()) {
            double n[3] = {cloud.normals[i][0], cloud.normals[i][1], cloud.normals[i][2]};
            out.write(reinterpret_cast<const char*>(n), sizeof n);
        }
        if (cloud.has_ids()) {
            const std::int32_t id = cloud.ids[i];
            out.write(reinterpret_cast<const char*>(&id), sizeof id);
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

PointCloud load_cloud(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".xyz" || ext == ".txt") return load_xyz(path);
    if (ext == ".ply") return load_ply(path);
    throw std::invalid_argument("load_cloud: unsupported extension '" + ext + "'");
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".xyz" || ext == ".txt") return save_xyz(cloud, path);
    if (ext == ".ply") return save_ply(cloud, path);
    throw std::invalid_argument("save_cloud: unsupported extension '" + ext + "'");
}

KeypointSet load_keypoints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    KeypointSet kps;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto toks = split_ws(strip_comment(line));
        if (toks.empty()) continue;
        if (toks.size() != 4) parse_fail(path, lineno, "expected 'label x y z'");
        kps.labels.push_back(toks[0]);
        kps.positions.push_back({parse_coord(toks[1], path, lineno),
                                 parse_coord(toks[2], path, lineno),
                                 parse_coord(toks[3], path, lineno)});
    }
    if (kps.labels.empty()) throw std::runtime_error(path.string() + ": no keypoints");
    return kps;
}

void save_keypoints(const KeypointSet& kps, const std::filesystem::path& path) {
    kps.validate();
    std::string out;
    for (std::size_t i = 0; i < kps.size(); ++i) {
        out += kps.labels[i];
        for (int a = 0; a < 3; ++a) {
            out += ' ';
            write_g9(out, kps.positions[i][a]);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << out;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

double ConfigMap::take_double(const std::string& key, double fallback) {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    const std::string s = it->second;
    values.erase(it);
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': bad number '" + s + "'");
    }
}

std::int64_t ConfigMap::take_int(const std::string& key, std::int64_t fallback) {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    const std::string s = it->second;
    values.erase(it);
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw std::runtime_error("config key '" + key + "': bad integer '" + s + "'");
    return v;
}

std::size_t ConfigMap::take_size(const std::string& key, std::size_t fallback) {
    const std::int64_t v = take_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw std::runtime_error("config key '" + key + "': must be nonnegative");
    return static_cast<std::size_t>(v);
}

bool ConfigMap::take_bool(const std::string& key, bool fallback) {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::string s = it->second;
    values.erase(it);
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "off" || s == "no") return false;
    throw std::runtime_error("config key '" + key + "': bad boolean '" + s + "'");
}

std::string ConfigMap::take_string(const std::string& key, std::string fallback) {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::string v = it->second;
    values.erase(it);
    return v;
}

std::vector<std::string> ConfigMap::remaining() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values) out.push_back(k);
    return out;
}

ConfigMap parse_config_text(const std::string& text, const std::string& origin) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": unterminated section header");
            section = trim(body.substr(1, body.size() - 2));
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": expected 'key = value'");
        std::string key = trim(body.substr(0, eq));
        std::string val = trim(body.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        if (cfg.values.count(key))
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": duplicate key '" + key + "'");
        cfg.values[key] = val;
    }
    return cfg;
}

ConfigMap parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

}  // namespace cyclecorr
