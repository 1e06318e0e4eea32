#include "cyclecorr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cyclecorr {

namespace fs = std::filesystem;

ShapeFamily family_from_name(std::string_view name) {
    if (name == "winged") return ShapeFamily::Winged;
    if (name == "four-leg-table") return ShapeFamily::FourLegTable;
    if (name == "chair-like") return ShapeFamily::ChairLike;
    throw std::invalid_argument("unknown shape family: " + std::string(name) +
                                " (expected winged, four-leg-table or chair-like)");
}

std::string family_name(ShapeFamily family) {
    switch (family) {
        case ShapeFamily::Winged: return "winged";
        case ShapeFamily::FourLegTable: return "four-leg-table";
        case ShapeFamily::ChairLike: return "chair-like";
    }
    throw std::invalid_argument("unknown shape family value");
}

namespace {

void check_range(const ParamRange& r, const char* name, bool allow_zero) {
    if (!(r.lo <= r.hi))
        throw std::invalid_argument(std::string("synthetic config: ") + name + " range inverted");
    const double floor = allow_zero ? 0.0 : 1e-12;
    if (r.lo < floor || !std::isfinite(r.lo) || !std::isfinite(r.hi))
        throw std::invalid_argument(std::string("synthetic config: ") + name + " range invalid");
}

}  // namespace

void SyntheticCategoryConfig::validate() const {
    if (instances < 2) throw std::invalid_argument("synthetic config: need at least 2 instances");
    if (points_per_shape < 16)
        throw std::invalid_argument("synthetic config: need at least 16 points per shape");
    check_range(body_length, "body_length", false);
    check_range(body_radius, "body_radius", false);
    check_range(wing_span, "wing_span", false);
    check_range(wing_chord, "wing_chord", false);
    check_range(wing_sweep, "wing_sweep", true);
    check_range(fin_height, "fin_height", false);
    check_range(top_width, "top_width", false);
    check_range(top_depth, "top_depth", false);
    check_range(leg_height, "leg_height", false);
    check_range(leg_radius, "leg_radius", false);
    check_range(seat_height, "seat_height", false);
    check_range(back_height, "back_height", false);
    check_range(back_tilt, "back_tilt", true);
}

namespace {

constexpr double kGolden = 0.6180339887498949;  // 1/phi, low-discrepancy stride

// fixed per-component counts; remainders go to the largest part
std::vector<std::size_t> component_counts(ShapeFamily family, std::size_t n) {
    switch (family) {
        case ShapeFamily::Winged: {
            const std::size_t body = n / 2;
            const std::size_t wing = 3 * n / 16;
            return {body, wing, wing, n - body - 2 * wing};
        }
        case ShapeFamily::FourLegTable: {
            std::size_t top = n / 2;
            const std::size_t leg = (n - top) / 4;
            top = n - 4 * leg;
            return {top, leg, leg, leg, leg};
        }
        case ShapeFamily::ChairLike: {
            std::size_t seat = 5 * n / 16;
            const std::size_t back = n / 4;
            const std::size_t leg = (n - seat - back) / 4;
            seat = n - back - 4 * leg;
            return {seat, leg, leg, leg, leg, back};
        }
    }
    throw std::invalid_argument("unknown shape family value");
}

double frac(double x) { return x - std::floor(x); }

}  // namespace

std::vector<ParametricAddress> parametric_pattern(ShapeFamily family, std::size_t n) {
    if (n < 16) throw std::invalid_argument("parametric_pattern: need at least 16 points");
    std::vector<ParametricAddress> out;
    out.reserve(n);
    const std::vector<std::size_t> counts = component_counts(family, n);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const std::size_t m = counts[c];
        for (std::size_t j = 0; j < m; ++j) {
            ParametricAddress a;
            a.component = int(c);
            a.u = (double(j) + 0.5) / double(m);
            a.v = frac(double(j) * kGolden + 0.5 / double(m));
            out.push_back(a);
        }
    }
    return out;
}

namespace {

constexpr double kPi = std::numbers::pi;

void require_params(const std::vector<double>& p, std::size_t n, const char* family) {
    if (p.size() != n)
        throw std::invalid_argument(std::string(family) + " surface: wrong parameter count");
}

}  // namespace

Eigen::Vector3d surface_point(ShapeFamily family, const std::vector<double>& p,
                              const ParametricAddress& a) {
    switch (family) {
        case ShapeFamily::Winged: {
            require_params(p, 6, "winged");
            const double L = p[0], R = p[1], S = p[2], C = p[3], W = p[4], H = p[5];
            switch (a.component) {
                case 0: {  // fuselage spindle, nose at +x
                    const double x = L * (a.u - 0.5);
                    const double rho = R * std::sqrt(4.0 * a.u * (1.0 - a.u));
                    const double th = 2.0 * kPi * a.v;
                    return {x, rho * std::cos(th), rho * std::sin(th)};
                }
                case 1:
                case 2: {  // flat swept wing panels, left = -y
                    const double side = a.component == 1 ? -1.0 : 1.0;
                    return {(a.v - 0.5) * C - W * a.u, side * a.u * (S / 2.0), 0.0};
                }
                case 3: {  // vertical tail fin at the -x end
                    const double cf = 0.6 * C;
                    return {-L / 2.0 + cf * a.v, 0.0, a.u * H};
                }
            }
            break;
        }
        case ShapeFamily::FourLegTable: {
            require_params(p, 4, "four-leg-table");
            const double Wt = p[0], Dt = p[1], Hl = p[2], Rl = p[3];
            if (a.component == 0) return {(a.u - 0.5) * Wt, (a.v - 0.5) * Dt, Hl};
            if (a.component >= 1 && a.component <= 4) {
                const int k = a.component - 1;
                const double cx = ((k & 1) ? 1.0 : -1.0) * (Wt / 2.0 - 1.5 * Rl);
                const double cy = ((k & 2) ? 1.0 : -1.0) * (Dt / 2.0 - 1.5 * Rl);
                const double th = 2.0 * kPi * a.v;
                return {cx + Rl * std::cos(th), cy + Rl * std::sin(th), a.u * Hl};
            }
            break;
        }
        case ShapeFamily::ChairLike: {
            require_params(p, 6, "chair-like");
            const double Ws = p[0], Ds = p[1], Hs = p[2], Rl = p[3], Hb = p[4], Tb = p[5];
            if (a.component == 0) return {(a.u - 0.5) * Ws, (a.v - 0.5) * Ds, Hs};
            if (a.component >= 1 && a.component <= 4) {
                const int k = a.component - 1;
                const double cx = ((k & 1) ? 1.0 : -1.0) * (Ws / 2.0 - 1.5 * Rl);
                const double cy = ((k & 2) ? 1.0 : -1.0) * (Ds / 2.0 - 1.5 * Rl);
                const double th = 2.0 * kPi * a.v;
                return {cx + Rl * std::cos(th), cy + Rl * std::sin(th), a.u * Hs};
            }
            if (a.component == 5)  // tilted back panel on the rear edge
                return {(a.v - 0.5) * Ws, Ds / 2.0 + Tb * a.u * Hb, Hs + a.u * Hb};
            break;
        }
    }
    throw std::invalid_argument("surface_point: bad component for family");
}

Eigen::Vector3d surface_normal(ShapeFamily family, const std::vector<double>& p,
                               const ParametricAddress& a) {
    switch (family) {
        case ShapeFamily::Winged: {
            require_params(p, 6, "winged");
            const double L = p[0], R = p[1];
            switch (a.component) {
                case 0: {
                    const double rho = R * std::sqrt(4.0 * a.u * (1.0 - a.u));
                    const double drho_du =
                        R * (2.0 - 4.0 * a.u) / std::sqrt(4.0 * a.u * (1.0 - a.u));
                    const double th = 2.0 * kPi * a.v;
                    Eigen::Vector3d n(-rho * drho_du / L, rho * std::cos(th),
                                      rho * std::sin(th));
                    return n.normalized();
                }
                case 1:
                case 2: return {0.0, 0.0, 1.0};
                case 3: return {0.0, 1.0, 0.0};
            }
            break;
        }
        case ShapeFamily::FourLegTable: {
            require_params(p, 4, "four-leg-table");
            if (a.component == 0) return {0.0, 0.0, 1.0};
            if (a.component >= 1 && a.component <= 4) {
                const double th = 2.0 * kPi * a.v;
                return {std::cos(th), std::sin(th), 0.0};
            }
            break;
        }
        case ShapeFamily::ChairLike: {
            require_params(p, 6, "chair-like");
            const double Tb = p[5];
            if (a.component == 0) return {0.0, 0.0, 1.0};
            if (a.component >= 1 && a.component <= 4) {
                const double th = 2.0 * kPi * a.v;
                return {std::cos(th), std::sin(th), 0.0};
            }
            if (a.component == 5)
                return Eigen::Vector3d(0.0, -1.0, Tb).normalized();
            break;
        }
    }
    throw std::invalid_argument("surface_normal: bad component for family");
}

namespace {

double draw(std::mt19937_64& rng, const ParamRange& r) {
    if (r.lo == r.hi) return r.lo;
    std::uniform_real_distribution<double> u(r.lo, r.hi);
    return u(rng);
}

std::vector<double> draw_params(const SyntheticCategoryConfig& cfg, std::mt19937_64& rng) {
    switch (cfg.family) {
        case ShapeFamily::Winged:
            return {draw(rng, cfg.body_length), draw(rng, cfg.body_radius),
                    draw(rng, cfg.wing_span),   draw(rng, cfg.wing_chord),
                    draw(rng, cfg.wing_sweep),  draw(rng, cfg.fin_height)};
        case ShapeFamily::FourLegTable:
            return {draw(rng, cfg.top_width), draw(rng, cfg.top_depth),
                    draw(rng, cfg.leg_height), draw(rng, cfg.leg_radius)};
        case ShapeFamily::ChairLike:
            return {draw(rng, cfg.top_width),   draw(rng, cfg.top_depth),
                    draw(rng, cfg.seat_height), draw(rng, cfg.leg_radius),
                    draw(rng, cfg.back_height), draw(rng, cfg.back_tilt)};
    }
    throw std::invalid_argument("unknown shape family value");
}

KeypointSet family_keypoints(ShapeFamily family, const std::vector<double>& p) {
    KeypointSet kp;
    auto add = [&](std::string label, double x, double y, double z) {
        kp.labels.push_back(std::move(label));
        kp.positions.emplace_back(x, y, z);
    };
    switch (family) {
        case ShapeFamily::Winged: {
            const double L = p[0], R = p[1], S = p[2], C = p[3], W = p[4], H = p[5];
            add("nose", L / 2.0, 0.0, 0.0);
            add("tail", -L / 2.0, 0.0, 0.0);
            add("wing_tip_left", -W, -S / 2.0, 0.0);
            add("wing_tip_right", -W, S / 2.0, 0.0);
            add("fin_top", -L / 2.0 + 0.3 * C, 0.0, H);
            add("belly", 0.0, 0.0, -R);
            break;
        }
        case ShapeFamily::FourLegTable: {
            const double Wt = p[0], Dt = p[1], Hl = p[2], Rl = p[3];
            for (int k = 0; k < 4; ++k) {
                const double cx = ((k & 1) ? 1.0 : -1.0) * (Wt / 2.0 - 1.5 * Rl);
                const double cy = ((k & 2) ? 1.0 : -1.0) * (Dt / 2.0 - 1.5 * Rl);
                add("leg_bottom_" + std::to_string(k), cx, cy, 0.0);
            }
            for (int k = 0; k < 4; ++k) {
                const double sx = ((k & 1) ? 1.0 : -1.0) * (Wt / 2.0);
                const double sy = ((k & 2) ? 1.0 : -1.0) * (Dt / 2.0);
                add("top_corner_" + std::to_string(k), sx, sy, Hl);
            }
            break;
        }
        case ShapeFamily::ChairLike: {
            const double Ws = p[0], Ds = p[1], Hs = p[2], Rl = p[3], Hb = p[4], Tb = p[5];
            for (int k = 0; k < 4; ++k) {
                const double cx = ((k & 1) ? 1.0 : -1.0) * (Ws / 2.0 - 1.5 * Rl);
                const double cy = ((k & 2) ? 1.0 : -1.0) * (Ds / 2.0 - 1.5 * Rl);
                add("leg_bottom_" + std::to_string(k), cx, cy, 0.0);
            }
            add("seat_front_left", -Ws / 2.0, -Ds / 2.0, Hs);
            add("seat_front_right", Ws / 2.0, -Ds / 2.0, Hs);
            add("back_top_left", -Ws / 2.0, Ds / 2.0 + Tb * Hb, Hs + Hb);
            add("back_top_right", Ws / 2.0, Ds / 2.0 + Tb * Hb, Hs + Hb);
            break;
        }
    }
    return kp;
}

}  // namespace

SyntheticInstance make_instance(const SyntheticCategoryConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    SyntheticInstance inst;
    inst.params = draw_params(cfg, rng);
    const std::vector<ParametricAddress> pattern =
        parametric_pattern(cfg.family, cfg.points_per_shape);
    inst.cloud.points.reserve(pattern.size());
    inst.cloud.normals.reserve(pattern.size());
    inst.cloud.ids.reserve(pattern.size());
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        inst.cloud.points.push_back(surface_point(cfg.family, inst.params, pattern[i]));
        inst.cloud.normals.push_back(surface_normal(cfg.family, inst.params, pattern[i]));
        inst.cloud.ids.push_back(int(i));
    }
    inst.keypoints = family_keypoints(cfg.family, inst.params);
    return inst;
}

SyntheticInstance normalize_instance(const SyntheticInstance& inst) {
    if (inst.cloud.points.empty())
        throw std::invalid_argument("normalize_instance: empty cloud");
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : inst.cloud.points) centroid += p;
    centroid /= double(inst.cloud.size());
    double radius = 0.0;
    for (const auto& p : inst.cloud.points) radius = std::max(radius, (p - centroid).norm());
    const double s = radius > 0.0 ? 1.0 / (2.0 * radius) : 1.0;

    SyntheticInstance out = inst;
    for (auto& p : out.cloud.points) p = (p - centroid) * s;
    for (auto& p : out.keypoints.positions) p = (p - centroid) * s;
    return out;
}

std::vector<SyntheticInstance> make_category(const SyntheticCategoryConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::vector<SyntheticInstance> out;
    out.reserve(cfg.instances);
    for (std::size_t i = 0; i < cfg.instances; ++i)
        out.push_back(normalize_instance(make_instance(cfg, rng)));
    return out;
}

namespace {

std::string index_name(std::size_t i) {
    std::ostringstream ss;
    ss << "shape_" << std::setw(4) << std::setfill('0') << i;
    return ss.str();
}

}  // namespace

fs::path generate_synthetic_category(const SyntheticCategoryConfig& cfg, const fs::path& out_dir) {
    const std::vector<SyntheticInstance> shapes = make_category(cfg);
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const std::string base = index_name(i);
        save_cloud(shapes[i].cloud, out_dir / (base + ".xyz"));
        save_keypoints(shapes[i].keypoints, out_dir / (base + ".keypoints"));
    }
    std::ofstream meta(out_dir / "category.txt");
    if (!meta)
        throw std::runtime_error("generate_synthetic_category: cannot write " +
                                 (out_dir / "category.txt").string());
    meta << "family = " << family_name(cfg.family) << "\n"
         << "instances = " << cfg.instances << "\n"
         << "points_per_shape = " << cfg.points_per_shape << "\n"
         << "seed = " << cfg.seed << "\n";
    return out_dir;
}

CategoryData load_category(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw std::runtime_error("load_category: not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("shape_", 0) == 0 && entry.path().extension() == ".xyz")
            files.push_back(entry.path());
    }
    if (files.empty())
        throw std::runtime_error("load_category: no shape_*.xyz files under " + dir.string());
    std::sort(files.begin(), files.end());

    CategoryData data;
    bool any_kp = false;
    for (const auto& f : files) {
        data.clouds.push_back(load_cloud(f));
        fs::path kp = f;
        kp.replace_extension(".keypoints");
        if (fs::exists(kp)) {
            data.keypoints.push_back(load_keypoints(kp));
            any_kp = true;
        } else {
            data.keypoints.emplace_back();
        }
    }
    if (!any_kp) data.keypoints.clear();
    return data;
}

}  // namespace cyclecorr
