#include "cyclecorr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cyclecorr/io.hpp"
#include "json.hpp"

namespace cyclecorr {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (steps == 0) throw std::invalid_argument("train config: steps must be >= 1");
    if (batch == 0) throw std::invalid_argument("train config: batch must be >= 1");
    if (lr_bias < 0.0 || lr_rest < 0.0)
        throw std::invalid_argument("train config: learning rates must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train config: betas must lie in [0, 1)");
    if (!(tau > 0.0)) throw std::invalid_argument("train config: tau must be positive");
    if (points_per_shape == 0)
        throw std::invalid_argument("train config: points_per_shape must be >= 1");
    if (!(held_out_fraction >= 0.0 && held_out_fraction <= 0.5))
        throw std::invalid_argument("train config: held_out_fraction must lie in [0, 0.5]");
    if (eval_every == 0) throw std::invalid_argument("train config: eval_every must be >= 1");
    if (eval_pairs == 0) throw std::invalid_argument("train config: eval_pairs must be >= 1");
    if (checkpoint_every == 0 || checkpoint_every % eval_every != 0)
        throw std::invalid_argument(
            "train config: checkpoint_every must be a positive multiple of eval_every");
    if (!(cc_radius > 0.0)) throw std::invalid_argument("train config: cc_radius must be positive");
    weights.validate();
    sinkhorn.validate();
}

DatasetSplit split_dataset(std::size_t count, double held_fraction, std::uint64_t seed) {
    if (count == 0) throw std::invalid_argument("split_dataset: empty dataset");
    if (!(held_fraction >= 0.0 && held_fraction <= 0.5))
        throw std::invalid_argument("split_dataset: held fraction must lie in [0, 0.5]");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::size_t held = static_cast<std::size_t>(std::llround(held_fraction * double(count)));
    if (held_fraction > 0.0 && held == 0 && count > 1) held = 1;
    if (held >= count) held = count - 1;

    DatasetSplit split;
    split.held_out.assign(order.begin(), order.begin() + held);
    split.train.assign(order.begin() + held, order.end());
    std::sort(split.held_out.begin(), split.held_out.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

namespace {

PointCloud downsample(const PointCloud& cloud, std::size_t k, std::mt19937_64& rng) {
    if (cloud.size() <= k) return cloud;
    std::uniform_int_distribution<std::size_t> pick_seed(0, cloud.size() - 1);
    std::vector<std::size_t> idx = farthest_point_sample(cloud, k, pick_seed(rng));
    PointCloud out;
    out.points.reserve(k);
    for (std::size_t i : idx) out.points.push_back(cloud.points[i]);
    if (cloud.has_normals()) {
        out.normals.reserve(k);
        for (std::size_t i : idx) out.normals.push_back(cloud.normals[i]);
    }
    if (cloud.has_ids()) {
        out.ids.reserve(k);
        for (std::size_t i : idx) out.ids.push_back(cloud.ids[i]);
    }
    return out;
}

}  // namespace

Triplet sample_triplet(const std::vector<PointCloud>& shapes,
                       const std::vector<std::size_t>& pool, std::mt19937_64& rng,
                       const AugmentConfig& aug, std::size_t points_per_shape) {
    if (pool.empty()) throw std::invalid_argument("sample_triplet: empty shape pool");
    for (std::size_t i : pool)
        if (i >= shapes.size()) throw std::invalid_argument("sample_triplet: pool index out of range");

    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const PointCloud& src = shapes[pool[pick(rng)]];
    const PointCloud& tgt = shapes[pool[pick(rng)]];

    PointCloud src_d = downsample(src, points_per_shape, rng);
    PointCloud tgt_d = downsample(tgt, points_per_shape, rng);

    RigidTransform t1 = sample_rigid_transform(rng, aug);
    RigidTransform t2 = sample_rigid_transform(rng, aug);
    RigidTransform t3 = sample_rigid_transform(rng, aug);

    Triplet out;
    out.p = apply_transform(src_d, t1);
    out.p_prime = apply_transform(src_d, t2);
    out.q = apply_transform(tgt_d, t3);
    return out;
}

std::vector<Triplet> make_eval_pairs(const std::vector<PointCloud>& shapes,
                                     const std::vector<std::size_t>& pool, std::size_t count,
                                     std::mt19937_64& rng, const AugmentConfig& aug,
                                     std::size_t points_per_shape) {
    std::vector<Triplet> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(sample_triplet(shapes, pool, rng, aug, points_per_shape));
    return out;
}

OptimizerState init_optimizer(const EncoderParams& params) {
    OptimizerState opt;
    opt.slots.resize(params.entries.size());
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        std::size_t n = params.entries[i].value.size();
        opt.slots[i].m.assign(n, 0.0);
        opt.slots[i].v.assign(n, 0.0);
        opt.slots[i].vmax.assign(n, 0.0);
    }
    return opt;
}

void optimizer_update(EncoderParams& params, OptimizerState& opt, const TrainConfig& cfg) {
    if (opt.slots.size() != params.entries.size())
        throw std::invalid_argument("optimizer_update: state does not match parameter list");
    constexpr double kEps = 1e-8;
    opt.step += 1;
    const double t = double(opt.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        EncoderParams::Entry& e = params.entries[i];
        OptimizerState::Slot& s = opt.slots[i];
        if (s.m.size() != e.value.size())
            throw std::invalid_argument("optimizer_update: slot size mismatch for " + e.name);
        const double lr = e.is_bias ? cfg.lr_bias : cfg.lr_rest;
        const std::vector<double>& g = e.value.ensure_grad();
        double* theta = e.value.data();
        for (std::size_t j = 0; j < s.m.size(); ++j) {
            s.m[j] = cfg.beta1 * s.m[j] + (1.0 - cfg.beta1) * g[j];
            s.v[j] = cfg.beta2 * s.v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = s.m[j] / bc1;
            double vhat;
            if (cfg.amsgrad) {
                s.vmax[j] = std::max(s.vmax[j], s.v[j]);
                vhat = s.vmax[j] / bc2;
            } else {
                vhat = s.v[j] / bc2;
            }
            theta[j] -= lr * mhat / (std::sqrt(vhat) + kEps);
        }
    }
}

namespace {

[[noreturn]] void abort_with_dump(const Triplet& t, const TrainConfig& cfg, std::uint64_t step,
                                  const std::string& reason) {
    fs::create_directories(cfg.diagnostic_dir);
    const std::string stem = "diverged_step" + std::to_string(step);
    fs::path pa = cfg.diagnostic_dir / (stem + "_p.xyz");
    fs::path pb = cfg.diagnostic_dir / (stem + "_p_prime.xyz");
    fs::path pc = cfg.diagnostic_dir / (stem + "_q.xyz");
    save_cloud(t.p, pa);
    save_cloud(t.p_prime, pb);
    save_cloud(t.q, pc);
    std::ostringstream msg;
    msg << "train_step: " << reason << " at step " << step << "; offending triplet dumped to "
        << pa.string() << ", " << pb.string() << ", " << pc.string();
    throw std::runtime_error(msg.str());
}

}  // namespace

LossReport train_step(EncoderParams& params, OptimizerState& opt, const EncoderConfig& enc,
                      const std::vector<Triplet>& batch, const TrainConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    params.set_requires_grad(true);
    params.zero_grads();

    LossReport rep;
    const double inv = 1.0 / double(batch.size());
    for (const Triplet& t : batch) {
        // numeric-degeneracy throws from the forward pass (non-finite
        // features, collapsed softmax rows) count as divergence too and get
        // the same diagnostic dump as a non-finite total
        try {
            Graph g;
            Graph::NodeId fp = encode(g, params, t.p, enc);
            Graph::NodeId fp2 = encode(g, params, t.p_prime, enc);
            Graph::NodeId fq = encode(g, params, t.q, enc);

            Graph::NodeId c1 = soft_correspondence(g, fp, fq, cfg.tau);
            Graph::NodeId c2 = soft_correspondence(g, fq, fp2, cfg.tau);
            Graph::NodeId c3 = soft_correspondence(g, fp2, fp, cfg.tau);
            Graph::NodeId c12 = compose_cycle(g, c1, c2);

            Graph::NodeId d = g.constant(pairwise_distance_matrix(t.p));
            Graph::NodeId lc = distance_weighted_mass(g, d, c12);
            Graph::NodeId lr = distance_weighted_mass(g, d, c3);
            Graph::NodeId ls = sinkhorn_loss(g, c12, cfg.sinkhorn);
            Graph::NodeId total = total_loss(g, lc, lr, ls, cfg.weights);

            const double tv = g.value(total).item();
            if (!std::isfinite(tv))
                throw std::domain_error("non-finite loss (" + std::to_string(tv) + ")");
            rep.total += tv * inv;
            rep.cycle += g.value(lc).item() * inv;
            rep.rigid += g.value(lr).item() * inv;
            rep.sinkhorn += g.value(ls).item() * inv;

            g.backward(g.scale(total, inv));
        } catch (const std::invalid_argument& e) {
            abort_with_dump(t, cfg, opt.step + 1, e.what());
        } catch (const std::domain_error& e) {
            abort_with_dump(t, cfg, opt.step + 1, e.what());
        }
    }

    optimizer_update(params, opt, cfg);
    if (!params.all_finite()) {
        abort_with_dump(batch.front(), cfg, opt.step, "non-finite parameters after update");
    }
    return rep;
}

LossReport train_step(EncoderParams& params, OptimizerState& opt, const EncoderConfig& enc,
                      const Triplet& triplet, const TrainConfig& cfg) {
    return train_step(params, opt, enc, std::vector<Triplet>{triplet}, cfg);
}

CCResult cc_pair_from_features(const Tensor& f_p, const Tensor& f_p_prime, const Tensor& f_q,
                               const PointCloud& p, double tau, double radius) {
    if (f_p.ndim() != 2 || f_p_prime.ndim() != 2 || f_q.ndim() != 2)
        throw std::invalid_argument("cc_pair_from_features: features must be 2-d");
    if (f_p.dim(0) != p.size() || f_p_prime.dim(0) != p.size())
        throw std::invalid_argument(
            "cc_pair_from_features: feature rows misaligned with cloud, no ground truth");
    if (!(radius > 0.0))
        throw std::invalid_argument("cc_pair_from_features: radius must be positive");

    Tensor c1 = soft_correspondence(f_p, f_q, tau);
    Tensor c2 = soft_correspondence(f_q, f_p_prime, tau);
    Tensor c3 = soft_correspondence(f_p_prime, f_p, tau);
    Graph g;
    Tensor cyc = g.value(compose_cycle(g, g.constant(c1), g.constant(c2), g.constant(c3)));
    std::vector<std::size_t> hard = hard_correspondence(cyc);

    const std::size_t n = p.size();
    std::size_t n_strict = 0, n_relaxed = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (hard[i] == i) ++n_strict;
        if ((p.points[hard[i]] - p.points[i]).norm() <= radius) ++n_relaxed;
    }
    CCResult out;
    out.strict = 100.0 * double(n_strict) / double(n);
    out.relaxed = 100.0 * double(n_relaxed) / double(n);
    return out;
}

CCResult cc_percent(EncoderParams& params, const EncoderConfig& enc,
                    const std::vector<Triplet>& pairs, double tau, double radius) {
    if (pairs.empty()) throw std::invalid_argument("cc_percent: no eval pairs");
    params.set_requires_grad(false);

    CCResult acc;
    for (const Triplet& t : pairs) {
        if (t.p.size() != t.p_prime.size())
            throw std::invalid_argument("cc_percent: p and p_prime sizes differ, no ground truth");
        if (t.p.has_ids() != t.p_prime.has_ids() ||
            (t.p.has_ids() && t.p.ids != t.p_prime.ids))
            throw std::invalid_argument("cc_percent: p and p_prime ids disagree, no ground truth");

        Tensor fp = encode_features(params, t.p, enc);
        Tensor fp2 = encode_features(params, t.p_prime, enc);
        Tensor fq = encode_features(params, t.q, enc);
        CCResult one = cc_pair_from_features(fp, fp2, fq, t.p, tau, radius);
        acc.strict += one.strict;
        acc.relaxed += one.relaxed;
    }
    acc.strict /= double(pairs.size());
    acc.relaxed /= double(pairs.size());
    return acc;
}

std::size_t collision_count(const std::vector<std::size_t>& mapping) {
    std::vector<std::size_t> seen(mapping);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    return mapping.size() - seen.size();
}

double mean_collisions(EncoderParams& params, const EncoderConfig& enc,
                       const std::vector<Triplet>& pairs, double tau) {
    if (pairs.empty()) throw std::invalid_argument("mean_collisions: no eval pairs");
    params.set_requires_grad(false);
    double acc = 0.0;
    for (const Triplet& t : pairs) {
        Tensor fp = encode_features(params, t.p, enc);
        Tensor fp2 = encode_features(params, t.p_prime, enc);
        Tensor fq = encode_features(params, t.q, enc);
        Tensor c1 = soft_correspondence(fp, fq, tau);
        Tensor c2 = soft_correspondence(fq, fp2, tau);
        Graph g;
        Tensor c12 = g.value(compose_cycle(g, g.constant(c1), g.constant(c2)));
        acc += double(collision_count(hard_correspondence(c12)));
    }
    return acc / double(pairs.size());
}

// ---------------------------------------------------------------------------
// checkpoint format: "CYCC", u32 version, u64 config hash, encoder config,
// u64 step, length-prefixed rng state string, named parameter tensors,
// optimizer slots. All integers little-endian, doubles as raw IEEE bits.

namespace {

void put_u8(std::ostream& o, std::uint8_t v) { o.put(char(v)); }

void put_u32(std::ostream& o, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) o.put(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& o, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) o.put(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::ostream& o, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64(o, bits);
}

void put_str(std::ostream& o, const std::string& s) {
    put_u64(o, s.size());
    o.write(s.data(), std::streamsize(s.size()));
}

[[noreturn]] void truncated() { throw std::runtime_error("checkpoint: truncated file"); }

std::uint8_t take_u8(std::istream& in) {
    int c = in.get();
    if (c == std::char_traits<char>::eof()) truncated();
    return std::uint8_t(c);
}

std::uint32_t take_u32(std::istream& in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(take_u8(in)) << (8 * i);
    return v;
}

std::uint64_t take_u64(std::istream& in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(take_u8(in)) << (8 * i);
    return v;
}

double take_f64(std::istream& in) {
    std::uint64_t bits = take_u64(in);
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
}

std::string take_str(std::istream& in) {
    std::uint64_t n = take_u64(in);
    if (n > (1ull << 32)) throw std::runtime_error("checkpoint: implausible string length");
    std::string s(n, '\0');
    in.read(s.data(), std::streamsize(n));
    if (std::size_t(in.gcount()) != n) truncated();
    return s;
}

constexpr char kMagic[4] = {'C', 'Y', 'C', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kMaxDims = 1ull << 24;

std::string canonical_config(const EncoderConfig& c) {
    std::ostringstream ss;
    ss << "normals=" << int(c.use_normals) << ";k=" << c.neighborhood_k
       << ";lift=" << c.lift_width << ";stages=";
    for (std::size_t s = 0; s < c.stage_widths.size(); ++s) {
        if (s) ss << '|';
        for (std::size_t w = 0; w < c.stage_widths[s].size(); ++w) {
            if (w) ss << ',';
            ss << c.stage_widths[s][w];
        }
    }
    ss << ";heads=" << c.attention_heads << ";out=" << c.out_dim
       << ";norm=" << int(c.normalize_output);
    return ss.str();
}

}  // namespace

std::uint64_t encoder_config_hash(const EncoderConfig& cfg) {
    // FNV-1a over the canonical architecture string (init seed excluded: it
    // does not affect compatibility of stored parameters)
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : canonical_config(cfg)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

void checkpoint_save(const Checkpoint& ck, const fs::path& path) {
    if (ck.opt.slots.size() != ck.params.entries.size())
        throw std::invalid_argument("checkpoint_save: optimizer does not match parameters");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint_save: cannot open " + path.string());

    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, encoder_config_hash(ck.encoder));

    const EncoderConfig& c = ck.encoder;
    put_u8(out, c.use_normals ? 1 : 0);
    put_u64(out, c.neighborhood_k);
    put_u64(out, c.lift_width);
    put_u64(out, c.stage_widths.size());
    for (const auto& widths : c.stage_widths) {
        put_u64(out, widths.size());
        for (std::size_t w : widths) put_u64(out, w);
    }
    put_u64(out, c.attention_heads);
    put_u64(out, c.out_dim);
    put_u8(out, c.normalize_output ? 1 : 0);
    put_u64(out, c.seed);

    put_u64(out, ck.step);
    put_str(out, ck.rng_state);

    put_u64(out, ck.params.entries.size());
    for (const auto& e : ck.params.entries) {
        put_str(out, e.name);
        put_u8(out, e.is_bias ? 1 : 0);
        put_u64(out, e.value.ndim());
        for (std::size_t d = 0; d < e.value.ndim(); ++d) put_u64(out, e.value.dim(d));
        for (std::size_t i = 0; i < e.value.size(); ++i) put_f64(out, e.value[i]);
    }

    put_u64(out, ck.opt.step);
    for (const auto& s : ck.opt.slots) {
        put_u64(out, s.m.size());
        for (double x : s.m) put_f64(out, x);
        put_u64(out, s.v.size());
        for (double x : s.v) put_f64(out, x);
        put_u64(out, s.vmax.size());
        for (double x : s.vmax) put_f64(out, x);
    }
    out.flush();
    if (!out) throw std::runtime_error("checkpoint_save: write failed for " + path.string());
}

Checkpoint checkpoint_load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint_load: cannot open " + path.string());

    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint_load: bad magic, not a checkpoint file");
    std::uint32_t version = take_u32(in);
    if (version != kVersion)
        throw std::runtime_error("checkpoint_load: unsupported version " + std::to_string(version));
    std::uint64_t stored_hash = take_u64(in);

    Checkpoint ck;
    EncoderConfig& c = ck.encoder;
    c.use_normals = take_u8(in) != 0;
    c.neighborhood_k = take_u64(in);
    c.lift_width = take_u64(in);
    std::uint64_t n_stages = take_u64(in);
    if (n_stages > kMaxDims) throw std::runtime_error("checkpoint_load: implausible stage count");
    c.stage_widths.clear();
    for (std::uint64_t s = 0; s < n_stages; ++s) {
        std::uint64_t len = take_u64(in);
        if (len > kMaxDims) throw std::runtime_error("checkpoint_load: implausible stage length");
        std::vector<std::size_t> widths(len);
        for (auto& w : widths) w = take_u64(in);
        c.stage_widths.push_back(std::move(widths));
    }
    c.attention_heads = take_u64(in);
    c.out_dim = take_u64(in);
    c.normalize_output = take_u8(in) != 0;
    c.seed = take_u64(in);

    if (encoder_config_hash(c) != stored_hash)
        throw std::runtime_error("checkpoint_load: stored config hash disagrees, corrupt file");

    ck.step = take_u64(in);
    ck.rng_state = take_str(in);

    std::uint64_t n_entries = take_u64(in);
    if (n_entries > kMaxDims) throw std::runtime_error("checkpoint_load: implausible entry count");
    ck.params.entries.reserve(n_entries);
    for (std::uint64_t i = 0; i < n_entries; ++i) {
        EncoderParams::Entry e;
        e.name = take_str(in);
        e.is_bias = take_u8(in) != 0;
        std::uint64_t ndim = take_u64(in);
        if (ndim > 8) throw std::runtime_error("checkpoint_load: implausible tensor rank");
        std::vector<std::size_t> shape(ndim);
        std::size_t total = 1;
        for (auto& d : shape) {
            d = take_u64(in);
            if (d == 0 || d > kMaxDims)
                throw std::runtime_error("checkpoint_load: implausible tensor dimension");
            total *= d;
        }
        std::vector<double> raw(total);
        for (auto& x : raw) x = take_f64(in);
        e.value = Tensor(shape, raw);
        ck.params.entries.push_back(std::move(e));
    }

    ck.opt.step = take_u64(in);
    ck.opt.slots.resize(n_entries);
    for (auto& s : ck.opt.slots) {
        auto read_vec = [&](std::vector<double>& dst) {
            std::uint64_t n = take_u64(in);
            if (n > (1ull << 28)) throw std::runtime_error("checkpoint_load: implausible slot size");
            dst.resize(n);
            for (auto& x : dst) x = take_f64(in);
        };
        read_vec(s.m);
        read_vec(s.v);
        read_vec(s.vmax);
    }

    if (in.peek() != std::char_traits<char>::eof())
        throw std::runtime_error("checkpoint_load: trailing bytes after checkpoint data");
    return ck;
}

void require_matching_config(const Checkpoint& ck, const EncoderConfig& expected,
                             bool allow_mismatch) {
    if (encoder_config_hash(ck.encoder) == encoder_config_hash(expected)) return;
    std::string msg = "checkpoint encoder config [" + canonical_config(ck.encoder) +
                      "] does not match expected [" + canonical_config(expected) + "]";
    if (!allow_mismatch) throw std::runtime_error(msg);
    std::cerr << "warning: " << msg << "; proceeding anyway\n";
}

TrainResult train(const std::vector<PointCloud>& shapes, const EncoderConfig& enc,
                  const TrainConfig& cfg, const fs::path& out_dir,
                  const std::optional<fs::path>& resume) {
    cfg.validate();
    enc.validate();
    if (shapes.size() < 2) throw std::invalid_argument("train: dataset needs at least 2 shapes");
    fs::create_directories(out_dir);

    DatasetSplit split = split_dataset(shapes.size(), cfg.held_out_fraction, cfg.rng_seed);
    if (split.train.size() < 2)
        throw std::invalid_argument("train: training pool needs at least 2 shapes");
    const std::vector<std::size_t>& eval_pool =
        split.held_out.empty() ? split.train : split.held_out;

    TrainConfig run_cfg = cfg;
    run_cfg.diagnostic_dir = out_dir;

    EncoderParams params;
    OptimizerState opt;
    std::mt19937_64 rng;
    std::uint64_t start = 0;
    if (resume) {
        Checkpoint ck = checkpoint_load(*resume);
        require_matching_config(ck, enc);
        if (ck.step > cfg.steps)
            throw std::invalid_argument("train: checkpoint is past the requested step count");
        params = std::move(ck.params);
        opt = std::move(ck.opt);
        start = ck.step;
        std::istringstream ss(ck.rng_state);
        ss >> rng;
        if (!ss) throw std::runtime_error("train: cannot restore rng state from checkpoint");
    } else {
        params = init_params(enc);
        opt = init_optimizer(params);
        rng.seed(cfg.rng_seed);
    }

    const fs::path log_path = out_dir / "metrics.jsonl";
    const fs::path ck_path = out_dir / "checkpoint.cycc";
    std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("train: cannot open log " + log_path.string());

    // held-out CC eval with its own per-step generator: never touches the
    // training stream, and a resumed run can regenerate the same measurement
    auto eval_at = [&](std::uint64_t step) {
        std::mt19937_64 erng(cfg.rng_seed ^ (0x9e3779b97f4a7c15ull * (step + 1)));
        std::vector<Triplet> pairs =
            make_eval_pairs(shapes, eval_pool, cfg.eval_pairs, erng, cfg.aug, cfg.points_per_shape);
        return cc_percent(params, enc, pairs, cfg.tau, cfg.cc_radius);
    };

    auto save_ck = [&](std::uint64_t step) {
        Checkpoint ck;
        ck.encoder = enc;
        ck.params = params;
        ck.opt = opt;
        ck.step = step;
        std::ostringstream ss;
        ss << rng;
        ck.rng_state = ss.str();
        checkpoint_save(ck, ck_path);
        return ck;
    };

    CCResult cc = eval_at(start);
    LossReport rep;
    for (std::uint64_t step = start + 1; step <= cfg.steps; ++step) {
        std::vector<Triplet> batch;
        batch.reserve(cfg.batch);
        for (std::size_t b = 0; b < cfg.batch; ++b)
            batch.push_back(sample_triplet(shapes, split.train, rng, cfg.aug, cfg.points_per_shape));

        rep = train_step(params, opt, enc, batch, run_cfg);

        if (step % cfg.eval_every == 0 || step == cfg.steps) cc = eval_at(step);

        nlohmann::json rec = {{"step", step},         {"L", rep.total},
                              {"L_C", rep.cycle},     {"L_R", rep.rigid},
                              {"L_S", rep.sinkhorn},  {"cc_strict", cc.strict},
                              {"cc_relaxed", cc.relaxed}};
        log << rec.dump() << '\n';

        if (step % cfg.checkpoint_every == 0) {
            log.flush();
            save_ck(step);
        }
    }
    log.flush();

    TrainResult out;
    out.checkpoint_path = ck_path;
    out.log_path = log_path;
    out.final_loss = rep;
    out.final_cc = cc;
    out.checkpoint = save_ck(cfg.steps);
    return out;
}

}  // namespace cyclecorr
