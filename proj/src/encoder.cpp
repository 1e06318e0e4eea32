#include "cyclecorr/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace cyclecorr {

void EncoderConfig::validate() const {
    if (out_dim < 2) throw std::invalid_argument("EncoderConfig: out_dim must be >= 2");
    if (neighborhood_k < 1) throw std::invalid_argument("EncoderConfig: neighborhood_k must be >= 1");
    if (lift_width < 1) throw std::invalid_argument("EncoderConfig: lift_width must be >= 1");
    if (attention_heads < 1) throw std::invalid_argument("EncoderConfig: attention_heads must be >= 1");
    if (stage_widths.empty()) throw std::invalid_argument("EncoderConfig: at least one stage required");
    for (const auto& stage : stage_widths) {
        if (stage.empty()) throw std::invalid_argument("EncoderConfig: empty stage width list");
        for (std::size_t w : stage)
            if (w < 1) throw std::invalid_argument("EncoderConfig: zero layer width");
        if (stage.back() % attention_heads != 0)
            throw std::invalid_argument("EncoderConfig: heads must divide attention width");
    }
}

Tensor& EncoderParams::at(std::string_view name) {
    for (auto& e : entries)
        if (e.name == name) return e.value;
    throw std::invalid_argument("EncoderParams: no entry named " + std::string(name));
}

const Tensor& EncoderParams::at(std::string_view name) const {
    for (const auto& e : entries)
        if (e.name == name) return e.value;
    throw std::invalid_argument("EncoderParams: no entry named " + std::string(name));
}

std::vector<Tensor*> EncoderParams::tensors() {
    std::vector<Tensor*> out;
    out.reserve(entries.size());
    for (auto& e : entries) out.push_back(&e.value);
    return out;
}

std::size_t EncoderParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
}

void EncoderParams::set_requires_grad(bool on) {
    for (auto& e : entries) e.value.requires_grad = on;
}

void EncoderParams::zero_grads() {
    for (auto& e : entries) e.value.zero_grad();
}

bool EncoderParams::all_finite() const {
    for (const auto& e : entries)
        if (!e.value.all_finite()) return false;
    return true;
}

namespace {

void add_affine(EncoderParams& p, const std::string& prefix, std::size_t in, std::size_t out,
                std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor w({in, out});
    for (auto& x : w.values()) x = u(rng);
    p.entries.push_back({prefix + ".w", std::move(w), false});
    p.entries.push_back({prefix + ".b", Tensor::zeros({out}), true});
}

void add_attention(EncoderParams& p, const std::string& prefix, std::size_t d,
                   std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(d + d));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (const char* mat : {"wq", "wk", "wv", "wo"}) {
        Tensor w({d, d});
        for (auto& x : w.values()) x = u(rng);
        p.entries.push_back({prefix + "." + mat, std::move(w), false});
    }
    p.entries.push_back({prefix + ".ln_gain", Tensor::full({d}, 1.0), false});
    p.entries.push_back({prefix + ".ln_bias", Tensor::zeros({d}), true});
}

Graph::NodeId affine(Graph& g, Graph::NodeId x, Tensor& w, Tensor& b) {
    return g.add_rowvec(g.matmul(x, g.input(w)), g.input(b));
}

}  // namespace

EncoderParams init_params(const EncoderConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    EncoderParams p;
    add_affine(p, "lift", cfg.in_dim(), cfg.lift_width, rng);
    std::size_t channels = cfg.lift_width;
    for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
        const std::string stage = "stage" + std::to_string(s + 1);
        std::size_t in = channels + 3;  // relative offsets ride along
        for (std::size_t l = 0; l < cfg.stage_widths[s].size(); ++l) {
            const std::size_t out = cfg.stage_widths[s][l];
            add_affine(p, stage + ".mlp" + std::to_string(l), in, out, rng);
            in = out;
        }
        channels = cfg.stage_widths[s].back();
        add_attention(p, stage + ".attn", channels, rng);
    }
    add_affine(p, "head", channels, cfg.out_dim, rng);
    return p;
}

EncoderParams init_params(const EncoderConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    return init_params(cfg, rng);
}

Graph::NodeId attention_block(Graph& g, Graph::NodeId x, Tensor& wq, Tensor& wk, Tensor& wv,
                              Tensor& wo, Tensor& ln_gain, Tensor& ln_bias, std::size_t heads) {
    const std::size_t d = g.value(x).dim(1);
    if (heads == 0 || d % heads != 0)
        throw std::invalid_argument("attention_block: heads must divide width");
    const std::size_t dh = d / heads;
    const double tau = std::sqrt(static_cast<double>(dh));
    auto q = g.matmul(x, g.input(wq));
    auto k = g.matmul(x, g.input(wk));
    auto v = g.matmul(x, g.input(wv));
    std::vector<Graph::NodeId> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        auto qh = g.slice_cols(q, h * dh, dh);
        auto kh = g.slice_cols(k, h * dh, dh);
        auto vh = g.slice_cols(v, h * dh, dh);
        auto scores = g.softmax(g.matmul(qh, g.transpose(kh)), tau, Axis::Rows);
        outs.push_back(g.matmul(scores, vh));
    }
    auto proj = g.matmul(g.concat_cols(outs), g.input(wo));
    return g.layer_norm(g.add(x, proj), g.input(ln_gain), g.input(ln_bias));
}

Graph::NodeId encode(Graph& g, EncoderParams& p, const PointCloud& cloud,
                     const EncoderConfig& cfg) {
    cfg.validate();
    cloud.validate();
    const std::size_t n = cloud.size();
    const std::size_t k = cfg.neighborhood_k;
    if (n < k) throw std::invalid_argument("encode: cloud smaller than neighborhood_k");
    if (cfg.use_normals && !cloud.has_normals())
        throw std::invalid_argument("encode: config expects normals the cloud lacks");

    Tensor lift_in({n, cfg.in_dim()});
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) lift_in(i, a) = cloud.points[i][a];
        if (cfg.use_normals)
            for (int a = 0; a < 3; ++a) lift_in(i, 3 + a) = cloud.normals[i][a];
    }
    auto x = g.relu(affine(g, g.constant(std::move(lift_in)), p.at("lift.w"), p.at("lift.b")));

    const auto table = knn_indices(cloud, k);
    Tensor rel({n, k, 3});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const Eigen::Vector3d off = cloud.points[table[i * k + j]] - cloud.points[i];
            for (int a = 0; a < 3; ++a) rel(i, j, a) = off[a];
        }
    auto relc = g.constant(std::move(rel));

    for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
        const std::string stage = "stage" + std::to_string(s + 1);
        auto grouped = g.gather_groups(x, table, n, k);
        const Graph::NodeId parts[] = {relc, grouped};
        auto cat = g.concat_cols(parts);
        std::size_t width = g.value(cat).dim(2);
        auto flat = g.reshape(cat, {n * k, width});
        for (std::size_t l = 0; l < cfg.stage_widths[s].size(); ++l) {
            const std::string mlp = stage + ".mlp" + std::to_string(l);
            flat = g.relu(affine(g, flat, p.at(mlp + ".w"), p.at(mlp + ".b")));
            width = cfg.stage_widths[s][l];
        }
        x = g.max_pool_groups(g.reshape(flat, {n, k, width}));
        x = attention_block(g, x, p.at(stage + ".attn.wq"), p.at(stage + ".attn.wk"),
                            p.at(stage + ".attn.wv"), p.at(stage + ".attn.wo"),
                            p.at(stage + ".attn.ln_gain"), p.at(stage + ".attn.ln_bias"),
                            cfg.attention_heads);
    }

    auto out = affine(g, x, p.at("head.w"), p.at("head.b"));
    if (cfg.normalize_output) out = g.l2_normalize_rows(out);
    return out;
}

Tensor encode_features(EncoderParams& params, const PointCloud& cloud, const EncoderConfig& cfg) {
    Graph g;
    return g.value(encode(g, params, cloud, cfg));
}

}  // namespace cyclecorr
