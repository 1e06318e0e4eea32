#pragma once

#include <filesystem>
#include <optional>

#include "cyclecorr/correspondence.hpp"
#include "cyclecorr/encoder.hpp"

namespace cyclecorr {

struct TrainConfig {
    std::size_t steps = 5000;
    std::size_t batch = 4;
    double lr_bias = 1e-4;
    double lr_rest = 5e-4;
    double beta1 = 0.900;
    double beta2 = 0.999;
    bool amsgrad = true;
    LossWeights weights;
    SinkhornConfig sinkhorn;
    double tau = kCorrespondenceTau;
    AugmentConfig aug;
    std::size_t points_per_shape = 256;
    std::uint64_t rng_seed = 0;

    double held_out_fraction = 0.1;
    std::size_t eval_every = 500;
    std::size_t eval_pairs = 10;
    /// must be a multiple of eval_every so a resumed run can rebuild the
    /// carried CC columns exactly
    std::size_t checkpoint_every = 1000;
    double cc_radius = 0.05;
    /// where diverging steps dump their triplet for inspection
    std::filesystem::path diagnostic_dir = ".";

    void validate() const;
};

/// One training example: two augmentations of the same source (shared point
/// order, so index i in p and p_prime is the same surface point) plus an
/// augmented target.
struct Triplet {
    PointCloud p;
    PointCloud p_prime;
    PointCloud q;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> held_out;
};

/// Seeded 90/10-style split by shape index.
DatasetSplit split_dataset(std::size_t count, double held_fraction, std::uint64_t seed);

/// Draws source and target uniformly from `pool`, farthest-point-downsamples
/// to points_per_shape, and applies three independent random transforms.
Triplet sample_triplet(const std::vector<PointCloud>& shapes,
                       const std::vector<std::size_t>& pool, std::mt19937_64& rng,
                       const AugmentConfig& aug, std::size_t points_per_shape);

std::vector<Triplet> make_eval_pairs(const std::vector<PointCloud>& shapes,
                                     const std::vector<std::size_t>& pool, std::size_t count,
                                     std::mt19937_64& rng, const AugmentConfig& aug,
                                     std::size_t points_per_shape);

/// Adam-family state, one slot per parameter tensor.
struct OptimizerState {
    struct Slot {
        std::vector<double> m;
        std::vector<double> v;
        std::vector<double> vmax;
    };
    std::vector<Slot> slots;
    std::uint64_t step = 0;
};

OptimizerState init_optimizer(const EncoderParams& params);

/// One AMSGrad (or plain Adam when cfg.amsgrad is off) update from the
/// accumulated gradients, with the bias-group learning rate for bias-flagged
/// entries. No weight decay.
void optimizer_update(EncoderParams& params, OptimizerState& opt, const TrainConfig& cfg);

struct LossReport {
    double total = 0.0;
    double cycle = 0.0;
    double rigid = 0.0;
    double sinkhorn = 0.0;
};

/// Forward + backward + optimizer update over a batch of triplets; gradients
/// averaged across the batch. Returns batch-mean loss parts. A non-finite
/// loss dumps the offending triplet to cfg.diagnostic_dir and throws.
LossReport train_step(EncoderParams& params, OptimizerState& opt, const EncoderConfig& enc,
                      const std::vector<Triplet>& batch, const TrainConfig& cfg);

/// Single-triplet convenience wrapper.
LossReport train_step(EncoderParams& params, OptimizerState& opt, const EncoderConfig& enc,
                      const Triplet& triplet, const TrainConfig& cfg);

struct CCResult {
    double strict = 0.0;
    double relaxed = 0.0;
};

/// Cycle-consistency of one pair given precomputed per-point features whose
/// row order matches the clouds (row i of f_p and f_p_prime must describe the
/// same surface point). strict: the hard cycle map returns index i to itself;
/// relaxed: it lands within `radius` of point i.
CCResult cc_pair_from_features(const Tensor& f_p, const Tensor& f_p_prime, const Tensor& f_q,
                               const PointCloud& p, double tau, double radius);

/// Fraction (in percent) of points whose full-cycle hard correspondence
/// returns to their own index (strict) or within `radius` of their origin
/// (relaxed), averaged over the eval triplets.
CCResult cc_percent(EncoderParams& params, const EncoderConfig& enc,
                    const std::vector<Triplet>& pairs, double tau, double radius = 0.05);

/// N minus the number of distinct targets: how many sources share a target.
std::size_t collision_count(const std::vector<std::size_t>& mapping);

/// Mean many-to-one collision count of the two-hop correspondence over the
/// eval triplets.
double mean_collisions(EncoderParams& params, const EncoderConfig& enc,
                       const std::vector<Triplet>& pairs, double tau);

struct Checkpoint {
    EncoderConfig encoder;
    EncoderParams params;
    OptimizerState opt;
    std::uint64_t step = 0;
    std::string rng_state;
};

std::uint64_t encoder_config_hash(const EncoderConfig& cfg);

/// Versioned little-endian binary, magic "CYCC". Saving the result of a load
/// reproduces the file byte for byte.
void checkpoint_save(const Checkpoint& ck, const std::filesystem::path& path);

/// Throws on bad magic/version or truncation. A checkpoint whose stored
/// config hash disagrees with its own config is rejected as corrupt.
Checkpoint checkpoint_load(const std::filesystem::path& path);

/// Compares the checkpoint's encoder config hash against an expected config;
/// throws unless allow_mismatch, which downgrades to a stderr warning.
void require_matching_config(const Checkpoint& ck, const EncoderConfig& expected,
                             bool allow_mismatch = false);

struct TrainResult {
    std::filesystem::path checkpoint_path;
    std::filesystem::path log_path;
    LossReport final_loss;
    CCResult final_cc;
    Checkpoint checkpoint;
};

/// Full loop: split, per-step batches, JSON-lines metrics (one record per
/// step: step, L, L_C, L_R, L_S, cc_strict, cc_relaxed), periodic held-out
/// CC evaluation, periodic + final checkpoints under out_dir. Pass a
/// checkpoint path in `resume` to continue an interrupted run; the metrics
/// log is then appended to.
TrainResult train(const std::vector<PointCloud>& shapes, const EncoderConfig& enc,
                  const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume = std::nullopt);

}  // namespace cyclecorr
