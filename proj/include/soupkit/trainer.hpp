// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-training, fine-tuning and hyperparameter sweeps. A run is a pure function
// of (initial weights, HyperConfig, dataset): data order comes from
// Rng(derive_seed({seed, epoch, 1})) per epoch, augmentation draws (input noise,
// mixup) from one Rng(derive_seed({seed, 2})) stream consumed batch by batch.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "soupkit/datagen.hpp"
#include "soupkit/matrix.hpp"
#include "soupkit/rng.hpp"
#include "soupkit/tensor.hpp"
#include "soupkit/tinynet.hpp"

namespace soupkit {

enum class OptimizerKind { Sgd, AdamW };
enum class ScheduleKind { Constant, Cosine };

std::string_view to_string(OptimizerKind kind);
std::string_view to_string(ScheduleKind kind);

struct HyperConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    int epochs = 4;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double label_smoothing = 0.0;
    double mixup_alpha = 0.0;
    double input_noise_std = 0.0;
    OptimizerKind optimizer = OptimizerKind::AdamW;
    ScheduleKind schedule = ScheduleKind::Cosine;
    std::optional<double> ema_decay;
    std::optional<double> sam_rho;
    /// Heavy-ball momentum, SGD only.
    double momentum = 0.9;

    void validate() const;
};

/// Pre-training defaults: AdamW, lr 3e-3, 20 epochs, batch 64, cosine schedule.
HyperConfig default_pretrain_config();

nlohmann::json to_json(const HyperConfig& h);
HyperConfig hyper_config_from_json(const nlohmann::json& j);
/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_digest(const HyperConfig& h);

/// lr * 0.5 * (1 + cos(pi * step / total_steps)) for cosine; lr for constant.
double scheduled_lr(const HyperConfig& h, long step, long total_steps);

/// lambda ~ Beta(alpha, alpha) (lambda = 1 when alpha = 0);
/// x' = lambda x + (1 - lambda) x[perm], same for the soft targets.
struct MixupResult {
    FeatureMatrix x;
    Matrix<double> targets;
    double lambda = 1.0;
};
MixupResult mixup_batch(const FeatureMatrix& x, const Matrix<double>& targets, double alpha, Rng& rng);

struct TrainResult {
    Checkpoint model;
    std::optional<Checkpoint> ema;
    double initial_train_loss = 0.0;
    double final_train_loss = 0.0;
    long steps = 0;
};

/// Runs `h` from `init` on `data`. Throws Divergence naming the step on a non-finite loss.
TrainResult train(const LogitModel& model, const Checkpoint& init, const HyperConfig& h, const Split& data);

/// Initializes from derive_seed({cfg.seed, 0}) and trains on the train split.
TrainResult pretrain(const Mlp& model, const Dataset& data, const HyperConfig& cfg);

struct FinetuneResult {
    Checkpoint model;
    std::optional<Checkpoint> ema;
    double val_accuracy = 0.0;
    std::optional<double> ema_val_accuracy;
    double final_train_loss = 0.0;
};

/// Meta of the returned checkpoints records the config, its digest, seed and val accuracy.
FinetuneResult finetune(const LogitModel& model, const Checkpoint& theta0, const HyperConfig& h, const Dataset& data);

struct SweepEntry {
    std::size_t index = 0;
    HyperConfig config;
    std::string path;
    std::optional<std::string> ema_path;
    double val_accuracy = 0.0;
    std::optional<double> ema_val_accuracy;
    bool ok = true;
    std::string error;
};

struct SweepManifest {
    ArchSpec arch;
    std::vector<SweepEntry> entries;
    /// Directory the relative paths resolve against.
    std::filesystem::path root;

    [[nodiscard]] std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
    [[nodiscard]] std::vector<const SweepEntry*> successful() const;
};

nlohmann::json to_json(const SweepManifest& m);
void save_manifest(const SweepManifest& m, const std::filesystem::path& path);
SweepManifest load_manifest(const std::filesystem::path& path);

/// One checkpoint per config in `out_dir` (model_NNN.soupckpt, model_NNN_ema.soupckpt) plus
/// manifest.json. Failed configs are recorded with ok = false. `threads` <= 0 reads
/// SOUPKIT_THREADS (default 1).
SweepManifest run_sweep(const Mlp& model, const Checkpoint& theta0, const std::vector<HyperConfig>& configs,
                        const Dataset& data, const std::filesystem::path& out_dir, int threads = 0);

/// Log-uniform learning rate 10^-u, weight decay 10^-v, coin-flipped smoothing/mixup/noise.
struct RandomSearchSpace {
    double lr_exp_min = 1.5, lr_exp_max = 4.0;
    double wd_exp_min = 0.2, wd_exp_max = 4.0;
    double smoothing_zero_prob = 0.5, smoothing_max = 0.25;
    int epochs_min = 4, epochs_max = 16;
    double mixup_zero_prob = 0.5, mixup_max = 0.9;
    double noise_zero_prob = 1.0 / 3.0, noise_max = 0.5;
    HyperConfig base;
};

nlohmann::json to_json(const RandomSearchSpace& s);
RandomSearchSpace random_search_from_json(const nlohmann::json& j);

/// Draw order per config: lr, wd, smoothing coin, smoothing value, epochs, mixup coin, mixup value,
/// noise coin, noise value, seed. All values are always drawn.
std::vector<HyperConfig> sample_random_search(const RandomSearchSpace& space, std::size_t count,
                                              std::uint64_t master_seed);

/// Cartesian product of value lists; empty lists keep the base value. Iteration order is
/// lr, wd, epochs, smoothing, mixup, noise, seed (last varies fastest).
struct GridSpec {
    HyperConfig base;
    std::vector<double> learning_rate, weight_decay, label_smoothing, mixup_alpha, input_noise_std;
    std::vector<int> epochs;
    std::vector<std::uint64_t> seed;
};

nlohmann::json to_json(const GridSpec& g);
GridSpec grid_spec_from_json(const nlohmann::json& j);
std::vector<HyperConfig> expand_grid(const GridSpec& grid);

int default_thread_count();

}  // namespace soupkit
