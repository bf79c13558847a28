// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration for the command-line pipeline. The JSON form is described
// by docs/config.schema.json; unknown keys are rejected and every section is
// validated before any work starts.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "soupkit/analysis.hpp"
#include "soupkit/datagen.hpp"
#include "soupkit/soups.hpp"
#include "soupkit/tinynet.hpp"
#include "soupkit/trainer.hpp"

namespace soupkit {

enum class SweepMode { Random, Grid };

struct SweepSpec {
    SweepMode mode = SweepMode::Random;
    std::size_t count = 16;
    std::uint64_t master_seed = 0;
    RandomSearchSpace random;
    GridSpec grid;
    /// 0 defers to SOUPKIT_THREADS.
    int threads = 0;
};

/// The (learning rate x augmentation x seed) construction used by the approximation study.
struct ApproxStudySpec {
    std::vector<double> learning_rates{1e-4, 3e-4, 1e-3};
    /// Augmentation "on" level; "off" uses no noise and no mixup.
    double aug_noise_std = 0.5;
    double aug_mixup_alpha = 0.8;
    int seeds = 2;
    HyperConfig base = [] {
        HyperConfig h;
        h.epochs = 8;
        return h;
    }();
    std::vector<std::string> splits{"test", "shift"};
};

struct AnalysisOptions {
    std::vector<double> alphas;  // empty means 0, 0.1, ..., 1
    std::size_t plane_points = 21;
    double plane_margin = 0.25;
    std::string plane_metric = "loss";
    double h_alpha = 0.05;
    BetaMode beta_mode = BetaMode::CalibrateSoup;
    std::string split = "test";
    int ece_bins = 15;
    LearnedSoupOptions learned;
    ApproxStudySpec approx;

    [[nodiscard]] std::vector<double> alpha_grid() const;
};

struct RunConfig {
    DatasetConfig dataset;
    ArchSpec arch;
    HyperConfig pretrain = default_pretrain_config();
    SweepSpec sweep;
    std::filesystem::path workdir = "soupkit_run";
    AnalysisOptions analysis;

    /// Throws Config on inconsistent sections.
    void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Strict: unknown keys anywhere are Config errors; missing keys keep defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies `dotted.path=value` to a JSON document; value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Fine-tunes every (learning rate, augmentation, seed) cell from theta0. Seed level s trains with
/// derive_seed({base.seed, s, 77}).
std::vector<GridCheckpoint> train_approx_grid(const LogitModel& model, const Checkpoint& theta0,
                                              const ApproxStudySpec& spec, const Dataset& data);

/// Sweep configs for the spec (random draws or grid expansion).
std::vector<HyperConfig> sweep_configs(const SweepSpec& spec);

}  // namespace soupkit
