// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Weight-space merging recipes: uniform, greedy, learned (optionally by layer)
// soups and the interpolation curve between an initialization and a fine-tune.

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "soupkit/tensor.hpp"

namespace soupkit {

class LogitModel;
struct Split;

/// Outcome of the sequential greedy selection shared by greedy soups and greedy ensembles.
struct GreedySelection {
    /// Candidate visiting order (input indices).
    std::vector<std::size_t> order;
    /// Score of each candidate alone, by input index (filled when presorting).
    std::vector<double> individual_scores;
    /// Accepted candidates in acceptance order.
    std::vector<std::size_t> accepted;
    /// Score of the accepted set after visiting each candidate in `order`.
    std::vector<double> score_trace;
    double final_score = -std::numeric_limits<double>::infinity();
};

/// Visits candidates (sorted by descending individual score when `presort`, ties by
/// input index) and keeps candidate i iff score(S + {i}) >= score(S); score({}) = -inf.
GreedySelection greedy_select(std::size_t k,
                              const std::function<double(std::span<const std::size_t>)>& score_of_set,
                              bool presort);

struct SoupResult {
    Checkpoint merged;
    std::vector<std::size_t> ingredient_indices;
    /// One row per mixing group; each row has one coefficient per input model and sums to 1.
    std::vector<std::vector<double>> mixing_coefficients;
    std::vector<std::string> group_names{"all"};
    double temperature = 1.0;
    /// Recipe-specific trace: greedy val accuracy per visit, or learned-soup loss per step
    /// (entry 0 is the loss at initialization).
    std::vector<double> trace;
    std::string recipe;

    [[nodiscard]] nlohmann::json report() const;
};

SoupResult uniform_soup(std::span<const Checkpoint> models);

using CheckpointScore = std::function<double(const Checkpoint&)>;

SoupResult greedy_soup(std::span<const Checkpoint> models, const CheckpointScore& val_accuracy, bool presort = true);

struct LearnedSoupOptions {
    bool by_layer = false;
    int epochs = 3;
    double learning_rate = 0.1;
    /// 0 means full batch over the validation split.
    std::size_t batch_size = 0;
    double weight_decay = 0.0;
};

/// Learns softmax-parameterized mixing coefficients and beta = exp(b) with AdamW on
/// the held-out split, starting from uniform coefficients and beta = 1.
SoupResult learned_soup(const LogitModel& model, std::span<const Checkpoint> models, const Split& val,
                        const LearnedSoupOptions& options = {});

/// Group key for the by-layer variant: the name up to the first '.'.
std::string layer_group(const std::string& tensor_name);

/// (alpha, combine([1 - alpha, alpha], [theta0, theta1])) for each alpha in [0, 1].
std::vector<std::pair<double, Checkpoint>> wise_ft_curve(const Checkpoint& theta0, const Checkpoint& theta1,
                                                         std::span<const double> alphas);

}  // namespace soupkit
