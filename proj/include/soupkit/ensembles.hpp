// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Logit ensembles, greedy ensembling, temperature scaling and equal-mass ECE.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "soupkit/matrix.hpp"
#include "soupkit/tensor.hpp"

namespace soupkit {

class LogitModel;
struct Split;
struct GreedySelection;

inline constexpr int kDefaultEceBins = 15;

/// Weighted mean of member logits; empty weights means uniform.
LogitBatch logit_ensemble(std::span<const LogitBatch> member_logits, std::span<const double> weights = {});
LogitBatch logit_ensemble(const LogitModel& model, std::span<const Checkpoint> models, const FeatureMatrix& x,
                          std::span<const double> weights = {});

/// Greedy selection (as for greedy soups) over uniform logit ensembles. `ensemble_accuracy` scores a member set.
GreedySelection greedy_ensemble(std::size_t k,
                                const std::function<double(std::span<const std::size_t>)>& ensemble_accuracy,
                                bool presort = true);
/// Convenience: scores member sets by accuracy of the uniform logit ensemble on `val`.
GreedySelection greedy_ensemble(const LogitModel& model, std::span<const Checkpoint> models, const Split& val,
                                bool presort = true);

struct TemperatureFit {
    double beta = 1.0;
    double nll = 0.0;
    /// NLL did not depend on beta (e.g. all logits tied); beta forced to 1.
    bool flat = false;
};

/// Golden-section search for the NLL-minimizing beta over log(beta) in [ln 0.05, ln 20],
/// stopping when the bracket on log(beta) is narrower than 1e-4.
TemperatureFit fit_temperature(const LogitBatch& logits, std::span<const int> labels);

struct CalibrationBin {
    std::size_t count = 0;
    double mass = 0.0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;
};

/// Stable sort by confidence (ties by example index), then num_bins contiguous groups
/// whose sizes differ by at most one; larger groups come first.
std::vector<CalibrationBin> equal_mass_bins(std::span<const double> confidences, std::span<const int> correct,
                                            int num_bins);
/// sum_b (n_b / N) |acc_b - conf_b|
double ece_equal_mass(std::span<const double> confidences, std::span<const int> correct, int num_bins = kDefaultEceBins);

/// Max-softmax confidence and correctness of beta * logits.
void confidences_and_correctness(const LogitBatch& logits, std::span<const int> labels, double beta,
                                 std::vector<double>& confidences, std::vector<int>& correct);

struct CalibrationReport {
    double beta = 1.0;
    bool flat = false;
    double fit_nll_before = 0.0;
    double fit_nll_after = 0.0;
    double nll_before = 0.0;
    double nll_after = 0.0;
    double ece_before = 0.0;
    double ece_after = 0.0;
    double error_before = 0.0;
    double error_after = 0.0;
    /// Equal-mass bins of the calibrated predictions on the evaluation split.
    std::vector<CalibrationBin> bins;

    /// One row per bin: `bin,count,mass,mean_confidence,accuracy`.
    [[nodiscard]] std::string bins_csv() const;
    /// `beta=... nll_before=... nll_after=... ece_before=... ece_after=...`
    [[nodiscard]] std::string summary_line() const;
};

/// Fits beta on (fit_logits, fit_labels) and reports on (eval_logits, eval_labels).
CalibrationReport calibrate(const LogitBatch& fit_logits, std::span<const int> fit_labels,
                            const LogitBatch& eval_logits, std::span<const int> eval_labels,
                            int num_bins = kDefaultEceBins);

}  // namespace soupkit
