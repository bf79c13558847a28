// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "soupkit/ensembles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "soupkit/datagen.hpp"
#include "soupkit/error.hpp"
#include "soupkit/soups.hpp"
#include "soupkit/tinynet.hpp"

namespace soupkit {

LogitBatch logit_ensemble(std::span<const LogitBatch> member_logits, std::span<const double> weights) {
    if (member_logits.empty()) throw Error(ErrorKind::EmptyInput, "ensemble of zero members");
    const std::size_t k = member_logits.size();
    std::vector<double> w(weights.begin(), weights.end());
    if (w.empty()) w.assign(k, 1.0 / static_cast<double>(k));
    if (w.size() != k) throw Error(ErrorKind::InvalidArgument, "ensemble weight count mismatch");
    double total = 0.0;
    for (double v : w) {
        if (!(v >= 0.0)) throw Error(ErrorKind::InvalidArgument, "ensemble weights must be nonnegative");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "ensemble weights must sum to 1");
    const auto& first = member_logits[0];
    for (const auto& m : member_logits) {
        if (m.rows() != first.rows() || m.cols() != first.cols()) {
            throw Error(ErrorKind::ShapeMismatch, "ensemble members produce differently shaped logits");
        }
    }
    LogitBatch out(first.rows(), first.cols());
    for (std::size_t e = 0; e < out.data().size(); ++e) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) acc += w[i] * member_logits[i].data()[e];
        out.data()[e] = acc;
    }
    return out;
}

LogitBatch logit_ensemble(const LogitModel& model, std::span<const Checkpoint> models, const FeatureMatrix& x,
                          std::span<const double> weights) {
    if (models.empty()) throw Error(ErrorKind::EmptyInput, "ensemble of zero members");
    std::vector<LogitBatch> logits;
    logits.reserve(models.size());
    for (const auto& m : models) {
        require_shape_compatible(models[0], m);
        logits.push_back(model.forward(m, x));
    }
    return logit_ensemble(logits, weights);
}

GreedySelection greedy_ensemble(std::size_t k,
                                const std::function<double(std::span<const std::size_t>)>& ensemble_accuracy,
                                bool presort) {
    return greedy_select(k, ensemble_accuracy, presort);
}

GreedySelection greedy_ensemble(const LogitModel& model, std::span<const Checkpoint> models, const Split& val,
                                bool presort) {
    std::vector<LogitBatch> logits;
    for (const auto& m : models) logits.push_back(model.forward(m, val.features));
    return greedy_ensemble(
        models.size(),
        [&](std::span<const std::size_t> members) {
            std::vector<LogitBatch> chosen;
            for (auto i : members) chosen.push_back(logits[i]);
            return accuracy(logit_ensemble(chosen), val.labels);
        },
        presort);
}

TemperatureFit fit_temperature(const LogitBatch& logits, std::span<const int> labels) {
    if (logits.rows() == 0) throw Error(ErrorKind::EmptyInput, "temperature fit on an empty batch");
    auto nll = [&](double log_beta) { return loss_ce(logits, labels, 0.0, std::exp(log_beta)); };

    double lo = std::log(0.05), hi = std::log(20.0);
    TemperatureFit fit;
    const double f_lo = nll(lo), f_hi = nll(hi), f_one = nll(0.0);
    if (std::abs(f_lo - f_one) <= 1e-12 && std::abs(f_hi - f_one) <= 1e-12) {
        fit.beta = 1.0;
        fit.nll = f_one;
        fit.flat = true;
        return fit;
    }
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = nll(x1), f2 = nll(x2);
    while (hi - lo > 1e-4) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = nll(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = nll(x2);
        }
    }
    const double t = 0.5 * (lo + hi);
    fit.beta = std::exp(t);
    fit.nll = nll(t);
    return fit;
}

std::vector<CalibrationBin> equal_mass_bins(std::span<const double> confidences, std::span<const int> correct,
                                            int num_bins) {
    if (confidences.size() != correct.size()) throw Error(ErrorKind::ShapeMismatch, "confidence/correctness mismatch");
    if (num_bins < 1) throw Error(ErrorKind::InvalidArgument, "need at least one bin");
    const std::size_t n = confidences.size();
    for (double c : confidences) {
        if (!(c >= 0.0 && c <= 1.0)) throw Error(ErrorKind::InvalidArgument, "confidence outside [0, 1]");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return confidences[a] < confidences[b]; });
    const auto B = static_cast<std::size_t>(num_bins);
    std::vector<CalibrationBin> bins(B);
    std::size_t pos = 0;
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t size = n / B + (b < n % B ? 1 : 0);
        auto& bin = bins[b];
        bin.count = size;
        double conf = 0.0, acc = 0.0;
        for (std::size_t j = 0; j < size; ++j, ++pos) {
            conf += confidences[order[pos]];
            acc += correct[order[pos]] ? 1.0 : 0.0;
        }
        if (size > 0) {
            bin.mean_confidence = conf / static_cast<double>(size);
            bin.accuracy = acc / static_cast<double>(size);
            bin.mass = static_cast<double>(size) / static_cast<double>(n);
        }
    }
    return bins;
}

double ece_equal_mass(std::span<const double> confidences, std::span<const int> correct, int num_bins) {
    if (confidences.empty()) throw Error(ErrorKind::EmptyInput, "ECE of an empty set");
    double ece = 0.0;
    for (const auto& b : equal_mass_bins(confidences, correct, num_bins)) {
        ece += b.mass * std::abs(b.accuracy - b.mean_confidence);
    }
    return ece;
}

void confidences_and_correctness(const LogitBatch& logits, std::span<const int> labels, double beta,
                                 std::vector<double>& confidences, std::vector<int>& correct) {
    confidences.resize(logits.rows());
    correct.resize(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto p = softmax(logits.row(i), beta);
        const int pred = argmax(logits.row(i));
        confidences[i] = p[static_cast<std::size_t>(pred)];
        correct[i] = pred == labels[i] ? 1 : 0;
    }
}

std::string CalibrationReport::bins_csv() const {
    std::string out = "bin,count,mass,mean_confidence,accuracy\n";
    char buf[160];
    for (std::size_t b = 0; b < bins.size(); ++b) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g,%.9g\n", b, bins[b].count, bins[b].mass,
                      bins[b].mean_confidence, bins[b].accuracy);
        out += buf;
    }
    return out;
}

std::string CalibrationReport::summary_line() const {
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "beta=%.9g flat=%d fit_nll_before=%.9g fit_nll_after=%.9g nll_before=%.9g nll_after=%.9g "
                  "ece_before=%.9g ece_after=%.9g error=%.9g",
                  beta, flat ? 1 : 0, fit_nll_before, fit_nll_after, nll_before, nll_after, ece_before, ece_after,
                  error_after);
    return buf;
}

CalibrationReport calibrate(const LogitBatch& fit_logits, std::span<const int> fit_labels,
                            const LogitBatch& eval_logits, std::span<const int> eval_labels, int num_bins) {
    CalibrationReport r;
    const auto fit = fit_temperature(fit_logits, fit_labels);
    r.beta = fit.beta;
    r.flat = fit.flat;
    r.fit_nll_before = loss_ce(fit_logits, fit_labels);
    r.fit_nll_after = loss_ce(fit_logits, fit_labels, 0.0, r.beta);
    r.nll_before = loss_ce(eval_logits, eval_labels);
    r.nll_after = loss_ce(eval_logits, eval_labels, 0.0, r.beta);
    std::vector<double> conf;
    std::vector<int> correct;
    confidences_and_correctness(eval_logits, eval_labels, 1.0, conf, correct);
    r.ece_before = ece_equal_mass(conf, correct, num_bins);
    const auto wrong_before = std::count(correct.begin(), correct.end(), 0);
    r.error_before = static_cast<double>(wrong_before) / static_cast<double>(correct.size());
    confidences_and_correctness(eval_logits, eval_labels, r.beta, conf, correct);
    r.ece_after = ece_equal_mass(conf, correct, num_bins);
    r.bins = equal_mass_bins(conf, correct, num_bins);
    const auto wrong_after = std::count(correct.begin(), correct.end(), 0);
    r.error_after = static_cast<double>(wrong_after) / static_cast<double>(correct.size());
    return r;
}

}  // namespace soupkit
