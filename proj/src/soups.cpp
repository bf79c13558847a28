// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "soupkit/soups.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "soupkit/error.hpp"
#include "soupkit/optim.hpp"
#include "soupkit/tinynet.hpp"

namespace soupkit {

using nlohmann::json;

GreedySelection greedy_select(std::size_t k, const std::function<double(std::span<const std::size_t>)>& score_of_set,
                              bool presort) {
    if (k == 0) throw Error(ErrorKind::EmptyInput, "greedy selection over zero candidates");
    GreedySelection sel;
    sel.order.resize(k);
    std::iota(sel.order.begin(), sel.order.end(), std::size_t{0});
    if (presort) {
        sel.individual_scores.resize(k);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t one[] = {i};
            sel.individual_scores[i] = score_of_set(one);
        }
        std::stable_sort(sel.order.begin(), sel.order.end(), [&](std::size_t a, std::size_t b) {
            return sel.individual_scores[a] > sel.individual_scores[b];
        });
    }
    std::vector<std::size_t> trial;
    for (std::size_t i : sel.order) {
        trial = sel.accepted;
        trial.push_back(i);
        // The first candidate's singleton score is already known when presorting.
        const double score = (presort && sel.accepted.empty()) ? sel.individual_scores[i] : score_of_set(trial);
        if (score >= sel.final_score) {
            sel.accepted = std::move(trial);
            sel.final_score = score;
        }
        sel.score_trace.push_back(sel.final_score);
    }
    return sel;
}

json SoupResult::report() const {
    return json{{"recipe", recipe},
                {"ingredient_indices", ingredient_indices},
                {"mixing_coefficients", mixing_coefficients},
                {"group_names", group_names},
                {"temperature", temperature},
                {"trace", trace}};
}

namespace {

Checkpoint average_of(std::span<const Checkpoint> models, std::span<const std::size_t> members) {
    std::vector<const Checkpoint*> ptrs;
    for (auto i : members) ptrs.push_back(&models[i]);
    const std::vector<double> coeffs(ptrs.size(), 1.0 / static_cast<double>(ptrs.size()));
    return combine(coeffs, std::span<const Checkpoint* const>(ptrs));
}

void require_nonempty(std::span<const Checkpoint> models) {
    if (models.empty()) throw Error(ErrorKind::EmptyInput, "soup of zero models");
    for (std::size_t i = 1; i < models.size(); ++i) require_shape_compatible(models[0], models[i]);
}

}  // namespace

SoupResult uniform_soup(std::span<const Checkpoint> models) {
    require_nonempty(models);
    SoupResult r;
    r.recipe = "uniform";
    r.ingredient_indices.resize(models.size());
    std::iota(r.ingredient_indices.begin(), r.ingredient_indices.end(), std::size_t{0});
    r.merged = average_of(models, r.ingredient_indices);
    r.mixing_coefficients = {std::vector<double>(models.size(), 1.0 / static_cast<double>(models.size()))};
    r.merged.meta["recipe"] = "uniform_soup";
    return r;
}

SoupResult greedy_soup(std::span<const Checkpoint> models, const CheckpointScore& val_accuracy, bool presort) {
    require_nonempty(models);
    auto sel = greedy_select(
        models.size(), [&](std::span<const std::size_t> members) { return val_accuracy(average_of(models, members)); },
        presort);
    SoupResult r;
    r.recipe = "greedy";
    r.ingredient_indices = sel.accepted;
    r.merged = average_of(models, sel.accepted);
    std::vector<double> coeffs(models.size(), 0.0);
    for (auto i : sel.accepted) coeffs[i] = 1.0 / static_cast<double>(sel.accepted.size());
    r.mixing_coefficients = {coeffs};
    r.trace = sel.score_trace;
    r.merged.meta["recipe"] = "greedy_soup";
    std::string members;
    for (auto i : sel.accepted) members += (members.empty() ? "" : ",") + std::to_string(i);
    r.merged.meta["ingredients"] = members;
    return r;
}

std::string layer_group(const std::string& tensor_name) {
    const auto dot = tensor_name.find('.');
    return dot == std::string::npos ? tensor_name : tensor_name.substr(0, dot);
}

SoupResult learned_soup(const LogitModel& model, std::span<const Checkpoint> models, const Split& val,
                        const LearnedSoupOptions& options) {
    require_nonempty(models);
    if (val.size() == 0) throw Error(ErrorKind::EmptyInput, "learned soup needs a nonempty validation split");
    if (options.epochs < 0) throw Error(ErrorKind::InvalidArgument, "negative epoch count");
    const std::size_t k = models.size();

    std::vector<std::vector<double>> flat(k);
    for (std::size_t i = 0; i < k; ++i) flat[i] = model.to_flat(models[i]);
    const std::size_t P = flat[0].size();

    // Element -> mixing group.
    SoupResult r;
    r.recipe = options.by_layer ? "learned_by_layer" : "learned";
    std::vector<std::size_t> group_of(P, 0);
    if (options.by_layer) {
        r.group_names.clear();
        std::map<std::string, std::size_t> ids;
        std::size_t offset = 0;
        for (const auto& t : models[0].tensors()) {
            const auto key = layer_group(t.name);
            auto [it, inserted] = ids.emplace(key, r.group_names.size());
            if (inserted) r.group_names.push_back(key);
            std::fill(group_of.begin() + static_cast<std::ptrdiff_t>(offset),
                      group_of.begin() + static_cast<std::ptrdiff_t>(offset + t.size()), it->second);
            offset += t.size();
        }
    }
    const std::size_t G = r.group_names.size();

    // Raw parameters: G * k mixing logits followed by log(beta).
    std::vector<double> raw(G * k + 1, 0.0);
    AdamW opt(raw.size(), AdamWConfig{options.learning_rate, options.weight_decay});

    auto coefficients = [&](std::span<const double> a) {
        std::vector<std::vector<double>> alpha(G);
        for (std::size_t g = 0; g < G; ++g) alpha[g] = softmax(a.subspan(g * k, k));
        return alpha;
    };
    auto mix = [&](const std::vector<std::vector<double>>& alpha) {
        std::vector<double> theta(P, 0.0);
        for (std::size_t e = 0; e < P; ++e) {
            const auto& al = alpha[group_of[e]];
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += al[i] * flat[i][e];
            theta[e] = acc;
        }
        return theta;
    };
    auto full_loss = [&](std::span<const double> params) {
        const auto alpha = coefficients(params);
        const auto theta = mix(alpha);
        return loss_ce(model.logits(theta, val.features), val.labels, 0.0, std::exp(params[G * k]));
    };

    r.trace.push_back(full_loss(raw));
    const std::size_t n = val.size();
    const std::size_t batch = options.batch_size == 0 ? n : std::min(options.batch_size, n);
    std::vector<double> g_theta(P), g_raw(raw.size());
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t rows = std::min(batch, n - start);
            FeatureMatrix xb(rows, val.features.cols());
            std::vector<int> yb(rows);
            for (std::size_t j = 0; j < rows; ++j) {
                std::copy_n(val.features.row(start + j).begin(), xb.cols(), xb.row(j).begin());
                yb[j] = val.labels[start + j];
            }
            const auto alpha = coefficients(raw);
            const double beta = std::exp(raw[G * k]);
            const auto theta = mix(alpha);
            const double loss = loss_and_grad(model, theta, xb, yb, 0.0, beta, g_theta);
            if (!std::isfinite(loss)) {
                throw Error(ErrorKind::Divergence, "learned soup loss became non-finite in epoch " +
                                                       std::to_string(epoch));
            }
            // dL/dalpha_{g,i} = <grad_theta restricted to g, theta_i restricted to g>
            std::vector<double> dalpha(G * k, 0.0);
            for (std::size_t e = 0; e < P; ++e) {
                const std::size_t g = group_of[e];
                for (std::size_t i = 0; i < k; ++i) dalpha[g * k + i] += g_theta[e] * flat[i][e];
            }
            for (std::size_t g = 0; g < G; ++g) {
                double s = 0.0;
                for (std::size_t i = 0; i < k; ++i) s += alpha[g][i] * dalpha[g * k + i];
                for (std::size_t j = 0; j < k; ++j) g_raw[g * k + j] = alpha[g][j] * (dalpha[g * k + j] - s);
            }
            // d/dbeta of mean l(beta f) = mean (p - e_y)^T f; chain through beta = exp(b).
            const LogitBatch f = model.logits(theta, xb);
            double dbeta = 0.0;
            for (std::size_t j = 0; j < rows; ++j) {
                const auto p = softmax(f.row(j), beta);
                for (std::size_t c = 0; c < p.size(); ++c) {
                    dbeta += (p[c] - (static_cast<int>(c) == yb[j] ? 1.0 : 0.0)) * f(j, c);
                }
            }
            g_raw[G * k] = beta * dbeta / static_cast<double>(rows);
            opt.step(raw, g_raw, options.learning_rate);
            r.trace.push_back(full_loss(raw));
        }
    }

    const auto alpha = coefficients(raw);
    r.mixing_coefficients = alpha;
    r.temperature = std::exp(raw[G * k]);
    r.ingredient_indices.resize(k);
    std::iota(r.ingredient_indices.begin(), r.ingredient_indices.end(), std::size_t{0});
    r.merged = model.to_checkpoint(mix(alpha));
    r.merged.meta["recipe"] = r.recipe + "_soup";
    r.merged.meta["temperature"] = std::to_string(r.temperature);
    return r;
}

std::vector<std::pair<double, Checkpoint>> wise_ft_curve(const Checkpoint& theta0, const Checkpoint& theta1,
                                                         std::span<const double> alphas) {
    require_shape_compatible(theta0, theta1);
    std::vector<std::pair<double, Checkpoint>> out;
    const Checkpoint* ptrs[] = {&theta0, &theta1};
    for (double a : alphas) {
        if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorKind::InvalidArgument, "interpolation alpha outside [0, 1]");
        const double coeffs[] = {1.0 - a, a};
        out.emplace_back(a, combine(coeffs, std::span<const Checkpoint* const>(ptrs)));
    }
    return out;
}

}  // namespace soupkit
