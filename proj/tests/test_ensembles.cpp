// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Logit ensembles, temperature fitting and equal-mass calibration bins.

#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "soupkit/ensembles.hpp"
#include "soupkit/error.hpp"
#include "soupkit/soups.hpp"
#include "soupkit/tinynet.hpp"
#include "test_util.hpp"

using namespace soupkit;
using Catch::Matchers::WithinAbs;

namespace {

LogitBatch random_logits(std::size_t rows, std::size_t cols, double scale, std::uint64_t seed) {
    Rng rng(seed);
    LogitBatch f(rows, cols);
    for (auto& v : f.data()) v = scale * rng.normal();
    return f;
}

std::vector<int> labels_from(const LogitBatch& f, double flip, std::uint64_t seed) {
    // Mostly agree with the argmax so that temperature has a finite optimum.
    Rng rng(seed);
    std::vector<int> y(f.rows());
    for (std::size_t r = 0; r < f.rows(); ++r) {
        y[r] = rng.uniform() < flip ? static_cast<int>(rng.below(f.cols())) : argmax(f.row(r));
    }
    return y;
}

/// Grid search over log beta as an independent minimizer.
double grid_beta(const LogitBatch& f, std::span<const int> y) {
    double best = 1.0, best_nll = INFINITY;
    const int n = 20000;
    for (int i = 0; i <= n; ++i) {
        const double b = std::exp(std::log(0.05) + (std::log(20.0) - std::log(0.05)) * i / n);
        const double l = oracle::mean_ce(f, y, 0.0, b);
        if (l < best_nll) {
            best_nll = l;
            best = b;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("ensemble of one member is that member") {
    const LogitBatch f = random_logits(7, 4, 1.0, 1);
    const std::vector<LogitBatch> one{f};
    CHECK(logit_ensemble(one).data() == f.data());
}

TEST_CASE("ensemble averages logits") {
    const LogitBatch a(2, 3, 1.0);
    const LogitBatch b(2, 3, 3.0);
    const std::vector<LogitBatch> ab{a, b};
    const LogitBatch mean = logit_ensemble(ab);
    for (double v : mean.data()) CHECK(v == 2.0);
    const std::vector<double> w{0.25, 0.75};
    const LogitBatch weighted = logit_ensemble(ab, w);
    for (double v : weighted.data()) CHECK(v == 2.5);
    const std::vector<LogitBatch> bad{a, LogitBatch(3, 3)};
    CHECK_THROWS_AS(logit_ensemble(bad), Error);
    CHECK_THROWS_AS(logit_ensemble(std::span<const LogitBatch>{}), Error);
}

TEST_CASE("model ensemble matches averaged forward passes") {
    const Mlp mlp(ArchSpec{{3, 5, 4}});
    const std::vector<Checkpoint> ms{mlp.initialize(1), mlp.initialize(2), mlp.initialize(3)};
    Rng rng(4);
    FeatureMatrix x(6, 3);
    for (auto& v : x.data()) v = static_cast<float>(rng.normal());
    const LogitBatch e = logit_ensemble(mlp, ms, x);
    for (std::size_t r = 0; r < 6; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            double m = 0.0;
            for (const auto& th : ms) m += mlp.forward(th, x)(r, c) / 3.0;
            CHECK_THAT(e(r, c), WithinAbs(m, 1e-12));
        }
    }
}

TEST_CASE("greedy ensemble uses the shared selection") {
    const std::vector<double> solo{0.6, 0.8, 0.4};
    auto score = [&](std::span<const std::size_t> s) {
        double best = 0.0;
        for (auto i : s) best = std::max(best, solo[i]);
        return best;
    };
    const GreedySelection a = greedy_ensemble(3, score);
    const GreedySelection b = greedy_select(3, score, true);
    CHECK(a.order == b.order);
    CHECK(a.accepted == b.accepted);
    CHECK(a.accepted == std::vector<std::size_t>{1, 0, 2});
}

TEST_CASE("temperature fit finds the NLL minimum") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const double scale = 0.3 + seed;
        const LogitBatch f = random_logits(300, 5, scale, 10 + seed);
        const auto y = labels_from(f, 0.3, 20 + seed);
        const TemperatureFit fit = fit_temperature(f, y);
        const double ref = grid_beta(f, y);
        INFO("seed " << seed);
        CHECK(std::abs(std::log(fit.beta) - std::log(ref)) < 2e-3);
        CHECK(fit.nll <= oracle::mean_ce(f, y, 0.0, 1.0) + 1e-12);
        CHECK_THAT(fit.nll, WithinAbs(oracle::mean_ce(f, y, 0.0, fit.beta), 1e-12));
    }
}

TEST_CASE("tied logits give a flat fit at beta 1") {
    const LogitBatch f(10, 3, 2.0);
    const std::vector<int> y(10, 1);
    const TemperatureFit fit = fit_temperature(f, y);
    CHECK(fit.flat);
    CHECK(fit.beta == 1.0);
}

TEST_CASE("equal-mass bins") {
    // 17 examples in 5 bins: sizes 4, 4, 3, 3, 3.
    std::vector<double> conf;
    std::vector<int> correct;
    for (int i = 0; i < 17; ++i) {
        conf.push_back(0.4 + 0.03 * ((i * 7) % 17));
        correct.push_back(i % 3 == 0);
    }
    const auto bins = equal_mass_bins(conf, correct, 5);
    REQUIRE(bins.size() == 5);
    const std::size_t expect[] = {4, 4, 3, 3, 3};
    double mass = 0.0;
    for (std::size_t b = 0; b < 5; ++b) {
        CHECK(bins[b].count == expect[b]);
        mass += bins[b].mass;
        if (b > 0) CHECK(bins[b].mean_confidence >= bins[b - 1].mean_confidence);
    }
    CHECK_THAT(mass, WithinAbs(1.0, 1e-15));
    CHECK_THAT(ece_equal_mass(conf, correct, 5), WithinAbs(oracle::ece_equal_mass(conf, correct, 5), 1e-15));

    // Perfectly calibrated bins give zero.
    const std::vector<double> half(8, 0.5);
    const std::vector<int> alt{1, 0, 1, 0, 1, 0, 1, 0};
    CHECK_THAT(ece_equal_mass(half, alt, 1), WithinAbs(0.0, 1e-15));
    // Fully confident and always wrong gives one.
    const std::vector<double> sure(4, 1.0);
    const std::vector<int> wrong(4, 0);
    CHECK_THAT(ece_equal_mass(sure, wrong, 2), WithinAbs(1.0, 1e-15));

    CHECK_THROWS_AS(ece_equal_mass(std::span<const double>{}, std::span<const int>{}, 5), Error);
    CHECK_THROWS_AS(ece_equal_mass(half, alt, 0), Error);
}

TEST_CASE("ECE matches the independent binning on random data") {
    Rng rng(50);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.below(200);
        std::vector<double> conf(n);
        std::vector<int> correct(n);
        for (std::size_t i = 0; i < n; ++i) {
            conf[i] = 0.2 + 0.8 * rng.uniform();
            correct[i] = rng.uniform() < conf[i] ? 1 : 0;
        }
        for (int bins : {1, 7, 15, 300}) {
            CHECK_THAT(ece_equal_mass(conf, correct, bins), WithinAbs(oracle::ece_equal_mass(conf, correct, bins), 1e-12));
        }
    }
}

TEST_CASE("calibration lowers the fitted NLL and keeps the error") {
    const LogitBatch fit_f = random_logits(400, 4, 4.0, 60);
    const auto fit_y = labels_from(fit_f, 0.4, 61);
    const LogitBatch eval_f = random_logits(400, 4, 4.0, 62);
    const auto eval_y = labels_from(eval_f, 0.4, 63);
    const CalibrationReport r = calibrate(fit_f, fit_y, eval_f, eval_y);
    CHECK(r.beta < 1.0);  // overconfident logits get cooled
    CHECK(r.fit_nll_after <= r.fit_nll_before);
    CHECK(r.nll_after < r.nll_before);
    CHECK(r.error_after == r.error_before);
    CHECK(r.bins.size() == 15);
    const auto csv = r.bins_csv();
    CHECK(csv.rfind("bin,count,mass,mean_confidence,accuracy\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 16);
    CHECK(r.summary_line().rfind("beta=", 0) == 0);
}
