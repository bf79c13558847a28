// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// MLP forward/backward, losses, softmax identities and evaluation.

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "soupkit/error.hpp"
#include "soupkit/rng.hpp"
#include "soupkit/tinynet.hpp"
#include "probe_model.hpp"
#include "test_util.hpp"

using namespace soupkit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

FeatureMatrix random_features(std::size_t rows, int dim, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMatrix x(rows, static_cast<std::size_t>(dim));
    for (auto& v : x.data()) v = static_cast<float>(rng.normal());
    return x;
}

std::vector<int> random_labels(std::size_t rows, int classes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> y(rows);
    for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    return y;
}

}  // namespace

TEST_CASE("zero parameters give zero logits") {
    const Mlp mlp(ArchSpec{{5, 7, 6, 3}});
    const std::vector<double> zero(mlp.num_params(), 0.0);
    const LogitBatch f = mlp.logits(zero, random_features(4, 5, 1));
    for (double v : f.data()) CHECK(v == 0.0);
}

TEST_CASE("identity hidden layer reproduces the head applied to ReLU(x)") {
    const Mlp mlp(ArchSpec{{2, 2, 3}});
    Checkpoint theta = mlp.to_checkpoint(std::vector<double>(mlp.num_params(), 0.0));
    for (auto& t : theta.tensors()) {
        if (t.name == "layer0.weight") t.data = {1, 0, 0, 1};
        if (t.name == "layer0.gain") t.data = {1, 1};
        if (t.name == "layer1.weight") t.data = {0.5f, -1.0f, 2.0f, 0.25f, -3.0f, 1.5f};
    }
    FeatureMatrix x(1, 2);
    x(0, 0) = 1.0f;
    x(0, 1) = 2.0f;
    const LogitBatch f = mlp.forward(theta, x);
    CHECK_THAT(f(0, 0), WithinAbs(0.5 * 1 - 1.0 * 2, 1e-12));
    CHECK_THAT(f(0, 1), WithinAbs(2.0 * 1 + 0.25 * 2, 1e-12));
    CHECK_THAT(f(0, 2), WithinAbs(-3.0 * 1 + 1.5 * 2, 1e-12));

    x(0, 0) = -1.0f;  // ReLU clips the first unit
    const LogitBatch g = mlp.forward(theta, x);
    CHECK_THAT(g(0, 0), WithinAbs(-1.0 * 2, 1e-12));
}

TEST_CASE("scaling the head doubles the logits") {
    const Mlp mlp(ArchSpec{{4, 6, 3}});
    Checkpoint theta = mlp.initialize(3);
    const FeatureMatrix x = random_features(5, 4, 2);
    const LogitBatch f = mlp.forward(theta, x);
    for (auto& t : theta.tensors()) {
        if (t.name.rfind("layer1.", 0) == 0) {
            for (auto& v : t.data) v *= 2.0f;
        }
    }
    const LogitBatch g = mlp.forward(theta, x);
    for (std::size_t i = 0; i < f.data().size(); ++i) CHECK_THAT(g.data()[i], WithinAbs(2.0 * f.data()[i], 1e-9));
}

TEST_CASE("layout checks") {
    CHECK_THROWS_AS(Mlp(ArchSpec{{4}}), Error);
    CHECK_THROWS_AS(Mlp(ArchSpec{{4, 0, 3}}), Error);
    const Mlp mlp(ArchSpec{{4, 6, 3}});
    CHECK(mlp.num_params() == 4 * 6 + 6 + 6 + 6 * 3 + 3);
    Checkpoint wrong = test::single("w", {1.0f});
    CHECK_THROWS_AS(mlp.forward(wrong, random_features(1, 4, 0)), Error);
    CHECK_THROWS_AS(mlp.logits(std::vector<double>(mlp.num_params()), random_features(1, 5, 0)), Error);
}

TEST_CASE("cross-entropy examples") {
    LogitBatch uniform(3, 5, 0.7);
    const std::vector<int> y{0, 3, 4};
    CHECK_THAT(loss_ce(uniform, y), WithinAbs(std::log(5.0), 1e-12));

    double prev = INFINITY;
    for (double margin : {0.0, 1.0, 5.0, 10.0, 20.0}) {
        LogitBatch f(1, 4, 0.0);
        f(0, 2) = margin;
        const double l = loss_ce(f, std::vector<int>{2});
        CHECK(l < prev);
        prev = l;
    }
    CHECK(prev < 1e-8);

    const auto t = smoothed_target(0, 4, 0.1);
    CHECK_THAT(t[0], WithinAbs(0.925, 1e-15));
    for (int c = 1; c < 4; ++c) CHECK_THAT(t[static_cast<std::size_t>(c)], WithinAbs(0.025, 1e-15));
    CHECK_THAT(std::accumulate(t.begin(), t.end(), 0.0), WithinAbs(1.0, 1e-15));
}

TEST_CASE("cross-entropy equals the independent formula") {
    Rng rng(4);
    LogitBatch f(20, 6);
    for (auto& v : f.data()) v = 3.0 * rng.normal();
    const auto y = random_labels(20, 6, 5);
    for (double s : {0.0, 0.1, 0.3}) {
        for (double beta : {0.5, 1.0, 2.5}) {
            CHECK_THAT(loss_ce(f, y, s, beta), WithinAbs(oracle::mean_ce(f, y, s, beta), 1e-12));
        }
    }
    for (std::size_t r = 0; r < f.rows(); ++r) {
        const auto p = softmax(f.row(r));
        LogitBatch one(1, 6);
        std::copy(f.row(r).begin(), f.row(r).end(), one.row(0).begin());
        CHECK_THAT(loss_ce(one, std::vector<int>{y[r]}), WithinAbs(-std::log(p[static_cast<std::size_t>(y[r])]), 1e-7));
    }
}

TEST_CASE("softmax sums to one and ignores shifts") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> f(7);
        for (auto& v : f) v = 10.0 * rng.normal();
        const auto p = softmax(f);
        CHECK_THAT(std::accumulate(p.begin(), p.end(), 0.0), WithinAbs(1.0, 1e-6));
        auto g = f;
        for (auto& v : g) v += 123.0;
        const auto q = softmax(g);
        for (std::size_t c = 0; c < p.size(); ++c) CHECK_THAT(q[c], WithinAbs(p[c], 1e-5));
        CHECK(argmax(f) == argmax(std::vector<double>(p.begin(), p.end())));
    }
}

TEST_CASE("logit gradient is p minus the one-hot label") {
    const std::vector<double> f(4, 0.0);
    const auto g = logit_gradient(f, 2);
    for (int c = 0; c < 4; ++c) {
        CHECK_THAT(g[static_cast<std::size_t>(c)], WithinAbs(c == 2 ? 0.25 - 1.0 : 0.25, 1e-15));
    }
    Rng rng(7);
    std::vector<double> h(5);
    for (auto& v : h) v = rng.normal();
    const auto p = softmax(h);
    const auto gh = logit_gradient(h, 1);
    for (std::size_t c = 0; c < 5; ++c) CHECK_THAT(gh[c], WithinAbs(p[c] - (c == 1 ? 1.0 : 0.0), 1e-15));
}

TEST_CASE("Hessian quadratic form is the softmax variance") {
    CHECK_THAT(hessian_quadratic_form(std::vector<double>{0.3, -1.0, 2.0}, std::vector<double>{4.0, 4.0, 4.0}),
               WithinAbs(0.0, 1e-12));
    CHECK_THAT(hessian_quadratic_form(std::vector<double>{800.0, 0.0, 0.0}, std::vector<double>{1.0, -2.0, 5.0}),
               WithinAbs(0.0, 1e-12));
    CHECK_THAT(hessian_quadratic_form(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 1.0}),
               WithinAbs(0.25, 1e-15));

    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> f(6), v(6);
        for (auto& x : f) x = 2.0 * rng.normal();
        for (auto& x : v) x = rng.normal();
        // Second difference of the loss along v.
        const int y = static_cast<int>(rng.below(6));
        auto loss_at = [&](double t) {
            LogitBatch b(1, 6);
            for (std::size_t c = 0; c < 6; ++c) b(0, c) = f[c] + t * v[c];
            return oracle::mean_ce(b, std::vector<int>{y}, 0.0, 1.0);
        };
        const double h = 1e-4;
        const double fd = (loss_at(h) - 2.0 * loss_at(0.0) + loss_at(-h)) / (h * h);
        CHECK_THAT(hessian_quadratic_form(f, v), WithinAbs(fd, 1e-5));
    }
}

TEST_CASE("analytic gradients match central differences") {
    const std::vector<std::vector<int>> archs{{3, 4, 2}, {5, 8, 3}, {4, 6, 5, 3}, {2, 3, 3, 3, 2}};
    std::uint64_t seed = 0;
    for (const auto& widths : archs) {
        const Mlp mlp(ArchSpec{widths});
        const auto theta = mlp.to_flat(mlp.initialize(++seed));
        const FeatureMatrix x = random_features(6, widths.front(), seed + 100);
        const auto y = random_labels(6, widths.back(), seed + 200);
        for (auto [s, beta] : {std::pair{0.0, 1.0}, std::pair{0.1, 1.7}}) {
            std::vector<double> g(theta.size());
            loss_and_grad(mlp, theta, x, y, s, beta, g);
            const auto check = oracle::finite_difference_check(mlp, theta, x, y, s, beta, g);
            INFO("arch " << widths.size() << " layers, smoothing " << s);
            CHECK(check.checked > theta.size() / 2);
            CHECK(check.max_relative_error < 1e-4);
        }
    }
    const LinearModel lin(4, 3);
    std::vector<double> p(lin.num_params());
    Rng rng(9);
    for (auto& v : p) v = rng.normal();
    const FeatureMatrix x = random_features(5, 4, 10);
    const auto y = random_labels(5, 3, 11);
    std::vector<double> g(p.size());
    loss_and_grad(lin, p, x, y, 0.05, 1.3, g);
    CHECK(oracle::finite_difference_check(lin, p, x, y, 0.05, 1.3, g).max_relative_error < 1e-4);
}

TEST_CASE("duplicated rows leave the mean gradient unchanged") {
    const Mlp mlp(ArchSpec{{3, 5, 3}});
    const Checkpoint theta = mlp.initialize(12);
    const FeatureMatrix x = random_features(1, 3, 13);
    FeatureMatrix xx(3, 3);
    for (std::size_t r = 0; r < 3; ++r) std::copy(x.row(0).begin(), x.row(0).end(), xx.row(r).begin());
    const Checkpoint g1 = grad(mlp, theta, x, std::vector<int>{2});
    const Checkpoint g3 = grad(mlp, theta, xx, std::vector<int>{2, 2, 2});
    for (std::size_t t = 0; t < g1.num_tensors(); ++t) {
        for (std::size_t i = 0; i < g1.tensors()[t].size(); ++i) {
            CHECK_THAT(g3.tensors()[t].data[i], WithinAbs(g1.tensors()[t].data[i], 1e-6));
        }
    }
    CHECK(g1.num_tensors() == theta.num_tensors());
}

TEST_CASE("second directional derivative") {
    const test::QuadraticProbe probe;
    FeatureMatrix x(2, 1);
    for (double t0 : {-1.0, 0.0, 0.7}) {
        const LogitBatch d2 = logit_second_directional(probe, std::vector<double>{t0}, std::vector<double>{1.0}, x);
        CHECK_THAT(d2(0, 0), WithinAbs(2.0, 1e-3));
        CHECK_THAT(d2(1, 1), WithinAbs(0.0, 1e-9));
    }

    const LinearModel lin(4, 3);
    Rng rng(14);
    std::vector<double> p(lin.num_params()), d(lin.num_params());
    for (auto& v : p) v = rng.normal();
    for (auto& v : d) v = rng.normal();
    double dn2 = 0.0;
    for (double v : d) dn2 += v * v;
    const LogitBatch lin2 = logit_second_directional(lin, p, d, random_features(5, 4, 15));
    for (double v : lin2.data()) CHECK(std::abs(v) < 1e-4 * dn2);

    // Moving only the head of an MLP is linear in the parameters.
    const Mlp mlp(ArchSpec{{4, 6, 3}});
    const auto theta = mlp.to_flat(mlp.initialize(16));
    std::vector<double> head(theta.size(), 0.0);
    for (std::size_t i = theta.size() - (6 * 3 + 3); i < theta.size(); ++i) head[i] = rng.normal();
    const LogitBatch m2 = logit_second_directional(mlp, theta, head, random_features(5, 4, 17));
    for (double v : m2.data()) CHECK(std::abs(v) < 1e-4);

    const std::vector<double> zero(theta.size(), 0.0);
    const LogitBatch z2 = logit_second_directional(mlp, theta, zero, random_features(5, 4, 18));
    for (double v : z2.data()) CHECK(v == 0.0);
}

TEST_CASE("evaluation examples") {
    LogitBatch perfect(4, 3, 0.0);
    const std::vector<int> y{0, 2, 1, 2};
    for (std::size_t r = 0; r < 4; ++r) perfect(r, static_cast<std::size_t>(y[r])) = 50.0;
    CHECK(evaluate_logits(perfect, y).error == 0.0);

    const LogitBatch uniform(4, 3, 0.0);
    CHECK_THAT(evaluate_logits(uniform, y).error, WithinAbs(1.0 - 0.25, 1e-15));
    CHECK(argmax(std::vector<double>{1.0, 1.0, 0.5}) == 0);
}

TEST_CASE("evaluate matches a per-example loop") {
    const Mlp mlp(ArchSpec{{4, 8, 5}});
    const Checkpoint theta = mlp.initialize(19);
    Split s;
    s.features = random_features(97, 4, 20);
    s.labels = random_labels(97, 5, 21);
    const EvalReport r = evaluate(mlp, theta, s);
    const auto naive = oracle::naive_evaluate(mlp.forward(theta, s.features), s.labels);
    CHECK_THAT(r.loss, WithinAbs(naive.loss, 1e-10));
    CHECK_THAT(r.accuracy, WithinAbs(naive.accuracy, 1e-12));
    CHECK_THAT(r.error, WithinAbs(1.0 - naive.accuracy, 1e-12));
    CHECK_THAT(r.ece, WithinAbs(naive.ece, 1e-10));
    CHECK(r.n == 97);
}

TEST_CASE("predictions are invariant to positive inverse temperature") {
    Rng rng(22);
    LogitBatch f(40, 4);
    for (auto& v : f.data()) v = rng.normal();
    f(0, 1) = f(0, 2);  // an exact tie stays a tie under scaling
    const std::vector<int> y = random_labels(40, 4, 23);
    const double base = evaluate_logits(f, y).error;
    for (double beta : {0.1, 0.5, 3.0, 40.0}) {
        CHECK(evaluate_logits(f, y, beta).error == base);
        std::vector<double> scaled(f.row(0).begin(), f.row(0).end());
        for (auto& v : scaled) v *= beta;
        CHECK(argmax(scaled) == argmax(f.row(0)));
    }
}

TEST_CASE("checkpoint conversion round-trips") {
    const Mlp mlp(ArchSpec{{3, 4, 2}});
    const Checkpoint theta = mlp.initialize(24);
    const Checkpoint back = mlp.to_checkpoint(mlp.to_flat(theta));
    for (std::size_t t = 0; t < theta.num_tensors(); ++t) CHECK(back.tensors()[t].data == theta.tensors()[t].data);
    CHECK(mlp.initialize(24).tensors() == theta.tensors());
}
