// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Optimizers, schedules, training runs and sweeps.

#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "soupkit/checkpoint_io.hpp"
#include "soupkit/error.hpp"
#include "soupkit/optim.hpp"
#include "soupkit/trainer.hpp"
#include "test_util.hpp"

using namespace soupkit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

HyperConfig quick(std::uint64_t seed = 0) {
    HyperConfig h;
    h.learning_rate = 3e-3;
    h.epochs = 3;
    h.batch_size = 16;
    h.seed = seed;
    return h;
}

bool same_values(const Checkpoint& a, const Checkpoint& b) {
    if (a.num_tensors() != b.num_tensors()) return false;
    for (std::size_t t = 0; t < a.num_tensors(); ++t) {
        if (a.tensors()[t].data != b.tensors()[t].data) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("AdamW first step by hand") {
    AdamW opt(2, AdamWConfig{0.1, 0.0});
    std::vector<double> p{1.0, -2.0};
    const std::vector<double> g{0.5, -4.0};
    opt.step(p, g, 0.1);
    // Bias-corrected first step moves each coordinate by lr * g / (|g| + eps').
    CHECK_THAT(p[0], WithinAbs(1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-12));
    CHECK_THAT(p[1], WithinAbs(-2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-12));
    CHECK(opt.steps() == 1);

    AdamW decay(1, AdamWConfig{0.1, 0.5});
    std::vector<double> q{2.0};
    decay.step(q, std::vector<double>{0.0}, 0.1);
    CHECK_THAT(q[0], WithinAbs(2.0 - 0.1 * 0.5 * 2.0, 1e-12));
}

TEST_CASE("SGD with momentum by hand") {
    Sgd opt(1, 0.9, 0.0);
    std::vector<double> p{1.0};
    opt.step(p, std::vector<double>{1.0}, 0.1);
    CHECK_THAT(p[0], WithinAbs(0.9, 1e-15));
    opt.step(p, std::vector<double>{1.0}, 0.1);
    CHECK_THAT(p[0], WithinAbs(0.9 - 0.1 * 1.9, 1e-15));
}

TEST_CASE("cosine schedule endpoints") {
    HyperConfig h;
    h.learning_rate = 0.2;
    CHECK_THAT(scheduled_lr(h, 0, 100), WithinAbs(0.2, 1e-15));
    CHECK_THAT(scheduled_lr(h, 50, 100), WithinAbs(0.1, 1e-15));
    CHECK_THAT(scheduled_lr(h, 100, 100), WithinAbs(0.0, 1e-15));
    h.schedule = ScheduleKind::Constant;
    CHECK(scheduled_lr(h, 77, 100) == 0.2);
}

TEST_CASE("zero learning rate leaves the weights unchanged") {
    const Dataset ds = generate(test::small_dataset_config(1));
    const Mlp mlp(ArchSpec{{4, 8, 3}});
    const Checkpoint init = mlp.initialize(2);
    HyperConfig h = quick();
    h.learning_rate = 0.0;
    for (auto opt : {OptimizerKind::AdamW, OptimizerKind::Sgd}) {
        h.optimizer = opt;
        CHECK(same_values(train(mlp, init, h, ds.train).model, init));
    }
}

TEST_CASE("training lowers the training loss and is deterministic") {
    const Dataset ds = generate(test::small_dataset_config(3));
    const Mlp mlp(ArchSpec{{4, 16, 3}});
    const Checkpoint init = mlp.initialize(4);
    HyperConfig h = quick(5);
    h.epochs = 10;
    h.label_smoothing = 0.1;
    h.input_noise_std = 0.1;
    h.mixup_alpha = 0.4;
    const TrainResult a = train(mlp, init, h, ds.train);
    const TrainResult b = train(mlp, init, h, ds.train);
    CHECK(a.final_train_loss < a.initial_train_loss);
    CHECK(a.steps == 10 * 15);
    CHECK(same_values(a.model, b.model));
    CHECK(encode_checkpoint(a.model) == encode_checkpoint(b.model));
    h.seed = 6;
    CHECK_FALSE(same_values(train(mlp, init, h, ds.train).model, a.model));
}

TEST_CASE("EMA decay extremes") {
    const Dataset ds = generate(test::small_dataset_config(7));
    const Mlp mlp(ArchSpec{{4, 8, 3}});
    const Checkpoint init = mlp.initialize(8);
    HyperConfig h = quick(9);
    h.ema_decay = 0.0;
    const TrainResult zero = train(mlp, init, h, ds.train);
    REQUIRE(zero.ema);
    CHECK(same_values(*zero.ema, zero.model));
    h.ema_decay = 1.0;
    const TrainResult one = train(mlp, init, h, ds.train);
    REQUIRE(one.ema);
    CHECK(same_values(*one.ema, init));
    CHECK_FALSE(same_values(one.model, init));
}

TEST_CASE("SAM with zero radius matches plain training") {
    const Dataset ds = generate(test::small_dataset_config(10));
    const Mlp mlp(ArchSpec{{4, 8, 3}});
    const Checkpoint init = mlp.initialize(11);
    HyperConfig h = quick(12);
    const TrainResult plain = train(mlp, init, h, ds.train);
    h.sam_rho = 0.0;
    CHECK(same_values(train(mlp, init, h, ds.train).model, plain.model));
    h.sam_rho = 0.05;
    const TrainResult sam = train(mlp, init, h, ds.train);
    CHECK_FALSE(same_values(sam.model, plain.model));
    CHECK(sam.final_train_loss < sam.initial_train_loss);
}

TEST_CASE("overflowing runs report divergence") {
    const Dataset ds = generate(test::small_dataset_config(13));
    const Mlp mlp(ArchSpec{{4, 8, 3}});
    HyperConfig h = quick();
    h.optimizer = OptimizerKind::Sgd;
    h.learning_rate = 1e30;
    try {
        train(mlp, mlp.initialize(0), h, ds.train);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Divergence);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("mixup") {
    Rng rng(14);
    FeatureMatrix x(4, 2);
    Matrix<double> t(4, 3, 0.0);
    for (std::size_t r = 0; r < 4; ++r) {
        x(r, 0) = static_cast<float>(r);
        x(r, 1) = static_cast<float>(-2.0 * r);
        t(r, r % 3) = 1.0;
    }
    const MixupResult none = mixup_batch(x, t, 0.0, rng);
    CHECK(none.lambda == 1.0);
    CHECK(none.x == x);
    CHECK(none.targets == t);

    for (int trial = 0; trial < 20; ++trial) {
        const MixupResult m = mixup_batch(x, t, 0.4, rng);
        CHECK(m.lambda >= 0.0);
        CHECK(m.lambda <= 1.0);
        for (std::size_t r = 0; r < 4; ++r) {
            double mass = 0.0;
            for (std::size_t c = 0; c < 3; ++c) mass += m.targets(r, c);
            CHECK_THAT(mass, WithinAbs(1.0, 1e-12));
            // Mixed rows lie on the segment spanned by the inputs: f1 = -2 f0.
            CHECK_THAT(m.x(r, 1), WithinAbs(-2.0 * m.x(r, 0), 1e-5));
        }
    }
}

TEST_CASE("hyperparameter validation and JSON") {
    HyperConfig h = quick();
    h.ema_decay = 0.99;
    h.optimizer = OptimizerKind::Sgd;
    const auto j = to_json(h);
    const HyperConfig back = hyper_config_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(config_digest(back) == config_digest(h));
    CHECK(config_digest(back).size() == 16);
    h.seed = 1;
    CHECK(config_digest(back) != config_digest(h));

    auto bad = [](auto mutate) {
        HyperConfig c;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), Error);
    };
    bad([](HyperConfig& c) { c.learning_rate = -1.0; });
    bad([](HyperConfig& c) { c.epochs = 0; });
    bad([](HyperConfig& c) { c.batch_size = 0; });
    bad([](HyperConfig& c) { c.label_smoothing = 1.5; });
    bad([](HyperConfig& c) { c.ema_decay = 1.5; });
    bad([](HyperConfig& c) { c.learning_rate = NAN; });

    auto extra = j;
    extra["lr"] = 0.1;
    CHECK_THROWS_AS(hyper_config_from_json(extra), Error);
}

TEST_CASE("random search draws are reproducible and in range") {
    RandomSearchSpace space;
    const auto a = sample_random_search(space, 40, 17);
    const auto b = sample_random_search(space, 40, 17);
    REQUIRE(a.size() == 40);
    std::set<std::uint64_t> seeds;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(to_json(a[i]) == to_json(b[i]));
        CHECK(a[i].learning_rate >= std::pow(10.0, -space.lr_exp_max));
        CHECK(a[i].learning_rate <= std::pow(10.0, -space.lr_exp_min));
        CHECK(a[i].epochs >= space.epochs_min);
        CHECK(a[i].epochs <= space.epochs_max);
        CHECK(a[i].label_smoothing <= space.smoothing_max);
        CHECK(a[i].mixup_alpha <= space.mixup_max);
        CHECK(a[i].input_noise_std <= space.noise_max);
        seeds.insert(a[i].seed);
    }
    CHECK(seeds.size() == 40);
    CHECK(to_json(sample_random_search(space, 40, 18)[0]) != to_json(a[0]));
    CHECK(to_json(random_search_from_json(to_json(space))) == to_json(space));
}

TEST_CASE("grid expansion order") {
    GridSpec g;
    g.learning_rate = {0.1, 0.2};
    g.seed = {1, 2, 3};
    const auto cs = expand_grid(g);
    REQUIRE(cs.size() == 6);
    CHECK(cs[0].learning_rate == 0.1);
    CHECK(cs[0].seed == 1);
    CHECK(cs[1].seed == 2);
    CHECK(cs[3].learning_rate == 0.2);
    CHECK(cs[3].seed == 1);
    CHECK(cs[5].epochs == g.base.epochs);
    CHECK(to_json(grid_spec_from_json(to_json(g))) == to_json(g));
    CHECK(expand_grid(GridSpec{}).size() == 1);
}

TEST_CASE("sweep writes a manifest that reloads") {
    test::TempDir dir("sweep");
    const Dataset ds = generate(test::small_dataset_config(15));
    const Mlp mlp(ArchSpec{{4, 8, 3}});
    const Checkpoint theta0 = mlp.initialize(16);
    std::vector<HyperConfig> cs;
    for (std::uint64_t s = 0; s < 3; ++s) cs.push_back(quick(s));
    cs[1].ema_decay = 0.9;
    HyperConfig diverging = quick(9);
    diverging.optimizer = OptimizerKind::Sgd;
    diverging.learning_rate = 1e30;
    cs.push_back(diverging);

    const SweepManifest m = run_sweep(mlp, theta0, cs, ds, dir.path(), 1);
    REQUIRE(m.entries.size() == 4);
    CHECK(m.successful().size() == 3);
    CHECK_FALSE(m.entries[3].ok);
    CHECK_FALSE(m.entries[3].error.empty());
    CHECK(m.entries[1].ema_path.has_value());
    CHECK_FALSE(m.entries[0].ema_path.has_value());

    const SweepManifest back = load_manifest(dir.path() / "manifest.json");
    CHECK(to_json(back) == to_json(m));
    for (const SweepEntry* e : back.successful()) {
        const Checkpoint c = load_checkpoint(back.resolve(e->path));
        CHECK_THAT(evaluate(mlp, c, ds.val).accuracy, WithinAbs(e->val_accuracy, 1e-12));
        CHECK(c.meta.at("config_digest") == config_digest(e->config));
    }

    // Thread count does not change any result.
    test::TempDir dir2("sweep2");
    const SweepManifest m2 = run_sweep(mlp, theta0, cs, ds, dir2.path(), 2);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(read_file_bytes(dir.path() / m.entries[i].path) == read_file_bytes(dir2.path() / m2.entries[i].path));
    }
}

TEST_CASE("pretraining beats chance") {
    const Dataset ds = generate(test::small_dataset_config(19));
    const Mlp mlp(ArchSpec{{4, 16, 3}});
    HyperConfig h = default_pretrain_config();
    h.epochs = 15;
    const TrainResult r = pretrain(mlp, ds, h);
    CHECK(r.final_train_loss < r.initial_train_loss);
    CHECK(evaluate(mlp, r.model, ds.val).accuracy > 0.4);
    CHECK(r.model.meta.at("kind") == "pretrain");
    const FinetuneResult f = finetune(mlp, r.model, quick(20), ds);
    CHECK_THAT(f.val_accuracy, WithinAbs(evaluate(mlp, f.model, ds.val).accuracy, 1e-15));
}
