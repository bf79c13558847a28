// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration parsing, overrides and validation.

#include <catch_amalgamated.hpp>

#include "soupkit/checkpoint_io.hpp"
#include "soupkit/config.hpp"
#include "soupkit/error.hpp"
#include "test_util.hpp"

using namespace soupkit;
using nlohmann::json;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidArgument;
}

RunConfig small_run() {
    RunConfig c;
    c.dataset = test::small_dataset_config(1);
    c.arch = ArchSpec{{4, 8, 3}};
    return c;
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
    RunConfig c = small_run();
    c.sweep.mode = SweepMode::Grid;
    c.sweep.grid.learning_rate = {1e-3, 2e-3};
    c.analysis.alphas = {0.0, 0.5, 1.0};
    c.analysis.beta_mode = BetaMode::Fixed1;
    c.analysis.learned.by_layer = true;
    const json j = to_json(c);
    CHECK(to_json(run_config_from_json(j)) == j);
    CHECK(to_json(run_config_from_json(json::object())) == to_json(RunConfig{}));
}

TEST_CASE("unknown keys are config errors") {
    json j = to_json(small_run());
    j["sweep"]["colour"] = 1;
    CHECK(kind_of([&] { run_config_from_json(j); }) == ErrorKind::Config);
    json k = to_json(small_run());
    k["extra"] = true;
    CHECK(kind_of([&] { run_config_from_json(k); }) == ErrorKind::Config);
    json t = to_json(small_run());
    t["pretrain"]["learning_rate"] = "fast";
    CHECK(kind_of([&] { run_config_from_json(t); }) == ErrorKind::Config);
}

TEST_CASE("validation catches inconsistent sections") {
    auto bad = [](auto mutate) {
        RunConfig c = small_run();
        mutate(c);
        CHECK(kind_of([&] { c.validate(); }) == ErrorKind::Config);
    };
    bad([](RunConfig& c) { c.arch.layer_widths = {5, 8, 3}; });
    bad([](RunConfig& c) { c.arch.layer_widths = {4, 8, 2}; });
    bad([](RunConfig& c) { c.analysis.plane_points = 1; });
    bad([](RunConfig& c) { c.analysis.h_alpha = 0.0; });
    bad([](RunConfig& c) { c.analysis.h_alpha = 0.75; });
    bad([](RunConfig& c) { c.analysis.ece_bins = 0; });
    bad([](RunConfig& c) { c.analysis.approx.learning_rates = {1e-3}; });
    bad([](RunConfig& c) { c.pretrain.epochs = 0; });
    bad([](RunConfig& c) { c.dataset.num_classes = 1; });
    CHECK_NOTHROW(small_run().validate());
}

TEST_CASE("dotted overrides") {
    json doc = to_json(small_run());
    apply_override(doc, "pretrain.learning_rate=0.01");
    apply_override(doc, "analysis.split=shift");
    apply_override(doc, "analysis.alphas=[0,0.5,1]");
    apply_override(doc, "sweep.random.base.ema_decay=null");
    const RunConfig c = run_config_from_json(doc);
    CHECK(c.pretrain.learning_rate == 0.01);
    CHECK(c.analysis.split == "shift");
    CHECK(c.analysis.alphas == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(kind_of([&] { apply_override(doc, "no_equals_sign"); }) == ErrorKind::Config);
    apply_override(doc, "pretrain.typo=3");
    CHECK(kind_of([&] { run_config_from_json(doc); }) == ErrorKind::Config);
}

TEST_CASE("config files") {
    test::TempDir dir("cfg");
    write_text_atomic(dir.path() / "run.json", to_json(small_run()).dump(2));
    CHECK(to_json(load_run_config(dir.path() / "run.json")) == to_json(small_run()));
    write_text_atomic(dir.path() / "broken.json", "{ not json");
    CHECK(kind_of([&] { load_run_config(dir.path() / "broken.json"); }) == ErrorKind::Config);
    CHECK(kind_of([&] { load_run_config(dir.path() / "missing.json"); }) == ErrorKind::MissingInput);
}

TEST_CASE("default alpha grid") {
    AnalysisOptions a;
    const auto g = a.alpha_grid();
    REQUIRE(g.size() == 11);
    CHECK(g.front() == 0.0);
    CHECK(g.back() == 1.0);
    a.alphas = {0.3};
    CHECK(a.alpha_grid() == std::vector<double>{0.3});
}

TEST_CASE("sweep configs follow the mode") {
    SweepSpec s;
    s.count = 5;
    s.master_seed = 3;
    CHECK(sweep_configs(s).size() == 5);
    s.mode = SweepMode::Grid;
    s.grid.learning_rate = {1e-3, 2e-3, 3e-3};
    const auto g = sweep_configs(s);
    REQUIRE(g.size() == 3);
    CHECK(g[2].learning_rate == 3e-3);
}

TEST_CASE("approximation grid has one model per cell") {
    const Dataset ds = generate(test::small_dataset_config(4));
    const Mlp mlp(ArchSpec{{4, 6, 3}});
    ApproxStudySpec spec;
    spec.learning_rates = {1e-3, 2e-3};
    spec.base.epochs = 1;
    const auto grid = train_approx_grid(mlp, mlp.initialize(5), spec, ds);
    REQUIRE(grid.size() == 2 * 2 * 2);
    CHECK(grid[0].lr_level == 0);
    CHECK(grid[0].aug_level == 0);
    CHECK(grid[0].seed_level == 0);
    CHECK(grid[1].seed_level == 1);
    CHECK(grid[2].aug_level == 1);
    CHECK(grid[4].lr_level == 1);
    CHECK(build_approx_pairs(mlp.initialize(5), grid).size() == 2 + 2 + 4 + 4);
}
