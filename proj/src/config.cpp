// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration parsing, validation and overrides.

#include "soupkit/config.hpp"

#include <algorithm>

#include "json_util.hpp"
#include "soupkit/checkpoint_io.hpp"
#include "soupkit/error.hpp"

namespace soupkit {

using nlohmann::json;

namespace {

// Validation failures inside a config section are config errors, whatever the section reports.
template <typename F>
auto as_config_error(const std::string& section, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config) throw;
        throw Error(ErrorKind::Config, section + ": " + e.what());
    }
}

std::string_view to_string(SweepMode m) { return m == SweepMode::Random ? "random" : "grid"; }

json to_json(const LearnedSoupOptions& o) {
    return json{{"by_layer", o.by_layer},
                {"epochs", o.epochs},
                {"learning_rate", o.learning_rate},
                {"batch_size", o.batch_size},
                {"weight_decay", o.weight_decay}};
}

LearnedSoupOptions learned_from_json(const json& j) {
    LearnedSoupOptions o;
    detail::StrictObject obj(j, "analysis.learned");
    obj.read("by_layer", o.by_layer);
    obj.read("epochs", o.epochs);
    obj.read("learning_rate", o.learning_rate);
    obj.read("batch_size", o.batch_size);
    obj.read("weight_decay", o.weight_decay);
    obj.finish();
    if (o.epochs < 0 || !(o.learning_rate >= 0.0) || !(o.weight_decay >= 0.0)) {
        throw Error(ErrorKind::Config, "analysis.learned: epochs, learning_rate and weight_decay must be >= 0");
    }
    return o;
}

json to_json(const ApproxStudySpec& a) {
    return json{{"learning_rates", a.learning_rates},
                {"aug_noise_std", a.aug_noise_std},
                {"aug_mixup_alpha", a.aug_mixup_alpha},
                {"seeds", a.seeds},
                {"base", to_json(a.base)},
                {"splits", a.splits}};
}

ApproxStudySpec approx_from_json(const json& j) {
    ApproxStudySpec a;
    detail::StrictObject obj(j, "analysis.approx");
    obj.read("learning_rates", a.learning_rates);
    obj.read("aug_noise_std", a.aug_noise_std);
    obj.read("aug_mixup_alpha", a.aug_mixup_alpha);
    obj.read("seeds", a.seeds);
    if (const json* b = obj.child("base")) a.base = as_config_error("analysis.approx.base", [&] {
        return hyper_config_from_json(*b);
    });
    obj.read("splits", a.splits);
    obj.finish();
    return a;
}

}  // namespace

std::vector<double> AnalysisOptions::alpha_grid() const {
    if (!alphas.empty()) return alphas;
    std::vector<double> out;
    for (int i = 0; i <= 10; ++i) out.push_back(i / 10.0);
    return out;
}

void RunConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
    as_config_error("dataset", [&] { dataset.validate(); });
    as_config_error("arch", [&] { arch.validate(); });
    as_config_error("pretrain", [&] { pretrain.validate(); });
    if (arch.layer_widths.front() != dataset.input_dim) fail("arch: first width must equal dataset.input_dim");
    if (arch.layer_widths.back() != dataset.num_classes) fail("arch: last width must equal dataset.num_classes");
    if (sweep.mode == SweepMode::Random && sweep.count == 0) fail("sweep.count must be positive");
    if (sweep.threads < 0) fail("sweep.threads must be >= 0");
    for (double a : analysis.alphas) {
        if (!(a >= 0.0 && a <= 1.0)) fail("analysis.alphas must lie in [0, 1]");
    }
    if (analysis.plane_points < 2) fail("analysis.plane_points must be >= 2");
    if (!(analysis.plane_margin >= 0.0)) fail("analysis.plane_margin must be >= 0");
    as_config_error("analysis.plane_metric", [&] { parse_plane_metric(analysis.plane_metric); });
    if (!(analysis.h_alpha > 0.0 && analysis.h_alpha <= 0.5)) fail("analysis.h_alpha must be in (0, 0.5]");
    as_config_error("analysis.split", [&] { parse_split_name(analysis.split); });
    if (analysis.ece_bins < 1) fail("analysis.ece_bins must be >= 1");
    const auto& ap = analysis.approx;
    if (ap.learning_rates.size() < 2) fail("analysis.approx.learning_rates needs at least two values");
    if (ap.seeds < 1) fail("analysis.approx.seeds must be >= 1");
    if (!(ap.aug_noise_std >= 0.0) || !(ap.aug_mixup_alpha >= 0.0)) fail("analysis.approx augmentation must be >= 0");
    for (const auto& s : ap.splits) as_config_error("analysis.approx.splits", [&] { parse_split_name(s); });
    if (ap.splits.empty()) fail("analysis.approx.splits must not be empty");
}

json to_json(const RunConfig& c) {
    json analysis{{"alphas", c.analysis.alphas},
                  {"plane_points", c.analysis.plane_points},
                  {"plane_margin", c.analysis.plane_margin},
                  {"plane_metric", c.analysis.plane_metric},
                  {"h_alpha", c.analysis.h_alpha},
                  {"beta_mode", std::string(to_string(c.analysis.beta_mode))},
                  {"split", c.analysis.split},
                  {"ece_bins", c.analysis.ece_bins},
                  {"learned", to_json(c.analysis.learned)},
                  {"approx", to_json(c.analysis.approx)}};
    json sweep{{"mode", std::string(to_string(c.sweep.mode))},
               {"count", c.sweep.count},
               {"master_seed", c.sweep.master_seed},
               {"random", to_json(c.sweep.random)},
               {"grid", to_json(c.sweep.grid)},
               {"threads", c.sweep.threads}};
    return json{{"dataset", to_json(c.dataset)},
                {"arch", to_json(c.arch)},
                {"pretrain", to_json(c.pretrain)},
                {"sweep", std::move(sweep)},
                {"paths", {{"workdir", c.workdir.string()}}},
                {"analysis", std::move(analysis)}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    detail::StrictObject root(j, "config");
    if (const json* d = root.child("dataset")) {
        c.dataset = as_config_error("dataset", [&] { return dataset_config_from_json(*d); });
    }
    if (const json* a = root.child("arch")) c.arch = as_config_error("arch", [&] { return arch_spec_from_json(*a); });
    if (const json* p = root.child("pretrain")) {
        c.pretrain = as_config_error("pretrain", [&] { return hyper_config_from_json(*p); });
    }
    if (const json* s = root.child("sweep")) {
        detail::StrictObject obj(*s, "sweep");
        std::string mode(to_string(c.sweep.mode));
        obj.read("mode", mode);
        if (mode == "random") c.sweep.mode = SweepMode::Random;
        else if (mode == "grid") c.sweep.mode = SweepMode::Grid;
        else throw Error(ErrorKind::Config, "sweep.mode must be 'random' or 'grid'");
        obj.read("count", c.sweep.count);
        obj.read("master_seed", c.sweep.master_seed);
        obj.read("threads", c.sweep.threads);
        if (const json* r = obj.child("random")) {
            c.sweep.random = as_config_error("sweep.random", [&] { return random_search_from_json(*r); });
        }
        if (const json* g = obj.child("grid")) {
            c.sweep.grid = as_config_error("sweep.grid", [&] { return grid_spec_from_json(*g); });
        }
        obj.finish();
    }
    if (const json* p = root.child("paths")) {
        detail::StrictObject obj(*p, "paths");
        std::string wd = c.workdir.string();
        obj.read("workdir", wd);
        c.workdir = wd;
        obj.finish();
    }
    if (const json* a = root.child("analysis")) {
        detail::StrictObject obj(*a, "analysis");
        auto& o = c.analysis;
        obj.read("alphas", o.alphas);
        obj.read("plane_points", o.plane_points);
        obj.read("plane_margin", o.plane_margin);
        obj.read("plane_metric", o.plane_metric);
        obj.read("h_alpha", o.h_alpha);
        std::string mode(to_string(o.beta_mode));
        obj.read("beta_mode", mode);
        o.beta_mode = as_config_error("analysis.beta_mode", [&] { return parse_beta_mode(mode); });
        obj.read("split", o.split);
        obj.read("ece_bins", o.ece_bins);
        if (const json* l = obj.child("learned")) o.learned = learned_from_json(*l);
        if (const json* ap = obj.child("approx")) o.approx = approx_from_json(*ap);
        obj.finish();
    }
    root.finish();
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorKind::Config, "override '" + assignment + "' must look like key.path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw Error(ErrorKind::Config, "override '" + assignment + "' has an empty key");
        if (!node->is_object()) {
            if (!node->is_null()) throw Error(ErrorKind::Config, "override '" + assignment + "' descends into a value");
            *node = json::object();
        }
        if (dot == std::string::npos) {
            (*node)[key] = std::move(value);
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

std::vector<GridCheckpoint> train_approx_grid(const LogitModel& model, const Checkpoint& theta0,
                                              const ApproxStudySpec& spec, const Dataset& data) {
    std::vector<GridCheckpoint> out;
    for (std::size_t li = 0; li < spec.learning_rates.size(); ++li) {
        for (int ai = 0; ai < 2; ++ai) {
            for (int si = 0; si < spec.seeds; ++si) {
                HyperConfig h = spec.base;
                h.learning_rate = spec.learning_rates[li];
                h.seed = derive_seed({spec.base.seed, static_cast<std::uint64_t>(si), 77});
                h.input_noise_std = ai ? spec.aug_noise_std : 0.0;
                h.mixup_alpha = ai ? spec.aug_mixup_alpha : 0.0;
                auto r = finetune(model, theta0, h, data);
                out.push_back({static_cast<int>(li), ai, si, std::move(r.model)});
            }
        }
    }
    return out;
}

std::vector<HyperConfig> sweep_configs(const SweepSpec& spec) {
    if (spec.mode == SweepMode::Grid) return expand_grid(spec.grid);
    return sample_random_search(spec.random, spec.count, spec.master_seed);
}

}  // namespace soupkit
