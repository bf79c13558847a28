// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// soupkit command-line driver. Every subcommand reads the run config (file plus
// --set overrides), works under one workdir and writes its artifacts atomically.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "soupkit/analysis.hpp"
#include "soupkit/checkpoint_io.hpp"
#include "soupkit/config.hpp"
#include "soupkit/datagen.hpp"
#include "soupkit/ensembles.hpp"
#include "soupkit/error.hpp"
#include "soupkit/soups.hpp"
#include "soupkit/tinynet.hpp"
#include "soupkit/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace soupkit;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return 2;
        case ErrorKind::MissingInput: return 3;
        case ErrorKind::Divergence: return 4;
        case ErrorKind::BadMagic:
        case ErrorKind::VersionMismatch:
        case ErrorKind::Truncated:
        case ErrorKind::MalformedFile:
        case ErrorKind::DuplicateName: return 5;
        case ErrorKind::ShapeMismatch:
        case ErrorKind::EmptyInput:
        case ErrorKind::InvalidArgument:
        case ErrorKind::UndefinedAngle:
        case ErrorKind::Degenerate: return 6;
        case ErrorKind::Io: return 7;
    }
    return 1;
}

int fail(std::string_view kind, int code, const std::string& message) {
    std::cerr << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << "\n";
    return code;
}

struct Layout {
    fs::path root;

    fs::path data() const { return root / "data"; }
    fs::path theta0() const { return root / "pretrain" / "theta0.soupckpt"; }
    fs::path pretrain_report() const { return root / "pretrain" / "pretrain.json"; }
    fs::path sweep() const { return root / "sweep"; }
    fs::path manifest() const { return sweep() / "manifest.json"; }
    fs::path dir(const char* name) const { return root / name; }
};

struct Globals {
    std::string config_path;
    std::string workdir;
    std::vector<std::string> overrides;
};

void require_file(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) throw Error(ErrorKind::MissingInput, "missing '" + p.string() + "'" + hint);
}

void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    require_file(path, "");
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedFile, path.string() + ": " + e.what());
    }
}

RunConfig build_config(const Globals& g, const std::vector<std::string>& extra) {
    json doc = json::object();
    if (!g.config_path.empty()) {
        require_file(g.config_path, "");
        try {
            doc = json::parse(read_text_file(g.config_path));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Config, g.config_path + ": " + e.what());
        }
    }
    for (const auto& o : g.overrides) apply_override(doc, o);
    for (const auto& o : extra) apply_override(doc, o);
    if (!g.workdir.empty()) apply_override(doc, "paths.workdir=" + json(g.workdir).dump());
    return run_config_from_json(doc);
}

Dataset load_dataset(const Layout& l) {
    require_file(l.data() / "dataset.json", "; run `soupkit datagen` first");
    return load_csv(l.data());
}

Checkpoint load_input(const fs::path& p) {
    require_file(p, "");
    return load_checkpoint(p);
}

Checkpoint load_theta0(const Layout& l) {
    require_file(l.theta0(), "; run `soupkit pretrain` first");
    return load_checkpoint(l.theta0());
}

SweepManifest load_sweep(const fs::path& path) {
    require_file(path, "; run `soupkit sweep` first");
    return load_manifest(path);
}

struct Members {
    std::vector<std::size_t> indices;
    std::vector<Checkpoint> models;
    std::vector<double> val_accuracy;
};

Members load_members(const SweepManifest& m, bool ema) {
    Members out;
    for (const SweepEntry* e : m.successful()) {
        if (ema && !e->ema_path) throw Error(ErrorKind::MissingInput, "sweep entry " + std::to_string(e->index) + " has no EMA checkpoint");
        out.indices.push_back(e->index);
        out.models.push_back(load_input(m.resolve(ema ? *e->ema_path : e->path)));
        out.val_accuracy.push_back(ema ? *e->ema_val_accuracy : e->val_accuracy);
    }
    if (out.models.empty()) throw Error(ErrorKind::EmptyInput, "manifest has no successful entries");
    return out;
}

std::size_t best_by_val(const Members& m) {
    return static_cast<std::size_t>(std::max_element(m.val_accuracy.begin(), m.val_accuracy.end()) -
                                    m.val_accuracy.begin());
}

json eval_splits(const LogitModel& model, const Checkpoint& theta, const Dataset& ds) {
    json j;
    for (auto name : {SplitName::Val, SplitName::Test, SplitName::Shift}) {
        j[std::string(to_string(name))] = to_json(evaluate(model, theta, ds.split(name)));
    }
    return j;
}

json eval_logits_splits(const LogitModel& model, std::span<const Checkpoint> members, const Dataset& ds) {
    json j;
    for (auto name : {SplitName::Val, SplitName::Test, SplitName::Shift}) {
        const Split& s = ds.split(name);
        j[std::string(to_string(name))] = to_json(evaluate_logits(logit_ensemble(model, members, s.features), s.labels));
    }
    return j;
}

void hyper_flags(CLI::App* sub, std::map<std::string, std::string>& out) {
    static const std::pair<const char*, const char*> fields[] = {
        {"--lr", "learning_rate"},
        {"--weight-decay", "weight_decay"},
        {"--epochs", "epochs"},
        {"--batch-size", "batch_size"},
        {"--seed", "seed"},
        {"--label-smoothing", "label_smoothing"},
        {"--mixup-alpha", "mixup_alpha"},
        {"--input-noise-std", "input_noise_std"},
        {"--optimizer", "optimizer"},
        {"--schedule", "schedule"},
        {"--ema-decay", "ema_decay"},
        {"--sam-rho", "sam_rho"},
        {"--momentum", "momentum"},
    };
    for (auto [flag, key] : fields) {
        std::string k = key;
        sub->add_option_function<std::string>(flag, [&out, k](const std::string& v) { out[k] = v; },
                                              "Training hyperparameter " + k);
    }
}

std::vector<std::string> prefixed(const std::map<std::string, std::string>& flags, const std::string& prefix) {
    std::vector<std::string> out;
    for (const auto& [k, v] : flags) out.push_back(prefix + k + "=" + v);
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// ---- subcommands ----

void cmd_datagen(const RunConfig& cfg, const Layout& l) {
    const Dataset ds = generate(cfg.dataset);
    save_csv(ds, l.data());
    write_json(l.data() / "generator.json", to_json(cfg.dataset));
    std::cout << "wrote " << ds.train.size() << "/" << ds.val.size() << "/" << ds.test.size() << "/"
              << ds.shift.size() << " rows to " << l.data().string() << "\n";
}

void cmd_pretrain(const RunConfig& cfg, const Layout& l) {
    const Dataset ds = load_dataset(l);
    const Mlp mlp(cfg.arch);
    const TrainResult r = pretrain(mlp, ds, cfg.pretrain);
    save_checkpoint(r.model, l.theta0());
    json rep{{"arch", to_json(cfg.arch)},
             {"config", to_json(cfg.pretrain)},
             {"initial_train_loss", r.initial_train_loss},
             {"final_train_loss", r.final_train_loss},
             {"steps", r.steps},
             {"eval", eval_splits(mlp, r.model, ds)}};
    write_json(l.pretrain_report(), rep);
    std::cout << "pretrain: train loss " << fmt(r.initial_train_loss) << " -> " << fmt(r.final_train_loss)
              << ", val accuracy " << fmt(rep["eval"]["val"]["accuracy"].get<double>()) << "\n";
}

void cmd_sweep(const RunConfig& cfg, const Layout& l, int threads) {
    const Dataset ds = load_dataset(l);
    const Checkpoint theta0 = load_theta0(l);
    const Mlp mlp(cfg.arch);
    const auto configs = sweep_configs(cfg.sweep);
    const SweepManifest m = run_sweep(mlp, theta0, configs, ds, l.sweep(), threads > 0 ? threads : cfg.sweep.threads);
    const auto ok = m.successful();
    std::cout << "sweep: " << ok.size() << "/" << m.entries.size() << " runs succeeded\n";
    if (ok.empty()) {
        const std::string first = m.entries.front().error;
        const bool diverged = first.find("diverged") != std::string::npos;
        throw Error(diverged ? ErrorKind::Divergence : ErrorKind::InvalidArgument, "every sweep run failed: " + first);
    }
}

struct SoupArgs {
    std::string recipe;
    std::string manifest;
    bool ema = false;
    std::string out;
};

void cmd_soup(const RunConfig& cfg, const Layout& l, const SoupArgs& a) {
    const Dataset ds = load_dataset(l);
    const SweepManifest m = load_sweep(a.manifest.empty() ? l.manifest() : fs::path(a.manifest));
    const Mlp mlp(m.arch);
    const Members mem = load_members(m, a.ema);
    auto val_acc = [&](const Checkpoint& c) { return evaluate(mlp, c, ds.val).accuracy; };

    SoupResult s;
    if (a.recipe == "uniform") s = uniform_soup(mem.models);
    else if (a.recipe == "greedy") s = greedy_soup(mem.models, val_acc);
    else s = learned_soup(mlp, mem.models, ds.val, cfg.analysis.learned);
    s.merged.meta["kind"] = "soup";
    s.merged.meta["recipe"] = a.recipe;

    const std::string stem = a.recipe + (a.ema ? "_ema" : "");
    const fs::path ckpt = a.out.empty() ? l.dir("soups") / (stem + ".soupckpt") : fs::path(a.out);
    save_checkpoint(s.merged, ckpt);

    std::vector<std::size_t> ingredients;
    for (auto i : s.ingredient_indices) ingredients.push_back(mem.indices[i]);
    json individuals = json::array();
    for (std::size_t i = 0; i < mem.models.size(); ++i) {
        individuals.push_back({{"index", mem.indices[i]},
                               {"val_accuracy", mem.val_accuracy[i]},
                               {"test_accuracy", evaluate(mlp, mem.models[i], ds.test).accuracy}});
    }
    const std::size_t best = best_by_val(mem);
    json rep = s.report();
    rep["checkpoint"] = ckpt.filename().string();
    rep["ingredients"] = ingredients;
    rep["ema"] = a.ema;
    rep["eval"] = eval_splits(mlp, s.merged, ds);
    rep["individuals"] = individuals;
    rep["best_individual"] = {{"index", mem.indices[best]}, {"eval", eval_splits(mlp, mem.models[best], ds)}};
    write_json(ckpt.parent_path() / (ckpt.stem().string() + ".json"), rep);
    std::cout << a.recipe << " soup of " << ingredients.size() << "/" << mem.models.size()
              << " models: val " << fmt(rep["eval"]["val"]["accuracy"].get<double>()) << " test "
              << fmt(rep["eval"]["test"]["accuracy"].get<double>()) << " (best individual val "
              << fmt(mem.val_accuracy[best]) << ")\n";
}

void cmd_ensemble(const Layout& l, const std::string& recipe, const std::string& manifest, bool ema) {
    const Dataset ds = load_dataset(l);
    const SweepManifest m = load_sweep(manifest.empty() ? l.manifest() : fs::path(manifest));
    const Mlp mlp(m.arch);
    const Members mem = load_members(m, ema);

    std::vector<std::size_t> chosen;
    json trace = json::array();
    if (recipe == "greedy") {
        const GreedySelection sel = greedy_ensemble(mlp, mem.models, ds.val);
        chosen = sel.accepted;
        trace = sel.score_trace;
    } else {
        for (std::size_t i = 0; i < mem.models.size(); ++i) chosen.push_back(i);
    }
    std::vector<Checkpoint> members;
    std::vector<std::size_t> indices;
    for (auto i : chosen) {
        members.push_back(mem.models[i]);
        indices.push_back(mem.indices[i]);
    }
    json rep{{"recipe", recipe}, {"ema", ema}, {"members", indices}, {"trace", trace},
             {"eval", eval_logits_splits(mlp, members, ds)}};
    write_json(l.dir("ensembles") / (recipe + (ema ? "_ema" : "") + ".json"), rep);
    std::cout << recipe << " ensemble of " << indices.size() << " models: test accuracy "
              << fmt(rep["eval"]["test"]["accuracy"].get<double>()) << "\n";
}

void cmd_eval(const RunConfig& cfg, const Layout& l, const std::string& path, const std::string& split,
              std::optional<double> beta, const std::string& out) {
    const Dataset ds = load_dataset(l);
    const Checkpoint theta = load_input(path);
    const Mlp mlp(cfg.arch);
    json splits;
    std::vector<SplitName> names;
    if (split == "all") names = {SplitName::Val, SplitName::Test, SplitName::Shift};
    else names = {parse_split_name(split)};
    for (auto n : names) splits[std::string(to_string(n))] = to_json(evaluate(mlp, theta, ds.split(n), beta));
    json rep{{"checkpoint", fs::path(path).filename().string()}, {"num_params", theta.num_elements()},
             {"splits", splits}};
    if (beta) rep["beta"] = *beta;
    const fs::path target = out.empty() ? l.dir("eval") / (fs::path(path).stem().string() + ".json") : fs::path(out);
    write_json(target, rep);
    std::cout << rep.dump(2) << "\n";
}

struct PairArgs {
    std::string theta0, theta1, theta2;
    int model = -1;
};

fs::path best_sweep_model(const Layout& l, std::size_t rank) {
    const SweepManifest m = load_sweep(l.manifest());
    auto ok = m.successful();
    std::stable_sort(ok.begin(), ok.end(),
                     [](const SweepEntry* a, const SweepEntry* b) { return a->val_accuracy > b->val_accuracy; });
    if (ok.size() <= rank) throw Error(ErrorKind::MissingInput, "sweep has too few successful models");
    return m.resolve(ok[rank]->path);
}

fs::path sweep_model(const Layout& l, int index) {
    const SweepManifest m = load_sweep(l.manifest());
    for (const SweepEntry* e : m.successful()) {
        if (e->index == static_cast<std::size_t>(index)) return m.resolve(e->path);
    }
    throw Error(ErrorKind::MissingInput, "sweep has no successful model " + std::to_string(index));
}

void cmd_interp(const RunConfig& cfg, const Layout& l, const PairArgs& a) {
    const Dataset ds = load_dataset(l);
    const Mlp mlp(cfg.arch);
    const Checkpoint t0 = a.theta0.empty() ? load_theta0(l) : load_input(a.theta0);
    const fs::path p1 = !a.theta1.empty() ? fs::path(a.theta1) : a.model >= 0 ? sweep_model(l, a.model) : best_sweep_model(l, 0);
    const Checkpoint t1 = load_input(p1);
    const auto alphas = cfg.analysis.alpha_grid();
    const Split& split = ds.split(parse_split_name(cfg.analysis.split));
    const auto curve = interpolation_curve(mlp, t0, t1, alphas, split);
    const fs::path out = l.dir("interp") / (p1.stem().string() + "_" + cfg.analysis.split + ".csv");
    write_text_atomic(out, curve_csv(curve));
    std::cout << "wrote " << curve.size() << " points to " << out.string() << "\n";
}

void cmd_plane(const RunConfig& cfg, const Layout& l, const PairArgs& a) {
    const Dataset ds = load_dataset(l);
    const Mlp mlp(cfg.arch);
    const Checkpoint t0 = a.theta0.empty() ? load_theta0(l) : load_input(a.theta0);
    const Checkpoint t1 = load_input(a.theta1.empty() ? best_sweep_model(l, 0) : fs::path(a.theta1));
    const Checkpoint t2 = load_input(a.theta2.empty() ? best_sweep_model(l, 1) : fs::path(a.theta2));
    const PlaneBasis basis = make_plane_basis(t0, t1, t2);
    const PlaneGrid grid = default_plane_grid(basis, cfg.analysis.plane_points, cfg.analysis.plane_margin);
    const Split& split = ds.split(parse_split_name(cfg.analysis.split));
    const PlaneLandscape land = plane_landscape(mlp, t0, t1, t2, grid, split, parse_plane_metric(cfg.analysis.plane_metric));
    write_text_atomic(l.dir("plane") / "plane.csv", land.csv());
    write_text_atomic(l.dir("plane") / "plane.txt", land.matrix_text());
    write_json(l.dir("plane") / "basis.json", land.basis_json());
    std::cout << "wrote " << grid.xs.size() << "x" << grid.ys.size() << " plane to " << l.dir("plane").string() << "\n";
}

void cmd_grid_study(const RunConfig& cfg, const Layout& l, std::vector<std::string> paths) {
    const Dataset ds = load_dataset(l);
    const Mlp mlp(cfg.arch);
    if (paths.empty()) {
        const SweepManifest m = load_sweep(l.manifest());
        auto ok = m.successful();
        std::stable_sort(ok.begin(), ok.end(), [](const SweepEntry* a, const SweepEntry* b) {
            return a->config.learning_rate < b->config.learning_rate;
        });
        for (const SweepEntry* e : ok) paths.push_back(m.resolve(e->path).string());
    }
    std::vector<Checkpoint> models;
    json names = json::array();
    for (const auto& p : paths) {
        models.push_back(load_input(p));
        names.push_back(fs::path(p).filename().string());
    }
    const Split& split = ds.split(parse_split_name(cfg.analysis.split));
    const GridStudy g = grid_endpoint_study(mlp, models, split);
    write_text_atomic(l.dir("grid_study") / "gain.csv", g.csv());
    write_json(l.dir("grid_study") / "grid_study.json",
               json{{"split", cfg.analysis.split}, {"checkpoints", names}, {"accuracy", g.accuracy}});
    std::cout << "grid study over " << models.size() << " models written to " << l.dir("grid_study").string() << "\n";
}

struct ApproxArgs {
    std::vector<std::string> pair;
    std::string beta_mode;
};

void cmd_approx(const RunConfig& cfg, const Layout& l, const ApproxArgs& a) {
    const Dataset ds = load_dataset(l);
    const Mlp mlp(cfg.arch);
    const auto& spec = cfg.analysis.approx;
    std::vector<ModelPair> pairs;
    if (!a.pair.empty()) {
        pairs.push_back({"pair", load_input(a.pair.at(0)), load_input(a.pair.at(1)), false});
    } else {
        const Checkpoint theta0 = load_theta0(l);
        const auto grid = train_approx_grid(mlp, theta0, spec, ds);
        for (const auto& g : grid) {
            char name[64];
            std::snprintf(name, sizeof(name), "lr%d_aug%d_seed%d.soupckpt", g.lr_level, g.aug_level, g.seed_level);
            save_checkpoint(g.theta, l.dir("approx") / "models" / name);
        }
        pairs = build_approx_pairs(theta0, grid);
    }
    std::vector<NamedSplit> splits;
    for (const auto& s : spec.splits) splits.push_back({s, &ds.split(parse_split_name(s))});
    const auto alphas = cfg.analysis.alpha_grid();

    std::vector<BetaMode> modes{BetaMode::CalibrateSoup, BetaMode::Fixed1};
    if (!a.beta_mode.empty()) modes = {parse_beta_mode(a.beta_mode)};
    json summary{{"pairs", pairs.size()}, {"alphas", alphas}, {"splits", spec.splits}};
    for (auto mode : modes) {
        const auto rep = approx_validation_report(mlp, pairs, alphas, splits, mode, cfg.analysis.h_alpha);
        const std::string tag(to_string(mode));
        write_text_atomic(l.dir("approx") / ("records_" + tag + ".csv"), rep.csv());
        summary[tag] = rep.summary_json();
    }

    std::ostringstream oracle;
    oracle << "pair_id,alpha,max_residual,scale,activation_flip\n";
    double worst = 0.0;
    std::size_t flips = 0, evaluated = 0;
    for (const auto& p : pairs) {
        for (double alpha : alphas) {
            if (alpha <= 0.0 || alpha >= 1.0) continue;
            const auto r = integral_oracle(mlp, p.theta0, p.theta1, alpha, ds.val.features);
            oracle << p.id << "," << alpha << "," << r.max_residual << "," << r.scale << ","
                   << (r.activation_flip ? 1 : 0) << "\n";
            ++evaluated;
            if (r.activation_flip) ++flips;
            else worst = std::max(worst, r.max_residual / std::max(r.scale, 1e-12));
        }
    }
    write_text_atomic(l.dir("approx") / "oracle.csv", oracle.str());
    // ReLU kinks along the path break the smooth integral form; only flip-free paths are summarized.
    summary["oracle"] = {{"evaluated", evaluated}, {"with_activation_flip", flips},
                         {"max_relative_residual_without_flip", worst}};
    write_json(l.dir("approx") / "summary.json", summary);
    std::cout << summary.dump(2) << "\n";
}

void cmd_calibrate(const RunConfig& cfg, const Layout& l, const std::string& checkpoint, const std::string& manifest) {
    const Dataset ds = load_dataset(l);
    const Split& eval_split = ds.split(parse_split_name(cfg.analysis.split));
    LogitBatch fit, eval;
    std::string name;
    if (!checkpoint.empty()) {
        const Mlp mlp(cfg.arch);
        const Checkpoint theta = load_input(checkpoint);
        fit = mlp.forward(theta, ds.val.features);
        eval = mlp.forward(theta, eval_split.features);
        name = fs::path(checkpoint).stem().string();
    } else {
        const SweepManifest m = load_sweep(manifest.empty() ? l.manifest() : fs::path(manifest));
        const Mlp mlp(m.arch);
        const Members mem = load_members(m, false);
        fit = logit_ensemble(mlp, mem.models, ds.val.features);
        eval = logit_ensemble(mlp, mem.models, eval_split.features);
        name = "ensemble_uniform";
    }
    const CalibrationReport r = calibrate(fit, ds.val.labels, eval, eval_split.labels, cfg.analysis.ece_bins);
    json rep{{"target", name},          {"fit_split", "val"},           {"eval_split", cfg.analysis.split},
             {"beta", r.beta},          {"flat", r.flat},               {"fit_nll_before", r.fit_nll_before},
             {"fit_nll_after", r.fit_nll_after}, {"nll_before", r.nll_before}, {"nll_after", r.nll_after},
             {"ece_before", r.ece_before}, {"ece_after", r.ece_after}, {"error_before", r.error_before},
             {"error_after", r.error_after}, {"bins", cfg.analysis.ece_bins}};
    write_json(l.dir("calibrate") / (name + ".json"), rep);
    write_text_atomic(l.dir("calibrate") / (name + "_bins.csv"), r.bins_csv());
    std::cout << r.summary_line() << "\n";
}

std::vector<fs::path> json_files(const fs::path& dir) {
    std::set<fs::path> found;
    if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".json") found.insert(e.path());
        }
    }
    return {found.begin(), found.end()};
}

void cmd_report(const Layout& l) {
    json rep = json::object();
    std::ostringstream md;
    md << "# soupkit report\n\n";
    if (fs::exists(l.pretrain_report())) {
        const json p = read_json(l.pretrain_report());
        rep["pretrain"] = p;
        md << "Pre-trained initialization: val accuracy " << fmt(p["eval"]["val"]["accuracy"].get<double>())
           << ", test " << fmt(p["eval"]["test"]["accuracy"].get<double>()) << ", shift "
           << fmt(p["eval"]["shift"]["accuracy"].get<double>()) << ".\n\n";
    }
    if (fs::exists(l.manifest())) {
        const SweepManifest m = load_manifest(l.manifest());
        const auto ok = m.successful();
        double best = -1.0;
        std::size_t best_index = 0;
        for (const SweepEntry* e : ok) {
            if (e->val_accuracy > best) {
                best = e->val_accuracy;
                best_index = e->index;
            }
        }
        rep["sweep"] = {{"runs", m.entries.size()}, {"succeeded", ok.size()}, {"best_index", best_index},
                        {"best_val_accuracy", best}};
        md << "Sweep: " << ok.size() << "/" << m.entries.size() << " runs succeeded; best val accuracy "
           << fmt(best) << " (model " << best_index << ").\n\n";
    }

    json rows = json::array();
    auto add_rows = [&](const char* kind, const fs::path& dir) {
        for (const auto& f : json_files(dir)) {
            const json j = read_json(f);
            if (!j.contains("eval")) continue;
            json row{{"kind", kind}, {"name", f.stem().string()}, {"eval", j["eval"]}};
            if (j.contains("best_individual")) row["best_individual"] = j["best_individual"];
            rows.push_back(row);
        }
    };
    add_rows("soup", l.dir("soups"));
    add_rows("ensemble", l.dir("ensembles"));
    if (!rows.empty()) {
        rep["methods"] = rows;
        md << "| method | val acc | test acc | shift acc | test ECE |\n|---|---|---|---|---|\n";
        for (const auto& r : rows) {
            const auto& e = r["eval"];
            md << "| " << r["kind"].get<std::string>() << " " << r["name"].get<std::string>() << " | "
               << fmt(e["val"]["accuracy"].get<double>()) << " | " << fmt(e["test"]["accuracy"].get<double>()) << " | "
               << fmt(e["shift"]["accuracy"].get<double>()) << " | " << fmt(e["test"]["ece"].get<double>()) << " |\n";
        }
        md << "\n";
    }

    json cals = json::object();
    for (const auto& f : json_files(l.dir("calibrate"))) cals[f.stem().string()] = read_json(f);
    if (!cals.empty()) {
        rep["calibration"] = cals;
        md << "Calibration (fit on val):\n\n";
        for (const auto& [name, c] : cals.items()) {
            md << "- " << name << ": beta " << fmt(c["beta"].get<double>()) << ", ECE "
               << fmt(c["ece_before"].get<double>()) << " -> " << fmt(c["ece_after"].get<double>()) << "\n";
        }
        md << "\n";
    }
    json evals = json::object();
    for (const auto& f : json_files(l.dir("eval"))) evals[f.stem().string()] = read_json(f);
    if (!evals.empty()) rep["eval"] = evals;
    if (fs::exists(l.dir("approx") / "summary.json")) {
        const json a = read_json(l.dir("approx") / "summary.json");
        rep["approx"] = a;
        md << "Soup-vs-ensemble approximation over " << a["pairs"].get<std::size_t>() << " pairs:\n\n";
        for (const char* mode : {"calibrate-soup", "fixed1"}) {
            if (!a.contains(mode)) continue;
            md << "- beta " << mode << ": " << a[mode].dump() << "\n";
        }
        md << "\n";
    }
    write_json(l.dir("report") / "report.json", rep);
    write_text_atomic(l.dir("report") / "report.md", md.str());
    std::cout << "wrote " << (l.dir("report") / "report.json").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"soupkit: weight-space merging of fine-tuned checkpoints"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("-c,--config", g.config_path, "Run config (JSON)");
    app.add_option("-w,--workdir", g.workdir, "Override paths.workdir");
    app.add_option("--set", g.overrides, "Override a config value: dotted.path=value")->take_all();

    std::vector<std::pair<CLI::App*, std::function<void(const RunConfig&, const Layout&)>>> commands;

    auto* datagen = app.add_subcommand("datagen", "Generate the synthetic dataset");
    commands.emplace_back(datagen, [](const RunConfig& c, const Layout& l) { cmd_datagen(c, l); });

    std::map<std::string, std::string> pre_flags;
    auto* pre = app.add_subcommand("pretrain", "Train the shared initialization");
    hyper_flags(pre, pre_flags);
    commands.emplace_back(pre, [](const RunConfig& c, const Layout& l) { cmd_pretrain(c, l); });

    std::map<std::string, std::string> sweep_flags;
    int threads = 0;
    auto* sweep = app.add_subcommand("sweep", "Fine-tune a hyperparameter sweep from the initialization");
    hyper_flags(sweep, sweep_flags);
    sweep->add_option("--threads", threads, "Worker threads (default: SOUPKIT_THREADS)");
    commands.emplace_back(sweep, [&](const RunConfig& c, const Layout& l) { cmd_sweep(c, l, threads); });

    SoupArgs soup_args;
    auto* soup = app.add_subcommand("soup", "Build a soup from the sweep");
    soup->add_option("recipe", soup_args.recipe, "uniform | greedy | learned")
        ->required()
        ->check(CLI::IsMember({"uniform", "greedy", "learned"}));
    soup->add_option("--manifest", soup_args.manifest, "Sweep manifest (default: <workdir>/sweep/manifest.json)");
    soup->add_flag("--ema", soup_args.ema, "Use the EMA checkpoints");
    soup->add_option("-o,--out", soup_args.out, "Output checkpoint path");
    commands.emplace_back(soup, [&](const RunConfig& c, const Layout& l) { cmd_soup(c, l, soup_args); });

    std::string ens_recipe, ens_manifest;
    bool ens_ema = false;
    auto* ens = app.add_subcommand("ensemble", "Evaluate a logit ensemble of the sweep");
    ens->add_option("recipe", ens_recipe, "uniform | greedy")->required()->check(CLI::IsMember({"uniform", "greedy"}));
    ens->add_option("--manifest", ens_manifest, "Sweep manifest");
    ens->add_flag("--ema", ens_ema, "Use the EMA checkpoints");
    commands.emplace_back(ens, [&](const RunConfig&, const Layout& l) { cmd_ensemble(l, ens_recipe, ens_manifest, ens_ema); });

    std::string eval_path, eval_split = "all", eval_out;
    std::optional<double> eval_beta;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("checkpoint", eval_path, "Checkpoint file")->required();
    ev->add_option("--split", eval_split, "val | test | shift | train | all");
    ev->add_option("--beta", eval_beta, "Inverse temperature applied to the logits");
    ev->add_option("-o,--out", eval_out, "Report path (default: <workdir>/eval/<name>.json)");
    commands.emplace_back(ev, [&](const RunConfig& c, const Layout& l) {
        cmd_eval(c, l, eval_path, eval_split, eval_beta, eval_out);
    });

    PairArgs interp_args;
    auto* interp = app.add_subcommand("interp", "Interpolation curve between two checkpoints");
    interp->add_option("--theta0", interp_args.theta0, "Start (default: pre-trained initialization)");
    interp->add_option("--theta1", interp_args.theta1, "End (default: best sweep model by val)");
    interp->add_option("--model", interp_args.model, "End point as a sweep index");
    commands.emplace_back(interp, [&](const RunConfig& c, const Layout& l) { cmd_interp(c, l, interp_args); });

    PairArgs plane_args;
    auto* plane = app.add_subcommand("plane", "Metric over the plane through three checkpoints");
    plane->add_option("--theta0", plane_args.theta0, "Origin (default: pre-trained initialization)");
    plane->add_option("--theta1", plane_args.theta1, "First direction (default: best sweep model)");
    plane->add_option("--theta2", plane_args.theta2, "Second direction (default: second-best sweep model)");
    commands.emplace_back(plane, [&](const RunConfig& c, const Layout& l) { cmd_plane(c, l, plane_args); });

    std::vector<std::string> grid_paths;
    auto* grid = app.add_subcommand("grid-study", "Average-vs-best study along one hyperparameter axis");
    grid->add_option("checkpoints", grid_paths, "Checkpoints in axis order (default: sweep sorted by learning rate)");
    commands.emplace_back(grid, [&](const RunConfig& c, const Layout& l) { cmd_grid_study(c, l, grid_paths); });

    ApproxArgs approx_args;
    auto* approx = app.add_subcommand("approx", "Soup-vs-ensemble approximation study");
    approx->add_option("--pair", approx_args.pair, "Two checkpoints instead of the trained construction")
        ->expected(2);
    approx->add_option("--beta-mode", approx_args.beta_mode, "calibrate-soup | fixed1 (default: both)");
    commands.emplace_back(approx, [&](const RunConfig& c, const Layout& l) { cmd_approx(c, l, approx_args); });

    std::string cal_ckpt, cal_manifest;
    auto* cal = app.add_subcommand("calibrate", "Temperature-scale a model or the uniform ensemble");
    cal->add_option("--checkpoint", cal_ckpt, "Single checkpoint (default: uniform ensemble of the sweep)");
    cal->add_option("--manifest", cal_manifest, "Sweep manifest");
    commands.emplace_back(cal, [&](const RunConfig& c, const Layout& l) { cmd_calibrate(c, l, cal_ckpt, cal_manifest); });

    auto* report = app.add_subcommand("report", "Aggregate artifacts into report.json and report.md");
    commands.emplace_back(report, [](const RunConfig&, const Layout& l) { cmd_report(l); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail("cli", 2, e.what());
    }

    try {
        std::vector<std::string> extra = prefixed(pre_flags, "pretrain.");
        for (auto& s : prefixed(sweep_flags, "sweep.random.base.")) extra.push_back(s);
        for (auto& s : prefixed(sweep_flags, "sweep.grid.base.")) extra.push_back(s);
        const RunConfig cfg = build_config(g, extra);
        const Layout layout{cfg.workdir};
        for (auto& [sub, fn] : commands) {
            if (sub->parsed()) fn(cfg, layout);
        }
    } catch (const Error& e) {
        return fail(to_string(e.kind()), exit_code(e.kind()), e.what());
    } catch (const fs::filesystem_error& e) {
        return fail("io", 7, e.what());
    } catch (const std::exception& e) {
        return fail("internal", 1, e.what());
    }
    return 0;
}
