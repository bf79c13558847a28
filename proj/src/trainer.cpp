// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "soupkit/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <numbers>
#include <thread>

#include "json_util.hpp"
#include "soupkit/checkpoint_io.hpp"
#include "soupkit/error.hpp"
#include "soupkit/optim.hpp"

namespace soupkit {

using nlohmann::json;

std::string_view to_string(OptimizerKind kind) {
    return kind == OptimizerKind::Sgd ? "sgd" : "adamw";
}

std::string_view to_string(ScheduleKind kind) {
    return kind == ScheduleKind::Constant ? "constant" : "cosine";
}

namespace {

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adamw") return OptimizerKind::AdamW;
    throw Error(ErrorKind::Config, "unknown optimizer '" + s + "'");
}

ScheduleKind parse_schedule(const std::string& s) {
    if (s == "constant") return ScheduleKind::Constant;
    if (s == "cosine") return ScheduleKind::Cosine;
    throw Error(ErrorKind::Config, "unknown schedule '" + s + "'");
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void HyperConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, "hyper config: " + m); };
    for (double v : {learning_rate, weight_decay, label_smoothing, mixup_alpha, input_noise_std, momentum}) {
        if (!std::isfinite(v)) fail("all fields must be finite");
    }
    if (learning_rate < 0.0) fail("learning_rate must be >= 0");
    if (weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (epochs < 1) fail("epochs must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) fail("label_smoothing must be in [0, 1)");
    if (mixup_alpha < 0.0) fail("mixup_alpha must be >= 0");
    if (input_noise_std < 0.0) fail("input_noise_std must be >= 0");
    if (ema_decay && !(*ema_decay >= 0.0 && *ema_decay <= 1.0)) fail("ema_decay must be in [0, 1]");
    if (sam_rho && !(std::isfinite(*sam_rho) && *sam_rho >= 0.0)) fail("sam_rho must be >= 0");
}

HyperConfig default_pretrain_config() {
    HyperConfig h;
    h.learning_rate = 3e-3;
    h.epochs = 20;
    h.batch_size = 64;
    return h;
}

json to_json(const HyperConfig& h) {
    json j{{"learning_rate", h.learning_rate},
           {"weight_decay", h.weight_decay},
           {"epochs", h.epochs},
           {"batch_size", h.batch_size},
           {"seed", h.seed},
           {"label_smoothing", h.label_smoothing},
           {"mixup_alpha", h.mixup_alpha},
           {"input_noise_std", h.input_noise_std},
           {"optimizer", std::string(to_string(h.optimizer))},
           {"schedule", std::string(to_string(h.schedule))},
           {"momentum", h.momentum}};
    j["ema_decay"] = h.ema_decay ? json(*h.ema_decay) : json(nullptr);
    j["sam_rho"] = h.sam_rho ? json(*h.sam_rho) : json(nullptr);
    return j;
}

namespace {

void read_hyper_fields(detail::StrictObject& obj, HyperConfig& h) {
    obj.read("learning_rate", h.learning_rate);
    obj.read("weight_decay", h.weight_decay);
    obj.read("epochs", h.epochs);
    obj.read("batch_size", h.batch_size);
    obj.read("seed", h.seed);
    obj.read("label_smoothing", h.label_smoothing);
    obj.read("mixup_alpha", h.mixup_alpha);
    obj.read("input_noise_std", h.input_noise_std);
    obj.read("momentum", h.momentum);
    std::string opt(to_string(h.optimizer)), sched(to_string(h.schedule));
    obj.read("optimizer", opt);
    obj.read("schedule", sched);
    h.optimizer = parse_optimizer(opt);
    h.schedule = parse_schedule(sched);
    if (const json* e = obj.child("ema_decay")) {
        if (e->is_null()) h.ema_decay.reset();
        else if (e->is_number()) h.ema_decay = e->get<double>();
        else throw Error(ErrorKind::Config, obj.context() + ".ema_decay: expected number or null");
    }
    if (const json* s = obj.child("sam_rho")) {
        if (s->is_null()) h.sam_rho.reset();
        else if (s->is_number()) h.sam_rho = s->get<double>();
        else throw Error(ErrorKind::Config, obj.context() + ".sam_rho: expected number or null");
    }
}

}  // namespace

HyperConfig hyper_config_from_json(const json& j) {
    HyperConfig h;
    detail::StrictObject obj(j, "hyper");
    read_hyper_fields(obj, h);
    obj.finish();
    h.validate();
    return h;
}

std::string config_digest(const HyperConfig& h) {
    const std::string text = to_json(h).dump();
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

double scheduled_lr(const HyperConfig& h, long step, long total_steps) {
    if (h.schedule == ScheduleKind::Constant || total_steps <= 0) return h.learning_rate;
    return h.learning_rate * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

MixupResult mixup_batch(const FeatureMatrix& x, const Matrix<double>& targets, double alpha, Rng& rng) {
    if (alpha < 0.0) throw Error(ErrorKind::InvalidArgument, "mixup alpha must be >= 0");
    MixupResult out{x, targets, 1.0};
    if (alpha == 0.0) return out;
    out.lambda = rng.beta(alpha, alpha);
    const auto perm = rng.permutation(x.rows());
    const double lam = out.lambda;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            out.x(r, c) = static_cast<float>(lam * x(r, c) + (1.0 - lam) * x(perm[r], c));
        }
        for (std::size_t c = 0; c < targets.cols(); ++c) {
            out.targets(r, c) = lam * targets(r, c) + (1.0 - lam) * targets(perm[r], c);
        }
    }
    return out;
}

namespace {

double soft_loss_and_grad(const LogitModel& model, std::span<const double> params, const FeatureMatrix& x,
                          const Matrix<double>& targets, std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    const double total = model.value_and_grad(
        params, x,
        [&](std::size_t r, std::span<const double> f, std::span<double> df) {
            const double l = soft_cross_entropy(f, targets.row(r), 1.0, df);
            for (auto& v : df) v *= inv_n;
            return l;
        },
        grad);
    return total * inv_n;
}

double mean_train_loss(const LogitModel& model, std::span<const double> params, const Split& data, double smoothing) {
    return loss_ce(model.logits(params, data.features), data.labels, smoothing);
}

}  // namespace

TrainResult train(const LogitModel& model, const Checkpoint& init, const HyperConfig& h, const Split& data) {
    h.validate();
    if (data.size() == 0) throw Error(ErrorKind::EmptyInput, "training split is empty");
    std::vector<double> params = model.to_flat(init);
    const std::size_t P = params.size();
    const std::size_t N = data.size();
    const std::size_t D = data.features.cols();
    const int C = model.num_classes();
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(h.batch_size), N);
    const long steps_per_epoch = static_cast<long>((N + batch - 1) / batch);
    const long total_steps = steps_per_epoch * h.epochs;

    TrainResult result;
    result.initial_train_loss = mean_train_loss(model, params, data, h.label_smoothing);

    std::optional<AdamW> adamw;
    std::optional<Sgd> sgd;
    if (h.optimizer == OptimizerKind::AdamW) adamw.emplace(P, AdamWConfig{h.learning_rate, h.weight_decay});
    else sgd.emplace(P, h.momentum, h.weight_decay);

    std::optional<std::vector<double>> ema;
    if (h.ema_decay) ema = params;
    const bool use_sam = h.sam_rho && *h.sam_rho > 0.0;

    Rng aug(derive_seed({h.seed, 2}));
    std::vector<double> g(P), perturbed(P);
    long step = 0;
    for (int epoch = 0; epoch < h.epochs; ++epoch) {
        Rng order_rng(derive_seed({h.seed, static_cast<std::uint64_t>(epoch), 1}));
        const auto order = order_rng.permutation(N);
        for (std::size_t start = 0; start < N; start += batch, ++step) {
            const std::size_t rows = std::min(batch, N - start);
            FeatureMatrix xb(rows, D);
            Matrix<double> tb(rows, static_cast<std::size_t>(C));
            for (std::size_t j = 0; j < rows; ++j) {
                const std::size_t src = order[start + j];
                auto xr = data.features.row(src);
                for (std::size_t d = 0; d < D; ++d) {
                    const double noise = h.input_noise_std > 0.0 ? h.input_noise_std * aug.normal() : 0.0;
                    xb(j, d) = static_cast<float>(xr[d] + noise);
                }
                const auto t = smoothed_target(data.labels[src], C, h.label_smoothing);
                std::copy(t.begin(), t.end(), tb.row(j).begin());
            }
            if (h.mixup_alpha > 0.0) {
                auto mixed = mixup_batch(xb, tb, h.mixup_alpha, aug);
                xb = std::move(mixed.x);
                tb = std::move(mixed.targets);
            }

            double loss = soft_loss_and_grad(model, params, xb, tb, g);
            if (!std::isfinite(loss)) {
                throw Error(ErrorKind::Divergence, "training diverged at step " + std::to_string(step) +
                                                       " (epoch " + std::to_string(epoch) + ")");
            }
            if (use_sam) {
                double gn2 = 0.0;
                for (double v : g) gn2 += v * v;
                const double gn = std::sqrt(gn2);
                if (gn > 0.0) {
                    const double scale = *h.sam_rho / gn;
                    for (std::size_t i = 0; i < P; ++i) perturbed[i] = params[i] + scale * g[i];
                    loss = soft_loss_and_grad(model, perturbed, xb, tb, g);
                    if (!std::isfinite(loss)) {
                        throw Error(ErrorKind::Divergence, "training diverged at step " + std::to_string(step) +
                                                               " (SAM ascent point)");
                    }
                }
            }
            const double lr = scheduled_lr(h, step, total_steps);
            if (adamw) adamw->step(params, g, lr);
            else sgd->step(params, g, lr);

            if (ema) {
                const double d = *h.ema_decay;
                for (std::size_t i = 0; i < P; ++i) (*ema)[i] = d * (*ema)[i] + (1.0 - d) * params[i];
            }
        }
    }

    result.steps = step;
    result.final_train_loss = mean_train_loss(model, params, data, h.label_smoothing);
    if (!std::isfinite(result.final_train_loss)) {
        throw Error(ErrorKind::Divergence, "training diverged by the final step " + std::to_string(step));
    }
    result.model = model.to_checkpoint(params);
    if (ema) result.ema = model.to_checkpoint(*ema);
    if (!all_finite(result.model) || (result.ema && !all_finite(*result.ema))) {
        throw Error(ErrorKind::Divergence, "parameters overflow float32 after step " + std::to_string(step));
    }
    return result;
}

TrainResult pretrain(const Mlp& model, const Dataset& data, const HyperConfig& cfg) {
    const Checkpoint init = model.initialize(derive_seed({cfg.seed, 0}));
    TrainResult r = train(model, init, cfg, data.train);
    r.model.meta["kind"] = "pretrain";
    r.model.meta["config"] = to_json(cfg).dump();
    r.model.meta["config_digest"] = config_digest(cfg);
    r.model.meta["seed"] = std::to_string(cfg.seed);
    return r;
}

FinetuneResult finetune(const LogitModel& model, const Checkpoint& theta0, const HyperConfig& h, const Dataset& data) {
    TrainResult tr = train(model, theta0, h, data.train);
    FinetuneResult out;
    out.final_train_loss = tr.final_train_loss;
    auto stamp = [&](Checkpoint& c, double acc, const char* kind) {
        c.meta["kind"] = kind;
        c.meta["config"] = to_json(h).dump();
        c.meta["config_digest"] = config_digest(h);
        c.meta["seed"] = std::to_string(h.seed);
        c.meta["val_accuracy"] = format_double(acc);
    };
    out.model = std::move(tr.model);
    out.val_accuracy = evaluate(model, out.model, data.val).accuracy;
    stamp(out.model, out.val_accuracy, "finetune");
    if (tr.ema) {
        out.ema = std::move(tr.ema);
        out.ema_val_accuracy = evaluate(model, *out.ema, data.val).accuracy;
        stamp(*out.ema, *out.ema_val_accuracy, "finetune_ema");
    }
    return out;
}

std::vector<const SweepEntry*> SweepManifest::successful() const {
    std::vector<const SweepEntry*> out;
    for (const auto& e : entries) {
        if (e.ok) out.push_back(&e);
    }
    return out;
}

json to_json(const SweepManifest& m) {
    json entries = json::array();
    for (const auto& e : m.entries) {
        json j{{"index", e.index}, {"config", to_json(e.config)}, {"ok", e.ok}};
        if (e.ok) {
            j["path"] = e.path;
            j["val_accuracy"] = e.val_accuracy;
            if (e.ema_path) {
                j["ema_path"] = *e.ema_path;
                j["ema_val_accuracy"] = *e.ema_val_accuracy;
            }
        } else {
            j["error"] = e.error;
        }
        entries.push_back(std::move(j));
    }
    return json{{"arch", to_json(m.arch)}, {"entries", std::move(entries)}};
}

void save_manifest(const SweepManifest& m, const std::filesystem::path& path) {
    write_text_atomic(path, to_json(m).dump(2) + "\n");
}

SweepManifest load_manifest(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedFile, path.string() + ": " + e.what());
    }
    SweepManifest m;
    m.root = path.parent_path();
    try {
        m.arch = arch_spec_from_json(j.at("arch"));
        for (const auto& je : j.at("entries")) {
            SweepEntry e;
            e.index = je.at("index").get<std::size_t>();
            e.config = hyper_config_from_json(je.at("config"));
            e.ok = je.at("ok").get<bool>();
            if (e.ok) {
                e.path = je.at("path").get<std::string>();
                e.val_accuracy = je.at("val_accuracy").get<double>();
                if (je.contains("ema_path")) {
                    e.ema_path = je.at("ema_path").get<std::string>();
                    e.ema_val_accuracy = je.at("ema_val_accuracy").get<double>();
                }
            } else {
                e.error = je.value("error", "");
            }
            m.entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedFile, path.string() + ": " + e.what());
    }
    return m;
}

int default_thread_count() {
    if (const char* env = std::getenv("SOUPKIT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

SweepManifest run_sweep(const Mlp& model, const Checkpoint& theta0, const std::vector<HyperConfig>& configs,
                        const Dataset& data, const std::filesystem::path& out_dir, int threads) {
    if (configs.empty()) throw Error(ErrorKind::EmptyInput, "sweep needs at least one config");
    std::filesystem::create_directories(out_dir);
    SweepManifest m;
    m.arch = model.arch();
    m.root = out_dir;
    m.entries.resize(configs.size());

    auto run_one = [&](std::size_t i) {
        SweepEntry& e = m.entries[i];
        e.index = i;
        e.config = configs[i];
        char name[64];
        std::snprintf(name, sizeof(name), "model_%03zu.soupckpt", i);
        try {
            auto r = finetune(model, theta0, configs[i], data);
            save_checkpoint(r.model, out_dir / name);
            e.path = name;
            e.val_accuracy = r.val_accuracy;
            if (r.ema) {
                std::snprintf(name, sizeof(name), "model_%03zu_ema.soupckpt", i);
                save_checkpoint(*r.ema, out_dir / name);
                e.ema_path = name;
                e.ema_val_accuracy = r.ema_val_accuracy;
            }
        } catch (const std::exception& ex) {
            e.ok = false;
            e.error = ex.what();
        }
    };

    const int nthreads = std::max(1, std::min(threads > 0 ? threads : default_thread_count(),
                                              static_cast<int>(configs.size())));
    if (nthreads == 1) {
        for (std::size_t i = 0; i < configs.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < configs.size(); i = next++) run_one(i);
            });
        }
        for (auto& th : pool) th.join();
    }
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

json to_json(const RandomSearchSpace& s) {
    return json{{"lr_exp_min", s.lr_exp_min},           {"lr_exp_max", s.lr_exp_max},
                {"wd_exp_min", s.wd_exp_min},           {"wd_exp_max", s.wd_exp_max},
                {"smoothing_zero_prob", s.smoothing_zero_prob}, {"smoothing_max", s.smoothing_max},
                {"epochs_min", s.epochs_min},           {"epochs_max", s.epochs_max},
                {"mixup_zero_prob", s.mixup_zero_prob}, {"mixup_max", s.mixup_max},
                {"noise_zero_prob", s.noise_zero_prob}, {"noise_max", s.noise_max},
                {"base", to_json(s.base)}};
}

RandomSearchSpace random_search_from_json(const json& j) {
    RandomSearchSpace s;
    detail::StrictObject obj(j, "sweep.random");
    obj.read("lr_exp_min", s.lr_exp_min);
    obj.read("lr_exp_max", s.lr_exp_max);
    obj.read("wd_exp_min", s.wd_exp_min);
    obj.read("wd_exp_max", s.wd_exp_max);
    obj.read("smoothing_zero_prob", s.smoothing_zero_prob);
    obj.read("smoothing_max", s.smoothing_max);
    obj.read("epochs_min", s.epochs_min);
    obj.read("epochs_max", s.epochs_max);
    obj.read("mixup_zero_prob", s.mixup_zero_prob);
    obj.read("mixup_max", s.mixup_max);
    obj.read("noise_zero_prob", s.noise_zero_prob);
    obj.read("noise_max", s.noise_max);
    if (const json* b = obj.child("base")) s.base = hyper_config_from_json(*b);
    obj.finish();
    if (s.lr_exp_min > s.lr_exp_max || s.wd_exp_min > s.wd_exp_max || s.epochs_min > s.epochs_max ||
        s.epochs_min < 1) {
        throw Error(ErrorKind::Config, "sweep.random: inverted or invalid range");
    }
    return s;
}

std::vector<HyperConfig> sample_random_search(const RandomSearchSpace& space, std::size_t count,
                                              std::uint64_t master_seed) {
    Rng rng(master_seed);
    std::vector<HyperConfig> out;
    for (std::size_t i = 0; i < count; ++i) {
        HyperConfig h = space.base;
        h.learning_rate = std::pow(10.0, -rng.uniform(space.lr_exp_min, space.lr_exp_max));
        h.weight_decay = std::pow(10.0, -rng.uniform(space.wd_exp_min, space.wd_exp_max));
        const bool smooth_off = rng.uniform() < space.smoothing_zero_prob;
        const double smooth = rng.uniform(0.0, space.smoothing_max);
        h.label_smoothing = smooth_off ? 0.0 : smooth;
        h.epochs = space.epochs_min +
                   static_cast<int>(rng.below(static_cast<std::uint64_t>(space.epochs_max - space.epochs_min + 1)));
        const bool mix_off = rng.uniform() < space.mixup_zero_prob;
        const double mix = rng.uniform(0.0, space.mixup_max);
        h.mixup_alpha = mix_off ? 0.0 : mix;
        const bool noise_off = rng.uniform() < space.noise_zero_prob;
        const double noise = rng.uniform(0.0, space.noise_max);
        h.input_noise_std = noise_off ? 0.0 : noise;
        h.seed = rng.next();
        h.validate();
        out.push_back(h);
    }
    return out;
}

json to_json(const GridSpec& g) {
    return json{{"learning_rate", g.learning_rate}, {"weight_decay", g.weight_decay},
                {"label_smoothing", g.label_smoothing}, {"mixup_alpha", g.mixup_alpha},
                {"input_noise_std", g.input_noise_std}, {"epochs", g.epochs},
                {"seed", g.seed}, {"base", to_json(g.base)}};
}

GridSpec grid_spec_from_json(const json& j) {
    GridSpec g;
    detail::StrictObject obj(j, "sweep.grid");
    obj.read("learning_rate", g.learning_rate);
    obj.read("weight_decay", g.weight_decay);
    obj.read("label_smoothing", g.label_smoothing);
    obj.read("mixup_alpha", g.mixup_alpha);
    obj.read("input_noise_std", g.input_noise_std);
    obj.read("epochs", g.epochs);
    obj.read("seed", g.seed);
    if (const json* b = obj.child("base")) g.base = hyper_config_from_json(*b);
    obj.finish();
    return g;
}

std::vector<HyperConfig> expand_grid(const GridSpec& grid) {
    auto or_base = [](const auto& values, auto base) {
        using T = std::decay_t<decltype(base)>;
        return values.empty() ? std::vector<T>{base} : std::vector<T>(values.begin(), values.end());
    };
    const auto lrs = or_base(grid.learning_rate, grid.base.learning_rate);
    const auto wds = or_base(grid.weight_decay, grid.base.weight_decay);
    const auto eps = or_base(grid.epochs, grid.base.epochs);
    const auto sms = or_base(grid.label_smoothing, grid.base.label_smoothing);
    const auto mxs = or_base(grid.mixup_alpha, grid.base.mixup_alpha);
    const auto nss = or_base(grid.input_noise_std, grid.base.input_noise_std);
    const auto sds = or_base(grid.seed, grid.base.seed);
    std::vector<HyperConfig> out;
    for (double lr : lrs)
        for (double wd : wds)
            for (int ep : eps)
                for (double sm : sms)
                    for (double mx : mxs)
                        for (double ns : nss)
                            for (auto sd : sds) {
                                HyperConfig h = grid.base;
                                h.learning_rate = lr;
                                h.weight_decay = wd;
                                h.epochs = ep;
                                h.label_smoothing = sm;
                                h.mixup_alpha = mx;
                                h.input_noise_std = ns;
                                h.seed = sd;
                                h.validate();
                                out.push_back(h);
                            }
    return out;
}

}  // namespace soupkit
