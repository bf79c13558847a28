// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "soupkit/tinynet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json_util.hpp"
#include "soupkit/ensembles.hpp"
#include "soupkit/error.hpp"
#include "soupkit/rng.hpp"

namespace soupkit {

using nlohmann::json;

std::size_t LogitModel::num_params() const {
    std::size_t n = 0;
    for (const auto& p : layout()) n += static_cast<std::size_t>(element_count(p.shape));
    return n;
}

std::vector<double> LogitModel::to_flat(const Checkpoint& ckpt) const {
    const auto& specs = layout();
    if (ckpt.num_tensors() != specs.size()) {
        throw Error(ErrorKind::ShapeMismatch, "checkpoint has " + std::to_string(ckpt.num_tensors()) +
                                                  " tensors, architecture expects " + std::to_string(specs.size()));
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& t = ckpt.tensors()[i];
        if (t.name != specs[i].name || t.shape != specs[i].shape) {
            throw Error(ErrorKind::ShapeMismatch, "tensor " + std::to_string(i) + " is '" + t.name + "' " +
                                                      shape_to_string(t.shape) + ", expected '" + specs[i].name +
                                                      "' " + shape_to_string(specs[i].shape));
        }
    }
    return flatten(ckpt);
}

Checkpoint LogitModel::to_checkpoint(std::span<const double> params) const {
    if (params.size() != num_params()) {
        throw Error(ErrorKind::ShapeMismatch, "parameter vector has wrong length");
    }
    Checkpoint out;
    std::size_t offset = 0;
    for (const auto& spec : layout()) {
        const auto n = static_cast<std::size_t>(element_count(spec.shape));
        std::vector<float> data(n);
        for (std::size_t e = 0; e < n; ++e) data[e] = static_cast<float>(params[offset + e]);
        offset += n;
        out.add(Tensor(spec.name, spec.shape, std::move(data)));
    }
    return out;
}

LogitBatch LogitModel::forward(const Checkpoint& theta, const FeatureMatrix& x) const {
    const auto params = to_flat(theta);
    return logits(params, x);
}

namespace {

void require_input_dim(const FeatureMatrix& x, int dim) {
    if (x.cols() != static_cast<std::size_t>(dim)) {
        throw Error(ErrorKind::ShapeMismatch, "features have " + std::to_string(x.cols()) + " columns, model expects " +
                                                  std::to_string(dim));
    }
}

void require_params(std::span<const double> params, std::size_t n) {
    if (params.size() != n) throw Error(ErrorKind::ShapeMismatch, "parameter vector has wrong length");
}

}  // namespace

// ---- ArchSpec ----

void ArchSpec::validate() const {
    if (layer_widths.size() < 3) {
        throw Error(ErrorKind::InvalidArgument, "architecture needs input, at least one hidden layer, and output");
    }
    for (int w : layer_widths) {
        if (w <= 0) throw Error(ErrorKind::InvalidArgument, "layer widths must be positive");
    }
    if (layer_widths.back() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two classes");
}

json to_json(const ArchSpec& arch) {
    return json{{"layer_widths", arch.layer_widths}};
}

ArchSpec arch_spec_from_json(const json& j) {
    ArchSpec a;
    detail::StrictObject obj(j, "arch");
    obj.read("layer_widths", a.layer_widths);
    obj.finish();
    a.validate();
    return a;
}

// ---- Mlp ----

Mlp::Mlp(ArchSpec arch) : arch_(std::move(arch)) {
    arch_.validate();
    std::size_t offset = 0;
    const int L = arch_.num_hidden();
    for (int i = 0; i <= L; ++i) {
        const int in = arch_.layer_widths[static_cast<std::size_t>(i)];
        const int out = arch_.layer_widths[static_cast<std::size_t>(i) + 1];
        const std::string prefix = "layer" + std::to_string(i);
        LayerOffsets lo{};
        lo.in = in;
        lo.out = out;
        lo.weight = offset;
        layout_.push_back({prefix + ".weight", {out, in}});
        offset += static_cast<std::size_t>(out) * static_cast<std::size_t>(in);
        lo.bias = offset;
        layout_.push_back({prefix + ".bias", {out}});
        offset += static_cast<std::size_t>(out);
        if (i < L) {
            lo.gain = offset;
            layout_.push_back({prefix + ".gain", {out}});
            offset += static_cast<std::size_t>(out);
        } else {
            lo.gain = std::numeric_limits<std::size_t>::max();
        }
        layers_.push_back(lo);
    }
}

LogitBatch Mlp::logits(std::span<const double> params, const FeatureMatrix& x) const {
    require_input_dim(x, input_dim());
    require_params(params, num_params());
    const std::size_t C = static_cast<std::size_t>(num_classes());
    LogitBatch out(x.rows(), C);
    std::vector<double> h, next;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xr = x.row(r);
        h.assign(xr.begin(), xr.end());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& lo = layers_[l];
            const bool hidden = l + 1 < layers_.size();
            next.assign(static_cast<std::size_t>(lo.out), 0.0);
            for (int o = 0; o < lo.out; ++o) {
                const double* w = params.data() + lo.weight + static_cast<std::size_t>(o) * static_cast<std::size_t>(lo.in);
                double z = params[lo.bias + static_cast<std::size_t>(o)];
                for (int k = 0; k < lo.in; ++k) z += w[k] * h[static_cast<std::size_t>(k)];
                if (hidden) {
                    const double a = params[lo.gain + static_cast<std::size_t>(o)] * z;
                    next[static_cast<std::size_t>(o)] = a > 0.0 ? a : 0.0;
                } else {
                    next[static_cast<std::size_t>(o)] = z;
                }
            }
            h.swap(next);
        }
        std::copy(h.begin(), h.end(), out.row(r).begin());
    }
    return out;
}

double Mlp::value_and_grad(std::span<const double> params, const FeatureMatrix& x, const RowLossFn& loss,
                           std::span<double> grad) const {
    require_input_dim(x, input_dim());
    require_params(params, num_params());
    require_params(grad, num_params());
    const std::size_t nl = layers_.size();
    // acts[0] is the input; acts[l + 1] is the output of layer l. pre[l] is W h + b of layer l.
    std::vector<std::vector<double>> acts(nl + 1), pre(nl);
    for (std::size_t l = 0; l < nl; ++l) {
        pre[l].resize(static_cast<std::size_t>(layers_[l].out));
        acts[l + 1].resize(static_cast<std::size_t>(layers_[l].out));
    }
    std::vector<double> dlogits(static_cast<std::size_t>(num_classes()));
    std::vector<double> dh, dprev;
    double total = 0.0;

    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xr = x.row(r);
        acts[0].assign(xr.begin(), xr.end());
        for (std::size_t l = 0; l < nl; ++l) {
            const auto& lo = layers_[l];
            const bool hidden = l + 1 < nl;
            for (int o = 0; o < lo.out; ++o) {
                const auto uo = static_cast<std::size_t>(o);
                const double* w = params.data() + lo.weight + uo * static_cast<std::size_t>(lo.in);
                double z = params[lo.bias + uo];
                for (int k = 0; k < lo.in; ++k) z += w[k] * acts[l][static_cast<std::size_t>(k)];
                pre[l][uo] = z;
                if (hidden) {
                    const double a = params[lo.gain + uo] * z;
                    acts[l + 1][uo] = a > 0.0 ? a : 0.0;
                } else {
                    acts[l + 1][uo] = z;
                }
            }
        }
        std::fill(dlogits.begin(), dlogits.end(), 0.0);
        total += loss(r, acts[nl], dlogits);

        dh = dlogits;
        for (std::size_t l = nl; l-- > 0;) {
            const auto& lo = layers_[l];
            const bool hidden = l + 1 < nl;
            // dh is d/d(output of layer l); convert to d/d(W h + b).
            if (hidden) {
                for (int o = 0; o < lo.out; ++o) {
                    const auto uo = static_cast<std::size_t>(o);
                    const double g = params[lo.gain + uo];
                    const double a = g * pre[l][uo];
                    const double da = a > 0.0 ? dh[uo] : 0.0;
                    grad[lo.gain + uo] += da * pre[l][uo];
                    dh[uo] = da * g;
                }
            }
            dprev.assign(static_cast<std::size_t>(lo.in), 0.0);
            for (int o = 0; o < lo.out; ++o) {
                const auto uo = static_cast<std::size_t>(o);
                const double dz = dh[uo];
                if (dz == 0.0) continue;
                grad[lo.bias + uo] += dz;
                const std::size_t wrow = lo.weight + uo * static_cast<std::size_t>(lo.in);
                for (int k = 0; k < lo.in; ++k) {
                    const auto uk = static_cast<std::size_t>(k);
                    grad[wrow + uk] += dz * acts[l][uk];
                    dprev[uk] += dz * params[wrow + uk];
                }
            }
            dh.swap(dprev);
        }
    }
    return total;
}

std::vector<std::uint8_t> Mlp::activation_pattern(std::span<const double> params, std::span<const float> x) const {
    require_params(params, num_params());
    std::vector<std::uint8_t> pattern;
    std::vector<double> h(x.begin(), x.end()), next;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        const auto& lo = layers_[l];
        next.assign(static_cast<std::size_t>(lo.out), 0.0);
        for (int o = 0; o < lo.out; ++o) {
            const auto uo = static_cast<std::size_t>(o);
            const double* w = params.data() + lo.weight + uo * static_cast<std::size_t>(lo.in);
            double z = params[lo.bias + uo];
            for (int k = 0; k < lo.in; ++k) z += w[k] * h[static_cast<std::size_t>(k)];
            const double a = params[lo.gain + uo] * z;
            pattern.push_back(a > 0.0 ? 1 : 0);
            next[uo] = a > 0.0 ? a : 0.0;
        }
        h.swap(next);
    }
    return pattern;
}

Checkpoint Mlp::initialize(std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<double> params(num_params(), 0.0);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& lo = layers_[l];
        const bool hidden = l + 1 < layers_.size();
        const double stddev = std::sqrt((hidden ? 2.0 : 1.0) / lo.in);
        const std::size_t nw = static_cast<std::size_t>(lo.in) * static_cast<std::size_t>(lo.out);
        for (std::size_t e = 0; e < nw; ++e) params[lo.weight + e] = stddev * rng.normal();
        if (hidden) {
            for (int o = 0; o < lo.out; ++o) params[lo.gain + static_cast<std::size_t>(o)] = 1.0;
        }
    }
    Checkpoint ckpt = to_checkpoint(params);
    ckpt.meta["init_seed"] = std::to_string(seed);
    return ckpt;
}

// ---- LinearModel ----

LinearModel::LinearModel(int input_dim, int num_classes) : input_dim_(input_dim), num_classes_(num_classes) {
    if (input_dim < 1 || num_classes < 2) throw Error(ErrorKind::InvalidArgument, "bad linear model dimensions");
    layout_.push_back({"layer0.weight", {num_classes, input_dim}});
    layout_.push_back({"layer0.bias", {num_classes}});
}

LogitBatch LinearModel::logits(std::span<const double> params, const FeatureMatrix& x) const {
    require_input_dim(x, input_dim_);
    require_params(params, num_params());
    const auto C = static_cast<std::size_t>(num_classes_);
    const auto D = static_cast<std::size_t>(input_dim_);
    LogitBatch out(x.rows(), C);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xr = x.row(r);
        for (std::size_t c = 0; c < C; ++c) {
            double z = params[C * D + c];
            for (std::size_t d = 0; d < D; ++d) z += params[c * D + d] * xr[d];
            out(r, c) = z;
        }
    }
    return out;
}

double LinearModel::value_and_grad(std::span<const double> params, const FeatureMatrix& x, const RowLossFn& loss,
                                   std::span<double> grad) const {
    require_params(grad, num_params());
    const auto C = static_cast<std::size_t>(num_classes_);
    const auto D = static_cast<std::size_t>(input_dim_);
    const LogitBatch f = logits(params, x);
    std::vector<double> dl(C);
    double total = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::fill(dl.begin(), dl.end(), 0.0);
        total += loss(r, f.row(r), dl);
        const auto xr = x.row(r);
        for (std::size_t c = 0; c < C; ++c) {
            grad[C * D + c] += dl[c];
            for (std::size_t d = 0; d < D; ++d) grad[c * D + d] += dl[c] * xr[d];
        }
    }
    return total;
}

// ---- softmax cross-entropy ----

std::vector<double> softmax(std::span<const double> logits, double beta) {
    std::vector<double> p(logits.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (double f : logits) mx = std::max(mx, beta * f);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(beta * logits[i] - mx);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

std::vector<double> smoothed_target(int label, int num_classes, double smoothing) {
    std::vector<double> t(static_cast<std::size_t>(num_classes), smoothing / num_classes);
    t[static_cast<std::size_t>(label)] += 1.0 - smoothing;
    return t;
}

double soft_cross_entropy(std::span<const double> logits, std::span<const double> target, double beta,
                          std::span<double> dlogits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double f : logits) mx = std::max(mx, beta * f);
    double sum = 0.0;
    for (double f : logits) sum += std::exp(beta * f - mx);
    const double lse = mx + std::log(sum);
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (target[i] != 0.0) loss -= target[i] * (beta * logits[i] - lse);
    }
    if (!dlogits.empty()) {
        for (std::size_t i = 0; i < logits.size(); ++i) {
            const double p = std::exp(beta * logits[i] - lse);
            dlogits[i] = beta * (p - target[i]);
        }
    }
    return loss;
}

double loss_ce(const LogitBatch& logits, std::span<const int> labels, double smoothing, double beta) {
    if (logits.rows() != labels.size()) throw Error(ErrorKind::ShapeMismatch, "logit/label count mismatch");
    if (logits.rows() == 0) throw Error(ErrorKind::EmptyInput, "loss of an empty batch");
    const int C = static_cast<int>(logits.cols());
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto t = smoothed_target(labels[r], C, smoothing);
        total += soft_cross_entropy(logits.row(r), t, beta);
    }
    return total / static_cast<double>(logits.rows());
}

std::vector<double> logit_gradient(std::span<const double> logits, int label) {
    auto g = softmax(logits);
    g[static_cast<std::size_t>(label)] -= 1.0;
    return g;
}

double hessian_quadratic_form(std::span<const double> logits, std::span<const double> v) {
    const auto p = softmax(logits);
    double mean = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) mean += p[i] * v[i];
    double var = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) var += p[i] * (v[i] - mean) * (v[i] - mean);
    return var;
}

int argmax(std::span<const double> values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

double loss_and_grad(const LogitModel& model, std::span<const double> params, const FeatureMatrix& x,
                     std::span<const int> labels, double smoothing, double beta, std::span<double> grad) {
    if (x.rows() != labels.size()) throw Error(ErrorKind::ShapeMismatch, "feature/label count mismatch");
    if (x.rows() == 0) throw Error(ErrorKind::EmptyInput, "gradient of an empty batch");
    std::fill(grad.begin(), grad.end(), 0.0);
    const int C = model.num_classes();
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    const double total = model.value_and_grad(
        params, x,
        [&](std::size_t r, std::span<const double> f, std::span<double> df) {
            const auto t = smoothed_target(labels[r], C, smoothing);
            const double l = soft_cross_entropy(f, t, beta, df);
            for (auto& v : df) v *= inv_n;
            return l;
        },
        grad);
    return total * inv_n;
}

Checkpoint grad(const LogitModel& model, const Checkpoint& theta, const FeatureMatrix& x, std::span<const int> labels,
                double smoothing, double beta) {
    const auto params = model.to_flat(theta);
    std::vector<double> g(params.size());
    loss_and_grad(model, params, x, labels, smoothing, beta, g);
    Checkpoint out = model.to_checkpoint(g);
    out.meta["kind"] = "gradient";
    return out;
}

LogitBatch logit_second_directional(const LogitModel& model, std::span<const double> theta,
                                    std::span<const double> delta, const FeatureMatrix& x, double h) {
    if (theta.size() != delta.size()) throw Error(ErrorKind::ShapeMismatch, "direction has wrong length");
    std::vector<double> plus(theta.size()), minus(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        plus[i] = theta[i] + h * delta[i];
        minus[i] = theta[i] - h * delta[i];
    }
    const LogitBatch fp = model.logits(plus, x);
    const LogitBatch f0 = model.logits(theta, x);
    const LogitBatch fm = model.logits(minus, x);
    LogitBatch out(f0.rows(), f0.cols());
    const double inv_h2 = 1.0 / (h * h);
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        out.data()[i] = (fp.data()[i] - 2.0 * f0.data()[i] + fm.data()[i]) * inv_h2;
    }
    return out;
}

LogitBatch logit_second_directional(const LogitModel& model, const Checkpoint& theta, const Checkpoint& delta,
                                    const FeatureMatrix& x, double h) {
    require_shape_compatible(theta, delta);
    return logit_second_directional(model, model.to_flat(theta), model.to_flat(delta), x, h);
}

json to_json(const EvalReport& r) {
    json j{{"n", r.n}, {"loss", r.loss}, {"error", r.error}, {"accuracy", r.accuracy}, {"ece", r.ece}};
    if (r.beta) j["beta"] = *r.beta;
    if (r.calibrated_loss) j["calibrated_loss"] = *r.calibrated_loss;
    return j;
}

double accuracy(const LogitBatch& logits, std::span<const int> labels) {
    if (logits.rows() != labels.size()) throw Error(ErrorKind::ShapeMismatch, "logit/label count mismatch");
    if (logits.rows() == 0) throw Error(ErrorKind::EmptyInput, "accuracy of an empty batch");
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        if (argmax(logits.row(r)) == labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

EvalReport evaluate_logits(const LogitBatch& logits, std::span<const int> labels, std::optional<double> beta) {
    EvalReport r;
    r.n = labels.size();
    r.loss = loss_ce(logits, labels);
    const double b = beta.value_or(1.0);
    if (beta) {
        r.beta = b;
        r.calibrated_loss = loss_ce(logits, labels, 0.0, b);
    }
    std::vector<double> conf;
    std::vector<int> correct;
    confidences_and_correctness(logits, labels, b, conf, correct);
    const auto hits = static_cast<double>(std::count(correct.begin(), correct.end(), 1));
    r.accuracy = hits / static_cast<double>(r.n);
    r.error = (static_cast<double>(r.n) - hits) / static_cast<double>(r.n);
    r.ece = ece_equal_mass(conf, correct, kDefaultEceBins);
    return r;
}

EvalReport evaluate(const LogitModel& model, std::span<const double> params, const Split& split,
                    std::optional<double> beta) {
    return evaluate_logits(model.logits(params, split.features), split.labels, beta);
}

EvalReport evaluate(const LogitModel& model, const Checkpoint& theta, const Split& split, std::optional<double> beta) {
    return evaluate_logits(model.forward(theta, split.features), split.labels, beta);
}

}  // namespace soupkit
