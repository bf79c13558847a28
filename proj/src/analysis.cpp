// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "soupkit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "soupkit/ensembles.hpp"
#include "soupkit/error.hpp"

namespace soupkit {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::vector<double> lerp(std::span<const double> a, std::span<const double> b, double alpha) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - alpha) * a[i] + alpha * b[i];
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void require_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in [0, 1]");
}

}  // namespace

double interpolation_advantage(const LogitModel& model, const Checkpoint& theta1, const Checkpoint& theta2,
                               const Split& split) {
    require_shape_compatible(theta1, theta2);
    const std::array<double, 2> half{0.5, 0.5};
    const std::array<const Checkpoint*, 2> pair{&theta1, &theta2};
    const Checkpoint mid = combine(half, pair);
    const double a1 = evaluate(model, theta1, split).accuracy;
    const double a2 = evaluate(model, theta2, split).accuracy;
    return evaluate(model, mid, split).accuracy - 0.5 * (a1 + a2);
}

std::vector<CurvePoint> interpolation_curve(const LogitModel& model, const Checkpoint& theta0,
                                            const Checkpoint& theta1, std::span<const double> alphas,
                                            const Split& split) {
    require_shape_compatible(theta0, theta1);
    std::vector<CurvePoint> out;
    const std::array<const Checkpoint*, 2> ends{&theta0, &theta1};
    for (double a : alphas) {
        require_alpha(a);
        // The endpoints evaluate the inputs themselves so they match evaluate() bit for bit.
        CurvePoint p{a, {}};
        if (a == 0.0) p.report = evaluate(model, theta0, split);
        else if (a == 1.0) p.report = evaluate(model, theta1, split);
        else {
            const std::array<double, 2> w{1.0 - a, a};
            p.report = evaluate(model, combine(w, ends), split);
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::string curve_csv(std::span<const CurvePoint> curve) {
    std::string out = "alpha,loss,error,accuracy,ece\n";
    for (const auto& p : curve) {
        out += fmt(p.alpha) + "," + fmt(p.report.loss) + "," + fmt(p.report.error) + "," +
               fmt(p.report.accuracy) + "," + fmt(p.report.ece) + "\n";
    }
    return out;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    if (n == 0) return {};
    if (n == 1) return {lo};
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    out.back() = hi;
    return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorKind::ShapeMismatch, "pearson: length mismatch");
    const std::size_t n = x.size();
    if (n < 2) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---- planes ----

PlaneBasis make_plane_basis(const Checkpoint& theta0, const Checkpoint& theta1, const Checkpoint& theta2) {
    require_shape_compatible(theta0, theta1);
    require_shape_compatible(theta0, theta2);
    const auto p0 = flatten(theta0), p1 = flatten(theta1), p2 = flatten(theta2);
    const std::size_t n = p0.size();
    std::vector<double> u1(n), u2(n);
    for (std::size_t i = 0; i < n; ++i) {
        u1[i] = p1[i] - p0[i];
        u2[i] = p2[i] - p0[i];
    }
    const double n1 = std::sqrt(dot(u1, u1));
    if (!(n1 > 0.0)) throw Error(ErrorKind::Degenerate, "plane basis: theta1 equals theta0");
    for (auto& v : u1) v /= n1;
    const double n2_raw = std::sqrt(dot(u2, u2));
    const double proj = dot(u2, u1);
    for (std::size_t i = 0; i < n; ++i) u2[i] -= proj * u1[i];
    const double n2 = std::sqrt(dot(u2, u2));
    if (!(n2 > 1e-9 * std::max(n2_raw, 1e-30))) {
        throw Error(ErrorKind::Degenerate, "plane basis: theta2 - theta0 is parallel to theta1 - theta0");
    }
    for (auto& v : u2) v /= n2;

    PlaneBasis b;
    b.origin = theta0;
    b.u1 = unflatten(theta0, u1);
    b.u2 = unflatten(theta0, u2);
    b.u1.meta = {{"recipe", "plane_u1"}};
    b.u2.meta = {{"recipe", "plane_u2"}};
    b.coords1 = {n1, 0.0};
    b.coords2 = {proj, n2};
    return b;
}

std::array<double, 2> plane_coords(const PlaneBasis& basis, const Checkpoint& theta) {
    require_shape_compatible(basis.origin, theta);
    const auto o = flatten(basis.origin), t = flatten(theta);
    const auto u1 = flatten(basis.u1), u2 = flatten(basis.u2);
    double x = 0.0, y = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double d = t[i] - o[i];
        x += d * u1[i];
        y += d * u2[i];
    }
    return {x, y};
}

std::vector<double> plane_point(const PlaneBasis& basis, double x, double y) {
    auto p = flatten(basis.origin);
    if (x == 0.0 && y == 0.0) return p;
    const auto u1 = flatten(basis.u1), u2 = flatten(basis.u2);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += x * u1[i] + y * u2[i];
    return p;
}

std::string_view to_string(PlaneMetric metric) {
    switch (metric) {
        case PlaneMetric::Loss: return "loss";
        case PlaneMetric::Error: return "error";
        case PlaneMetric::Accuracy: return "accuracy";
    }
    return "loss";
}

PlaneMetric parse_plane_metric(std::string_view text) {
    if (text == "loss") return PlaneMetric::Loss;
    if (text == "error") return PlaneMetric::Error;
    if (text == "accuracy") return PlaneMetric::Accuracy;
    throw Error(ErrorKind::InvalidArgument, "unknown plane metric '" + std::string(text) + "'");
}

PlaneGrid default_plane_grid(const PlaneBasis& basis, std::size_t points, double margin) {
    double xlo = 0.0, xhi = 0.0, ylo = 0.0, yhi = 0.0;
    for (const auto& c : {basis.coords0, basis.coords1, basis.coords2}) {
        xlo = std::min(xlo, c[0]);
        xhi = std::max(xhi, c[0]);
        ylo = std::min(ylo, c[1]);
        yhi = std::max(yhi, c[1]);
    }
    const double span = std::max(xhi - xlo, yhi - ylo);
    return {linspace(xlo - margin * span, xhi + margin * span, points),
            linspace(ylo - margin * span, yhi + margin * span, points)};
}

double plane_metric_value(const LogitModel& model, std::span<const double> params, const Split& split,
                          PlaneMetric metric) {
    const auto r = evaluate(model, params, split);
    switch (metric) {
        case PlaneMetric::Loss: return r.loss;
        case PlaneMetric::Error: return r.error;
        case PlaneMetric::Accuracy: return r.accuracy;
    }
    return r.loss;
}

PlaneLandscape plane_landscape(const LogitModel& model, const Checkpoint& theta0, const Checkpoint& theta1,
                               const Checkpoint& theta2, const PlaneGrid& grid, const Split& split,
                               PlaneMetric metric) {
    if (grid.xs.empty() || grid.ys.empty()) throw Error(ErrorKind::InvalidArgument, "plane grid is empty");
    PlaneLandscape out;
    out.basis = make_plane_basis(theta0, theta1, theta2);
    out.grid = grid;
    out.metric = metric;
    out.values = Matrix<double>(grid.ys.size(), grid.xs.size());
    for (std::size_t j = 0; j < grid.ys.size(); ++j) {
        for (std::size_t i = 0; i < grid.xs.size(); ++i) {
            const auto p = plane_point(out.basis, grid.xs[i], grid.ys[j]);
            out.values(j, i) = plane_metric_value(model, p, split, metric);
        }
    }
    return out;
}

std::string PlaneLandscape::csv() const {
    std::string out = "x,y," + std::string(to_string(metric)) + "\n";
    for (std::size_t j = 0; j < grid.ys.size(); ++j) {
        for (std::size_t i = 0; i < grid.xs.size(); ++i) {
            out += fmt(grid.xs[i]) + "," + fmt(grid.ys[j]) + "," + fmt(values(j, i)) + "\n";
        }
    }
    return out;
}

std::string PlaneLandscape::matrix_text() const {
    std::string out;
    for (std::size_t j = 0; j < values.rows(); ++j) {
        for (std::size_t i = 0; i < values.cols(); ++i) {
            if (i) out += ' ';
            out += fmt(values(j, i));
        }
        out += '\n';
    }
    return out;
}

json PlaneLandscape::basis_json() const {
    return json{{"metric", std::string(to_string(metric))},
                {"theta0", {basis.coords0[0], basis.coords0[1]}},
                {"theta1", {basis.coords1[0], basis.coords1[1]}},
                {"theta2", {basis.coords2[0], basis.coords2[1]}},
                {"xs", grid.xs},
                {"ys", grid.ys}};
}

// ---- grid endpoint study ----

GridStudy grid_endpoint_study(const LogitModel& model, std::span<const Checkpoint> models, const Split& split) {
    if (models.size() < 2) throw Error(ErrorKind::InvalidArgument, "grid study needs at least two models");
    const std::size_t n = models.size();
    GridStudy out;
    out.accuracy.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        require_shape_compatible(models[0], models[i]);
        out.accuracy[i] = evaluate(model, models[i], split).accuracy;
    }
    out.gain = Matrix<double>(n, n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t a = 0; a < n; ++a) {
        out.gain(a, a) = 0.0;
        double best = out.accuracy[a];
        for (std::size_t b = a + 1; b < n; ++b) {
            best = std::max(best, out.accuracy[b]);
            const std::array<double, 2> half{0.5, 0.5};
            const std::array<const Checkpoint*, 2> ends{&models[a], &models[b]};
            out.gain(a, b) = evaluate(model, combine(half, ends), split).accuracy - best;
        }
    }
    return out;
}

std::string GridStudy::csv() const {
    std::string out = "a,b,avg_accuracy_minus_best\n";
    for (std::size_t a = 0; a < gain.rows(); ++a) {
        for (std::size_t b = a; b < gain.cols(); ++b) {
            out += std::to_string(a) + "," + std::to_string(b) + "," + fmt(gain(a, b)) + "\n";
        }
    }
    return out;
}

// ---- soup vs ensemble ----

std::string_view to_string(BetaMode mode) { return mode == BetaMode::Fixed1 ? "fixed1" : "calibrate-soup"; }

BetaMode parse_beta_mode(std::string_view text) {
    if (text == "fixed1" || text == "fixed-1") return BetaMode::Fixed1;
    if (text == "calibrate-soup" || text == "calibrate") return BetaMode::CalibrateSoup;
    throw Error(ErrorKind::InvalidArgument, "unknown beta mode '" + std::string(text) + "'");
}

double c_alpha(double alpha) { return alpha * (1.0 - alpha) / 2.0; }

namespace {

double top1_error(const LogitBatch& logits, std::span<const int> labels) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) wrong += argmax(logits.row(i)) != labels[i] ? 1 : 0;
    return static_cast<double>(wrong) / static_cast<double>(logits.rows());
}

}  // namespace

ApproxRecord soup_vs_ensemble_approx(const LogitModel& model, const Checkpoint& theta0, const Checkpoint& theta1,
                                     double alpha, const Split& split, BetaMode mode, double h_alpha) {
    require_alpha(alpha);
    if (!(h_alpha > 0.0 && h_alpha <= 0.5)) throw Error(ErrorKind::InvalidArgument, "h_alpha must be in (0, 0.5]");
    if (split.size() == 0) throw Error(ErrorKind::EmptyInput, "approximation on an empty split");
    const auto p0 = model.to_flat(theta0), p1 = model.to_flat(theta1);
    const auto& x = split.features;
    const std::span<const int> y = split.labels;

    const LogitBatch f0 = model.logits(p0, x), f1 = model.logits(p1, x);
    const LogitBatch fs = model.logits(lerp(p0, p1, alpha), x);
    LogitBatch fe(f0.rows(), f0.cols());
    for (std::size_t e = 0; e < fe.data().size(); ++e) {
        fe.data()[e] = (1.0 - alpha) * f0.data()[e] + alpha * f1.data()[e];
    }

    ApproxRecord r;
    r.alpha = alpha;
    r.beta = mode == BetaMode::Fixed1 ? 1.0 : fit_temperature(fs, y).beta;
    const double beta = r.beta;

    const double ls = loss_ce(fs, y, 0.0, beta);
    const double le = loss_ce(fe, y, 0.0, beta);
    if (!std::isfinite(ls) || !std::isfinite(le)) {
        throw Error(ErrorKind::Divergence, "non-finite loss in soup/ensemble comparison");
    }
    r.true_loss_diff = ls - le;
    r.true_err_diff = top1_error(fs, y) - top1_error(fe, y);

    auto loss_at = [&](double a) { return loss_ce(model.logits(lerp(p0, p1, a), x), y, 0.0, beta); };
    double d2;
    const double h = h_alpha;
    if (alpha - h < 0.0) {
        d2 = (ls - 2.0 * loss_at(alpha + h) + loss_at(alpha + 2.0 * h)) / (h * h);
    } else if (alpha + h > 1.0) {
        d2 = (ls - 2.0 * loss_at(alpha - h) + loss_at(alpha - 2.0 * h)) / (h * h);
    } else {
        d2 = (loss_at(alpha + h) - 2.0 * ls + loss_at(alpha - h)) / (h * h);
    }
    r.second_derivative_term = d2;

    double var = 0.0;
    std::vector<double> scaled(fs.cols()), delta(fs.cols());
    for (std::size_t i = 0; i < fs.rows(); ++i) {
        for (std::size_t c = 0; c < fs.cols(); ++c) {
            scaled[c] = beta * fs(i, c);
            delta[c] = f1(i, c) - f0(i, c);
        }
        var += hessian_quadratic_form(scaled, delta);
    }
    r.variance_term = var / static_cast<double>(fs.rows());
    r.approx_value = c_alpha(alpha) * (-r.second_derivative_term + beta * beta * r.variance_term);
    if (!std::isfinite(r.approx_value)) throw Error(ErrorKind::Divergence, "non-finite approximation");
    return r;
}

double w_alpha(double alpha, double tau) { return std::min((1.0 - alpha) * tau, alpha * (1.0 - tau)); }

IntegralOracleResult integral_oracle(const LogitModel& model, const Checkpoint& theta0, const Checkpoint& theta1,
                                     double alpha, const FeatureMatrix& x, int nodes, double h) {
    require_alpha(alpha);
    if (nodes < 3 || nodes % 2 == 0) throw Error(ErrorKind::InvalidArgument, "Simpson needs an odd node count >= 3");
    const auto p0 = model.to_flat(theta0), p1 = model.to_flat(theta1);
    std::vector<double> delta(p0.size());
    for (std::size_t i = 0; i < p0.size(); ++i) delta[i] = p1[i] - p0[i];

    IntegralOracleResult out;
    const LogitBatch f0 = model.logits(p0, x), f1 = model.logits(p1, x);
    const LogitBatch fs = model.logits(lerp(p0, p1, alpha), x);
    out.direct = LogitBatch(f0.rows(), f0.cols());
    for (std::size_t e = 0; e < f0.data().size(); ++e) {
        out.direct.data()[e] = (1.0 - alpha) * f0.data()[e] + alpha * f1.data()[e] - fs.data()[e];
    }
    out.integral = LogitBatch(f0.rows(), f0.cols());

    // Split the intervals at the kink of w_alpha so each piece is integrated with a smooth weight.
    const int intervals = nodes - 1;
    int n_left = 2 * static_cast<int>(std::lround(intervals / 2.0 * alpha));
    if (alpha > 0.0 && alpha < 1.0 && intervals >= 4) n_left = std::clamp(n_left, 2, intervals - 2);
    const int n_right = intervals - n_left;

    std::vector<std::vector<std::uint8_t>> first_pattern(x.rows());
    bool have_pattern = false;
    auto check_pattern = [&](std::span<const double> params) {
        for (std::size_t i = 0; i < x.rows(); ++i) {
            auto pat = model.activation_pattern(params, x.row(i));
            if (!have_pattern) first_pattern[i] = std::move(pat);
            else if (pat != first_pattern[i]) out.activation_flip = true;
        }
        have_pattern = true;
    };

    auto accumulate_piece = [&](double a, double b, int n) {
        if (n <= 0 || !(b > a)) return;
        const double step = (b - a) / n;
        for (int k = 0; k <= n; ++k) {
            const double tau = k == n ? b : a + step * k;
            const double wk = (k == 0 || k == n) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
            const double weight = wk * step / 3.0 * w_alpha(alpha, tau);
            const auto theta_tau = lerp(p0, p1, tau);
            check_pattern(theta_tau);
            if (weight == 0.0) continue;
            const LogitBatch d2 = logit_second_directional(model, theta_tau, delta, x, h);
            for (std::size_t e = 0; e < d2.data().size(); ++e) out.integral.data()[e] += weight * d2.data()[e];
        }
    };
    accumulate_piece(0.0, alpha, n_left);
    accumulate_piece(alpha, 1.0, n_right);

    out.residual.assign(f0.cols(), 0.0);
    for (std::size_t i = 0; i < f0.rows(); ++i) {
        for (std::size_t c = 0; c < f0.cols(); ++c) {
            const double res = std::abs(out.integral(i, c) - out.direct(i, c));
            out.residual[c] = std::max(out.residual[c], res);
            out.max_residual = std::max(out.max_residual, res);
            out.scale = std::max(out.scale, std::abs(out.direct(i, c)));
        }
    }
    return out;
}

json to_json(const ApproxSummary& s) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return json{{"count", s.count},
                {"pearson_loss", opt(s.pearson_loss)},
                {"pearson_loss_defined", s.pearson_loss.has_value()},
                {"pearson_err", opt(s.pearson_err)},
                {"pearson_err_defined", s.pearson_err.has_value()},
                {"sign_agreement", s.sign_agreement}};
}

ApproxSummary summarize(std::span<const ApproxRecord> records) {
    ApproxSummary s;
    s.count = records.size();
    if (records.empty()) return s;
    std::vector<double> approx, loss, err;
    std::size_t agree = 0;
    auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
    for (const auto& r : records) {
        approx.push_back(r.approx_value);
        loss.push_back(r.true_loss_diff);
        err.push_back(r.true_err_diff);
        agree += sign(r.approx_value) == sign(r.true_loss_diff) ? 1 : 0;
    }
    s.pearson_loss = pearson(approx, loss);
    s.pearson_err = pearson(approx, err);
    s.sign_agreement = static_cast<double>(agree) / static_cast<double>(records.size());
    return s;
}

std::string ApproxValidation::csv() const {
    std::string out =
        "pair,split,high_lr,alpha,beta,approx_value,true_loss_diff,true_err_diff,second_derivative_term,"
        "variance_term\n";
    for (const auto& r : records) {
        out += r.pair_id + "," + r.split + "," + (r.high_lr ? "1" : "0") + "," + fmt(r.alpha) + "," + fmt(r.beta) +
               "," + fmt(r.approx_value) + "," + fmt(r.true_loss_diff) + "," + fmt(r.true_err_diff) + "," +
               fmt(r.second_derivative_term) + "," + fmt(r.variance_term) + "\n";
    }
    return out;
}

json ApproxValidation::summary_json() const {
    return json{{"all", to_json(all)}, {"excluding_high_lr", to_json(excluding_high_lr)}};
}

ApproxValidation approx_validation_report(const LogitModel& model, std::span<const ModelPair> pairs,
                                          std::span<const double> alphas, std::span<const NamedSplit> splits,
                                          BetaMode mode, double h_alpha) {
    if (pairs.size() < 2) throw Error(ErrorKind::InvalidArgument, "approximation report needs at least two pairs");
    if (alphas.empty() || splits.empty()) throw Error(ErrorKind::InvalidArgument, "empty alpha grid or split list");
    ApproxValidation out;
    for (const auto& pair : pairs) {
        for (double a : alphas) {
            for (const auto& s : splits) {
                if (s.split == nullptr) throw Error(ErrorKind::InvalidArgument, "null split in report");
                auto r = soup_vs_ensemble_approx(model, pair.theta0, pair.theta1, a, *s.split, mode, h_alpha);
                r.pair_id = pair.id;
                r.split = s.name;
                r.high_lr = pair.high_lr;
                out.records.push_back(std::move(r));
            }
        }
    }
    out.all = summarize(out.records);
    std::vector<ApproxRecord> kept;
    for (const auto& r : out.records) {
        if (!r.high_lr) kept.push_back(r);
    }
    out.excluding_high_lr = summarize(kept);
    return out;
}

std::vector<ModelPair> build_approx_pairs(const Checkpoint& init, std::span<const GridCheckpoint> models) {
    if (models.empty()) throw Error(ErrorKind::EmptyInput, "no checkpoints for pair construction");
    int max_lr = 0;
    for (const auto& m : models) max_lr = std::max(max_lr, m.lr_level);
    auto tag = [](const GridCheckpoint& m) {
        return "lr" + std::to_string(m.lr_level) + "_aug" + std::to_string(m.aug_level) + "_s" +
               std::to_string(m.seed_level);
    };
    std::vector<ModelPair> pairs;
    auto add = [&](const GridCheckpoint& a, const GridCheckpoint& b) {
        pairs.push_back({tag(a) + "~" + tag(b), a.theta, b.theta, a.lr_level == max_lr || b.lr_level == max_lr});
    };
    const std::size_t n = models.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = models[i];
            const auto& b = models[j];
            const bool same_lr = a.lr_level == b.lr_level, same_aug = a.aug_level == b.aug_level;
            const bool both_seed0 = a.seed_level == 0 && b.seed_level == 0;
            if (!same_lr && same_aug && both_seed0) add(a, b);
            else if (same_lr && !same_aug && both_seed0) add(a, b);
            else if (same_lr && same_aug && a.seed_level != b.seed_level) add(a, b);
        }
    }
    for (const auto& m : models) {
        if (m.seed_level == 0) {
            pairs.push_back({"init~" + tag(m), init, m.theta, m.lr_level == max_lr});
        }
    }
    return pairs;
}

}  // namespace soupkit
