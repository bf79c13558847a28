// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Weight-space analyses: interpolation curves and advantage, 2-D loss planes,
// the hyperparameter-grid endpoint study, and the soup-vs-ensemble loss
// approximation with its exact integral form.
//
// The approximation and the integral oracle work on flat double parameters so
// that finite differences are not polluted by float32 rounding of merged
// checkpoints.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "soupkit/datagen.hpp"
#include "soupkit/matrix.hpp"
#include "soupkit/tensor.hpp"
#include "soupkit/tinynet.hpp"

namespace soupkit {

// ---- interpolation ----

/// Acc(theta1/2 + theta2/2) - (Acc(theta1) + Acc(theta2)) / 2 on `split`.
double interpolation_advantage(const LogitModel& model, const Checkpoint& theta1, const Checkpoint& theta2,
                               const Split& split);

struct CurvePoint {
    double alpha = 0.0;
    EvalReport report;
};

/// Evaluates combine([1 - alpha, alpha], [theta0, theta1]) for every alpha.
std::vector<CurvePoint> interpolation_curve(const LogitModel& model, const Checkpoint& theta0,
                                            const Checkpoint& theta1, std::span<const double> alphas,
                                            const Split& split);
std::string curve_csv(std::span<const CurvePoint> curve);

/// `n` evenly spaced values from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, std::size_t n);

/// Pearson correlation; nullopt when either input has zero variance or fewer than 2 points.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// ---- planes ----

struct PlaneBasis {
    Checkpoint origin;
    Checkpoint u1, u2;
    std::array<double, 2> coords0{0.0, 0.0};
    std::array<double, 2> coords1{0.0, 0.0};
    std::array<double, 2> coords2{0.0, 0.0};
};

/// u1 = (theta1 - theta0) / |theta1 - theta0|, u2 = Gram-Schmidt of theta2 - theta0 against u1.
/// Throws Degenerate when theta1 == theta0 or the two deltas are parallel.
PlaneBasis make_plane_basis(const Checkpoint& theta0, const Checkpoint& theta1, const Checkpoint& theta2);

/// Coordinates of `theta - origin` in the (u1, u2) frame.
std::array<double, 2> plane_coords(const PlaneBasis& basis, const Checkpoint& theta);

/// origin + x u1 + y u2 as flat doubles (exactly origin at (0, 0)).
std::vector<double> plane_point(const PlaneBasis& basis, double x, double y);

enum class PlaneMetric { Loss, Error, Accuracy };
std::string_view to_string(PlaneMetric metric);
PlaneMetric parse_plane_metric(std::string_view text);

struct PlaneGrid {
    std::vector<double> xs;
    std::vector<double> ys;
};

/// Square grid covering all three model coordinates with a relative margin.
PlaneGrid default_plane_grid(const PlaneBasis& basis, std::size_t points, double margin = 0.25);

struct PlaneLandscape {
    PlaneBasis basis;
    PlaneGrid grid;
    PlaneMetric metric = PlaneMetric::Loss;
    /// values(j, i) is the metric at (xs[i], ys[j]).
    Matrix<double> values;

    /// Long-form CSV: x,y,value.
    [[nodiscard]] std::string csv() const;
    /// Rectangular whitespace-separated matrix, one row per y.
    [[nodiscard]] std::string matrix_text() const;
    [[nodiscard]] nlohmann::json basis_json() const;
};

PlaneLandscape plane_landscape(const LogitModel& model, const Checkpoint& theta0, const Checkpoint& theta1,
                               const Checkpoint& theta2, const PlaneGrid& grid, const Split& split,
                               PlaneMetric metric);

double plane_metric_value(const LogitModel& model, std::span<const double> params, const Split& split,
                          PlaneMetric metric);

// ---- hyperparameter grid endpoint study ----

struct GridStudy {
    std::vector<double> accuracy;
    /// gain(a, b) = Acc(avg(theta_a, theta_b)) - max_{a<=h<=b} Acc(theta_h) for a <= b; NaN below the diagonal.
    Matrix<double> gain;

    [[nodiscard]] std::string csv() const;
};

/// `models` must be ordered along one hyperparameter axis.
GridStudy grid_endpoint_study(const LogitModel& model, std::span<const Checkpoint> models, const Split& split);

// ---- soup vs ensemble ----

enum class BetaMode { Fixed1, CalibrateSoup };
std::string_view to_string(BetaMode mode);
BetaMode parse_beta_mode(std::string_view text);

struct ApproxRecord {
    std::string pair_id;
    std::string split;
    bool high_lr = false;
    double alpha = 0.0;
    double beta = 1.0;
    double approx_value = 0.0;
    double true_loss_diff = 0.0;
    double true_err_diff = 0.0;
    double second_derivative_term = 0.0;
    double variance_term = 0.0;
};

/// alpha (1 - alpha) / 2.
double c_alpha(double alpha);

/// L(beta f(theta_alpha)) - L(beta ((1 - alpha) f(theta0) + alpha f(theta1))) and its approximation
/// c_alpha (-d2L/dalpha2 + beta^2 E Var_{softmax(beta f)}[f(theta1) - f(theta0)]).
/// The alpha derivative uses step h_alpha with a one-sided stencil near the ends of [0, 1].
ApproxRecord soup_vs_ensemble_approx(const LogitModel& model, const Checkpoint& theta0, const Checkpoint& theta1,
                                     double alpha, const Split& split, BetaMode mode, double h_alpha = 0.05);

/// min{(1 - alpha) tau, alpha (1 - tau)}.
double w_alpha(double alpha, double tau);

struct IntegralOracleResult {
    /// Quadrature of the integral, per row and class.
    LogitBatch integral;
    /// (1 - alpha) f(theta0) + alpha f(theta1) - f(theta_alpha).
    LogitBatch direct;
    /// |integral - direct| maximized over rows, per class.
    std::vector<double> residual;
    double max_residual = 0.0;
    /// max |direct|.
    double scale = 0.0;
    /// True when any hidden unit changes sign pattern between nodes of the path.
    bool activation_flip = false;
};

/// Composite Simpson over `nodes` (odd, >= 3) nodes split at tau = alpha, with the second
/// directional derivative of the logits along theta1 - theta0 by central difference (step h).
IntegralOracleResult integral_oracle(const LogitModel& model, const Checkpoint& theta0, const Checkpoint& theta1,
                                     double alpha, const FeatureMatrix& x, int nodes = 33, double h = 1e-3);

struct ModelPair {
    std::string id;
    Checkpoint theta0, theta1;
    bool high_lr = false;
};

struct NamedSplit {
    std::string name;
    const Split* split = nullptr;
};

struct ApproxSummary {
    std::size_t count = 0;
    std::optional<double> pearson_loss;
    std::optional<double> pearson_err;
    double sign_agreement = 0.0;
};

nlohmann::json to_json(const ApproxSummary& s);

struct ApproxValidation {
    std::vector<ApproxRecord> records;
    ApproxSummary all;
    ApproxSummary excluding_high_lr;

    [[nodiscard]] std::string csv() const;
    [[nodiscard]] nlohmann::json summary_json() const;
};

/// Correlation of approx_value with true_loss_diff and true_err_diff, and the fraction of records
/// where sign(approx_value) == sign(true_loss_diff).
ApproxSummary summarize(std::span<const ApproxRecord> records);

/// One record per (pair, alpha, split), in that nesting order.
ApproxValidation approx_validation_report(const LogitModel& model, std::span<const ModelPair> pairs,
                                          std::span<const double> alphas, std::span<const NamedSplit> splits,
                                          BetaMode mode, double h_alpha = 0.05);

/// A checkpoint from a (learning rate, augmentation, seed) grid; levels are indices.
struct GridCheckpoint {
    int lr_level = 0;
    int aug_level = 0;
    int seed_level = 0;
    Checkpoint theta;
};

/// Pairs: different lr (same aug, seed 0); different aug (same lr, seed 0); different seed (same lr
/// and aug); every seed-0 model with the initialization. Pairs touching the highest lr level are
/// flagged high_lr. A 3 x 2 x 2 grid yields 21 pairs.
std::vector<ModelPair> build_approx_pairs(const Checkpoint& init, std::span<const GridCheckpoint> models);

}  // namespace soupkit
