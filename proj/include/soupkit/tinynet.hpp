// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small logit models over flat double parameter vectors, softmax cross-entropy
// with label smoothing and inverse temperature, and curvature probes.
//
// Mlp parameter naming: hidden layer i has "layer{i}.weight" [out, in],
// "layer{i}.bias" [out] and "layer{i}.gain" [out]; the head is "layer{L}" with
// weight and bias only. Hidden units compute relu(gain * (W h + b)).

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "soupkit/datagen.hpp"
#include "soupkit/matrix.hpp"
#include "soupkit/tensor.hpp"

namespace soupkit {

struct ParamSpec {
    std::string name;
    Shape shape;
};

/// Per-row loss callback: receives logits for `row`, writes d(loss)/d(logits), returns the loss.
using RowLossFn = std::function<double(std::size_t row, std::span<const double> logits, std::span<double> dlogits)>;

class LogitModel {
public:
    virtual ~LogitModel() = default;

    [[nodiscard]] virtual int input_dim() const = 0;
    [[nodiscard]] virtual int num_classes() const = 0;
    [[nodiscard]] virtual const std::vector<ParamSpec>& layout() const = 0;

    [[nodiscard]] virtual LogitBatch logits(std::span<const double> params, const FeatureMatrix& x) const = 0;

    /// Sums loss(row) over rows and accumulates the parameter gradient of that sum into `grad`.
    virtual double value_and_grad(std::span<const double> params, const FeatureMatrix& x, const RowLossFn& loss,
                                  std::span<double> grad) const = 0;

    /// Sign pattern of every hidden pre-activation for one input (empty for models without kinks).
    [[nodiscard]] virtual std::vector<std::uint8_t> activation_pattern(std::span<const double> params,
                                                                       std::span<const float> x) const = 0;

    [[nodiscard]] std::size_t num_params() const;
    /// Validates names and shapes against layout(); throws ShapeMismatch.
    [[nodiscard]] std::vector<double> to_flat(const Checkpoint& ckpt) const;
    [[nodiscard]] Checkpoint to_checkpoint(std::span<const double> params) const;
    [[nodiscard]] LogitBatch forward(const Checkpoint& theta, const FeatureMatrix& x) const;
};

struct ArchSpec {
    /// input, hidden..., num_classes
    std::vector<int> layer_widths{16, 64, 8};

    /// Throws InvalidArgument unless there is at least one hidden layer and all widths are positive.
    void validate() const;
    [[nodiscard]] int num_hidden() const { return static_cast<int>(layer_widths.size()) - 2; }
};

nlohmann::json to_json(const ArchSpec& arch);
ArchSpec arch_spec_from_json(const nlohmann::json& j);

class Mlp final : public LogitModel {
public:
    explicit Mlp(ArchSpec arch);

    [[nodiscard]] int input_dim() const override { return arch_.layer_widths.front(); }
    [[nodiscard]] int num_classes() const override { return arch_.layer_widths.back(); }
    [[nodiscard]] const std::vector<ParamSpec>& layout() const override { return layout_; }
    [[nodiscard]] const ArchSpec& arch() const noexcept { return arch_; }

    [[nodiscard]] LogitBatch logits(std::span<const double> params, const FeatureMatrix& x) const override;
    double value_and_grad(std::span<const double> params, const FeatureMatrix& x, const RowLossFn& loss,
                          std::span<double> grad) const override;
    [[nodiscard]] std::vector<std::uint8_t> activation_pattern(std::span<const double> params,
                                                               std::span<const float> x) const override;

    /// He-normal weights, zero biases, unit gains.
    [[nodiscard]] Checkpoint initialize(std::uint64_t seed) const;

private:
    struct LayerOffsets {
        std::size_t weight, bias, gain;
        int in, out;
    };

    ArchSpec arch_;
    std::vector<ParamSpec> layout_;
    std::vector<LayerOffsets> layers_;
};

/// Affine softmax regression: logits = W x + b, linear in its parameters.
/// Parameters "layer0.weight" [C, D] and "layer0.bias" [C].
class LinearModel final : public LogitModel {
public:
    LinearModel(int input_dim, int num_classes);

    [[nodiscard]] int input_dim() const override { return input_dim_; }
    [[nodiscard]] int num_classes() const override { return num_classes_; }
    [[nodiscard]] const std::vector<ParamSpec>& layout() const override { return layout_; }

    [[nodiscard]] LogitBatch logits(std::span<const double> params, const FeatureMatrix& x) const override;
    double value_and_grad(std::span<const double> params, const FeatureMatrix& x, const RowLossFn& loss,
                          std::span<double> grad) const override;
    [[nodiscard]] std::vector<std::uint8_t> activation_pattern(std::span<const double>,
                                                               std::span<const float>) const override {
        return {};
    }

private:
    int input_dim_, num_classes_;
    std::vector<ParamSpec> layout_;
};

// ---- softmax cross-entropy ----

std::vector<double> softmax(std::span<const double> logits, double beta = 1.0);

/// (1 - s) * onehot(label) + s / C.
std::vector<double> smoothed_target(int label, int num_classes, double smoothing);

/// -sum_c t_c log softmax(beta f)_c; optionally writes d/df = beta * (p - t).
double soft_cross_entropy(std::span<const double> logits, std::span<const double> target, double beta,
                          std::span<double> dlogits = {});

/// Mean over rows of the smoothed cross-entropy of beta * logits.
double loss_ce(const LogitBatch& logits, std::span<const int> labels, double smoothing = 0.0, double beta = 1.0);

/// Gradient of the cross-entropy w.r.t. the logits: softmax(f) - e_y.
std::vector<double> logit_gradient(std::span<const double> logits, int label);

/// Var_{Y ~ softmax(f)}[v_Y] = v^T (diag(p) - p p^T) v.
double hessian_quadratic_form(std::span<const double> logits, std::span<const double> v);

/// Lowest index among maximal entries.
int argmax(std::span<const double> values);

/// Mean loss and its flat parameter gradient (written to `grad`, overwritten).
double loss_and_grad(const LogitModel& model, std::span<const double> params, const FeatureMatrix& x,
                     std::span<const int> labels, double smoothing, double beta, std::span<double> grad);

Checkpoint grad(const LogitModel& model, const Checkpoint& theta, const FeatureMatrix& x, std::span<const int> labels,
                double smoothing = 0.0, double beta = 1.0);

/// (f(theta + h delta) - 2 f(theta) + f(theta - h delta)) / h^2 per row and class, in double.
LogitBatch logit_second_directional(const LogitModel& model, std::span<const double> theta,
                                    std::span<const double> delta, const FeatureMatrix& x, double h = 1e-3);
LogitBatch logit_second_directional(const LogitModel& model, const Checkpoint& theta, const Checkpoint& delta,
                                    const FeatureMatrix& x, double h = 1e-3);

struct EvalReport {
    std::size_t n = 0;
    double loss = 0.0;
    double error = 0.0;
    double accuracy = 0.0;
    double ece = 0.0;
    std::optional<double> beta;
    std::optional<double> calibrated_loss;
};

nlohmann::json to_json(const EvalReport& r);

/// Top-1 error uses argmax with lowest-index tie-break; ECE uses 15 equal-mass bins
/// on softmax(beta f) confidences (beta = 1 when absent).
EvalReport evaluate_logits(const LogitBatch& logits, std::span<const int> labels,
                           std::optional<double> beta = std::nullopt);
EvalReport evaluate(const LogitModel& model, std::span<const double> params, const Split& split,
                    std::optional<double> beta = std::nullopt);
EvalReport evaluate(const LogitModel& model, const Checkpoint& theta, const Split& split,
                    std::optional<double> beta = std::nullopt);

/// Fraction of rows whose argmax equals the label.
double accuracy(const LogitBatch& logits, std::span<const int> labels);

}  // namespace soupkit
