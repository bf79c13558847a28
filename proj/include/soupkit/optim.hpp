// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// First-order optimizers over flat double parameter vectors.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace soupkit {

struct AdamWConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Decoupled weight decay: theta -= lr * wd * theta, then the bias-corrected Adam update.
class AdamW {
public:
    AdamW(std::size_t n, AdamWConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad, double lr);

    [[nodiscard]] long steps() const noexcept { return t_; }

private:
    AdamWConfig cfg_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

/// Heavy-ball SGD with L2 weight decay folded into the gradient:
/// buf = momentum * buf + (g + wd * theta); theta -= lr * buf.
class Sgd {
public:
    Sgd(std::size_t n, double momentum, double weight_decay) : momentum_(momentum), wd_(weight_decay), buf_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad, double lr);

private:
    double momentum_;
    double wd_;
    std::vector<double> buf_;
};

}  // namespace soupkit
