// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "soupkit/optim.hpp"

#include <cmath>

namespace soupkit {

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= lr * cfg_.weight_decay * params[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
}

void Sgd::step(std::span<double> params, std::span<const double> grad, double lr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] + wd_ * params[i];
        buf_[i] = momentum_ * buf_[i] + g;
        params[i] -= lr * buf_[i];
    }
}

}  // namespace soupkit
