// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "soupkit/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

#include "soupkit/error.hpp"

namespace soupkit {

std::uint64_t SplitMix64::next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words) {
    std::uint64_t h = 0x6A09E667F3BCC908ULL;
    for (auto w : words) {
        SplitMix64 sm(h ^ w);
        h = sm.next();
    }
    return h;
}

Rng::Rng(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
}

std::uint64_t Rng::next() {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
}

double Rng::normal() {
    if (cached_normal_) {
        const double z = *cached_normal_;
        cached_normal_.reset();
        return z;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(angle);
    return r * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "Rng::below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = next();
    } while (x >= limit);
    return x % n;
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma shape must be positive");
    if (shape < 1.0) {
        const double g = gamma(shape + 1.0);
        return g * std::pow(uniform_open(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

namespace {

// log of a Gamma(shape) variate; same draws as Rng::gamma, but small shapes cannot underflow to 0.
double log_gamma_variate(Rng& rng, double shape) {
    if (!(shape > 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma shape must be positive");
    if (shape < 1.0) return std::log(rng.gamma(shape + 1.0)) + std::log(rng.uniform_open()) / shape;
    return std::log(rng.gamma(shape));
}

}  // namespace

double Rng::beta(double a, double b) {
    const double lx = log_gamma_variate(*this, a);
    const double ly = log_gamma_variate(*this, b);
    return 1.0 / (1.0 + std::exp(ly - lx));
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(p));
    return p;
}

}  // namespace soupkit
