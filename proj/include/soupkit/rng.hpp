// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Portable deterministic random numbers. Everything here is defined by its
// update equations so streams are reproducible across implementations:
//
//   SplitMix64:   z = (s += 0x9E3779B97F4A7C15);
//                 z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//                 z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//                 return z ^ (z >> 31);
//   Xoshiro256**: state s[0..3] filled by four SplitMix64 outputs of the seed;
//                 result = rotl(s[1] * 5, 7) * 9, then the standard xoshiro256 state update.
//
// Derived draws:
//   uniform()      = (next() >> 11) * 2^-53                     in [0, 1)
//   uniform_open() = ((next() >> 11) + 1) * 2^-53               in (0, 1]
//   normal()       Box-Muller: u1 = uniform_open(), u2 = uniform(),
//                  r = sqrt(-2 ln u1); returns r cos(2 pi u2) and caches
//                  r sin(2 pi u2) for the following call.
//   below(n)       rejection sampling on next() to an unbiased integer in [0, n).
//   shuffle        Fisher-Yates from the last index down, j = below(i + 1).
//   gamma(k)       Marsaglia-Tsang; k < 1 uses gamma(k + 1) * uniform_open()^(1/k).
//   beta(a, b)     x / (x + y) with x = gamma(a), y = gamma(b), formed from log x and log y.

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace soupkit {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();

private:
    std::uint64_t state_;
};

/// Mixes a sequence of words into one seed (SplitMix64 chaining).
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words);

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return next(); }

    std::uint64_t next();
    double uniform();
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    std::uint64_t below(std::uint64_t n);
    double gamma(double shape);
    double beta(double a, double b);

    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::array<std::uint64_t, 4> s_{};
    std::optional<double> cached_normal_;
};

}  // namespace soupkit
