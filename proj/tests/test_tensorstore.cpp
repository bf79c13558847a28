// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container, SOUPCKPT format and weight-space arithmetic.

#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "soupkit/checkpoint_io.hpp"
#include "soupkit/error.hpp"
#include "soupkit/tensor.hpp"
#include "test_util.hpp"

using namespace soupkit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Checkpoint vec2(double x, double y) {
    return test::single("w", {static_cast<float>(x), static_cast<float>(y)});
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("empty checkpoint round-trips as a header-only file") {
    Checkpoint c;
    const auto bytes = encode_checkpoint(c);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(back.empty());
    CHECK(back.meta.empty());
    CHECK(encode_checkpoint(back) == bytes);
}

TEST_CASE("single tensor round-trips bitwise") {
    Checkpoint c;
    c.add(Tensor("w", {2, 3}, {0, 1, 2, 3, 4, 5}));
    const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
    REQUIRE(back.num_tensors() == 1);
    CHECK(back.at("w").shape == Shape{2, 3});
    CHECK(back.at("w").data == std::vector<float>{0, 1, 2, 3, 4, 5});
    CHECK(back == c);
}

TEST_CASE("meta is preserved verbatim") {
    Checkpoint c = test::single("w", {1.0f});
    c.meta["seed"] = "7";
    c.meta["note"] = "a \"quoted\" value\nwith newline";
    CHECK(decode_checkpoint(encode_checkpoint(c)).meta == c.meta);
}

TEST_CASE("randomized checkpoints round-trip byte-identically through files") {
    test::TempDir dir("ckpt");
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Checkpoint c = test::random_checkpoint(seed, 1 + static_cast<int>(seed % 5));
        const auto path = dir.path() / ("c" + std::to_string(seed) + ".soupckpt");
        save_checkpoint(c, path);
        const auto bytes = read_file_bytes(path);
        const Checkpoint back = load_checkpoint(path);
        CHECK(back == c);
        CHECK(encode_checkpoint(back) == bytes);
    }
}

TEST_CASE("corrupt files are rejected with specific kinds") {
    Checkpoint c = test::random_checkpoint(1);
    auto bytes = encode_checkpoint(c);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK(kind_of([&] { decode_checkpoint(bad_magic); }) == ErrorKind::BadMagic);

    auto bad_version = bytes;
    bad_version[8] = 2;
    CHECK(kind_of([&] { decode_checkpoint(bad_version); }) == ErrorKind::VersionMismatch);

    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 3);
    CHECK(kind_of([&] { decode_checkpoint(truncated); }) == ErrorKind::Truncated);

    const std::vector<std::uint8_t> tiny(bytes.begin(), bytes.begin() + 5);
    CHECK(kind_of([&] { decode_checkpoint(tiny); }) == ErrorKind::Truncated);

    CHECK(kind_of([&] { load_checkpoint("/nonexistent/soupkit/x.soupckpt"); }) == ErrorKind::MissingInput);
}

TEST_CASE("tensor invariants") {
    CHECK(kind_of([] { Tensor("w", {2, 2}, {1, 2, 3}); }) == ErrorKind::ShapeMismatch);
    CHECK(kind_of([] { Tensor("w", {0}); }) == ErrorKind::ShapeMismatch);
    Checkpoint c;
    c.add(Tensor("w", {1}));
    CHECK(kind_of([&] { c.add(Tensor("w", {1})); }) == ErrorKind::DuplicateName);
}

TEST_CASE("combine examples") {
    const Checkpoint a = test::single("w", {1.0f});
    const Checkpoint b = test::single("w", {3.0f});
    const double half[] = {0.5, 0.5};
    const Checkpoint ab[] = {a, b};
    CHECK(combine(half, ab).at("w").data[0] == 2.0f);

    const Checkpoint r = test::random_checkpoint(9);
    const double one[] = {1.0};
    const Checkpoint rr[] = {r};
    const Checkpoint same = combine(one, rr);
    for (std::size_t t = 0; t < r.num_tensors(); ++t) CHECK(same.tensors()[t].data == r.tensors()[t].data);

    const Checkpoint z = test::single("w", {0.0f});
    const Checkpoint f = test::single("w", {4.0f});
    const double w[] = {0.25, 0.75};
    const Checkpoint zf[] = {z, f};
    CHECK(combine(w, zf).at("w").data[0] == 3.0f);
}

TEST_CASE("combine is linear in the coefficients") {
    const Checkpoint c = test::random_checkpoint(4);
    const Checkpoint cs[] = {c};
    for (auto [a, b] : {std::pair{0.3, 0.45}, std::pair{1.25, 2.0}, std::pair{1e-3, 0.7}}) {
        const double ab[] = {a + b};
        const double aa[] = {a};
        const double bb[] = {b};
        const Checkpoint sum = combine(ab, cs);
        const Checkpoint pa = combine(aa, cs);
        const Checkpoint pb = combine(bb, cs);
        for (std::size_t t = 0; t < c.num_tensors(); ++t) {
            for (std::size_t i = 0; i < c.tensors()[t].size(); ++i) {
                const float lhs = sum.tensors()[t].data[i];
                const float rhs = static_cast<float>(static_cast<double>(pa.tensors()[t].data[i]) +
                                                     static_cast<double>(pb.tensors()[t].data[i]));
                const float ulp = std::nextafter(std::abs(lhs), INFINITY) - std::abs(lhs);
                CHECK(std::abs(lhs - rhs) <= ulp);
            }
        }
    }
}

TEST_CASE("uniform combine of identical checkpoints returns the input") {
    const Checkpoint c = test::random_checkpoint(11);
    for (std::size_t k : {1u, 2u, 3u, 7u, 10u}) {
        std::vector<Checkpoint> cs(k, c);
        std::vector<double> w(k, 1.0 / static_cast<double>(k));
        const Checkpoint m = combine(w, cs);
        for (std::size_t t = 0; t < c.num_tensors(); ++t) {
            for (std::size_t i = 0; i < c.tensors()[t].size(); ++i) {
                CHECK_THAT(m.tensors()[t].data[i], WithinRel(c.tensors()[t].data[i], 1e-6f));
            }
        }
    }
}

TEST_CASE("combine rejects mismatched inputs") {
    const Checkpoint a = test::single("w", {1.0f, 2.0f});
    const Checkpoint b = test::single("w", {1.0f});
    const Checkpoint c = test::single("v", {1.0f, 2.0f});
    const double w[] = {0.5, 0.5};
    const Checkpoint ab[] = {a, b};
    const Checkpoint ac[] = {a, c};
    CHECK(kind_of([&] { combine(w, ab); }) == ErrorKind::ShapeMismatch);
    CHECK(kind_of([&] { combine(w, ac); }) == ErrorKind::ShapeMismatch);
    const double one[] = {1.0};
    CHECK(kind_of([&] { combine(one, ab); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { combine(std::span<const double>{}, std::span<const Checkpoint>{}); }) == ErrorKind::EmptyInput);
}

TEST_CASE("angle examples") {
    const Checkpoint o = vec2(0, 0);
    CHECK_THAT(delta_angle(o, vec2(1, 0), vec2(0, 1)), WithinAbs(90.0, 1e-9));
    CHECK_THAT(delta_angle(o, vec2(3, 4), vec2(3, 4)), WithinAbs(0.0, 1e-6));
    CHECK_THAT(delta_angle(o, vec2(1, 0), vec2(1, 1)), WithinAbs(45.0, 1e-9));
    CHECK_THAT(delta_dot(o, vec2(1, 2), vec2(3, 4)), WithinAbs(11.0, 1e-12));
    CHECK_THAT(delta_norm(o, vec2(3, 4)), WithinAbs(5.0, 1e-12));
}

TEST_CASE("angle is symmetric and scale invariant") {
    const Checkpoint d1 = test::random_checkpoint(21);
    Checkpoint d2 = test::random_checkpoint(21);
    Rng rng(5);
    for (auto& t : d2.tensors()) {
        for (auto& v : t.data) v += static_cast<float>(rng.normal());
    }
    const double a = angle_between(d1, d2);
    CHECK_THAT(angle_between(d2, d1), WithinAbs(a, 1e-4));
    for (double s : {0.01, 3.0, 250.0}) {
        const double sc[] = {s};
        const Checkpoint one[] = {d1};
        CHECK_THAT(angle_between(combine(sc, one), d2), WithinAbs(a, 1e-4));
    }
}

TEST_CASE("zero delta has an undefined angle") {
    const Checkpoint o = vec2(1, 1);
    CHECK(kind_of([&] { delta_angle(o, o, vec2(2, 1)); }) == ErrorKind::UndefinedAngle);
}

TEST_CASE("param filters select by name") {
    Checkpoint c;
    c.add(Tensor("layer0.weight", {2}, {3, 4}));
    c.add(Tensor("layer0.bias", {1}, {100}));
    c.add(Tensor("layer0.gain", {1}, {100}));
    const auto f = ParamFilter::default_analysis();
    const Checkpoint sub = f.apply(c);
    REQUIRE(sub.num_tensors() == 1);
    CHECK(sub.tensors()[0].name == "layer0.weight");
    CHECK_THAT(norm(c, f), WithinAbs(5.0, 1e-12));
    CHECK(ParamFilter::all().apply(c).num_tensors() == 3);
}

TEST_CASE("flatten and unflatten invert each other") {
    const Checkpoint c = test::random_checkpoint(8);
    const auto flat = flatten(c);
    CHECK(flat.size() == c.num_elements());
    const Checkpoint back = unflatten(c, flat);
    for (std::size_t t = 0; t < c.num_tensors(); ++t) CHECK(back.tensors()[t].data == c.tensors()[t].data);
}

TEST_CASE("atomic writes leave no temp files behind") {
    test::TempDir dir("atomic");
    write_text_atomic(dir.path() / "sub" / "a.txt", "hello");
    CHECK(read_text_file(dir.path() / "sub" / "a.txt") == "hello");
    write_text_atomic(dir.path() / "sub" / "a.txt", "again");
    CHECK(read_text_file(dir.path() / "sub" / "a.txt") == "again");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path() / "sub")) ++files;
    CHECK(files == 1);
}
