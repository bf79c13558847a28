// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic classification tasks: each class is a mixture of
// Gaussian clusters around random centers, with train / held-out val / test splits from one distribution and a
// shift split drawn from a perturbed version of the test distribution.
//
// Stream order (single Rng seeded with cfg.seed):
//   1. cluster centers, (num_classes * clusters_per_class) x input_dim normals scaled by
//      class_center_scale; row c * clusters_per_class + k is cluster k of class c
//   2. mean-shift direction, input_dim normals (normalized)
//   3. rotation plane, 2 x input_dim normals (Gram-Schmidt orthonormalized)
//   4. splits train, val, test, shift; example j of a split has label c = j mod C,
//      cluster k = (j / C) mod clusters_per_class and features
//      center[c * clusters_per_class + k] + std * (input_dim normals)
// Steps 2 and 3 are always drawn, so every shift kind shares the other splits.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "soupkit/matrix.hpp"

namespace soupkit {

enum class ShiftKind { MeanShift, NoiseInflation, Rotation };
enum class SplitName { Train, Val, Test, Shift };

std::string_view to_string(ShiftKind kind);
ShiftKind parse_shift_kind(std::string_view text);
std::string_view to_string(SplitName split);
SplitName parse_split_name(std::string_view text);

struct DatasetConfig {
    int input_dim = 16;
    int num_classes = 8;
    int clusters_per_class = 4;
    int train_samples = 4096;
    int val_samples = 512;
    int test_samples = 2048;
    int shift_samples = 2048;
    double class_center_scale = 1.0;
    double within_class_std = 1.0;
    ShiftKind shift_kind = ShiftKind::MeanShift;
    double shift_magnitude = 1.0;
    std::uint64_t seed = 0;

    /// Throws InvalidArgument (zero samples, num_classes < 2, ...).
    void validate() const;
};

nlohmann::json to_json(const DatasetConfig& cfg);
/// Rejects unknown keys; missing keys keep their defaults.
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

struct Split {
    FeatureMatrix features;
    std::vector<int> labels;
    /// Global generation index of each example.
    std::vector<std::uint64_t> ids;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
};

struct Dataset {
    int input_dim = 0;
    int num_classes = 0;
    Split train, val, test, shift;

    /// Generator parameters (empty for datasets loaded from CSV); one row per cluster.
    int clusters_per_class = 1;
    Matrix<double> class_centers;
    Matrix<double> shift_centers;
    double shift_std = 0.0;

    [[nodiscard]] const Split& split(SplitName name) const;
};

Dataset generate(const DatasetConfig& cfg);

/// One split as CSV: header `label,f0,f1,...`, values with 9 significant digits.
void write_split_csv(const Split& split, const std::filesystem::path& path);
/// Throws MalformedFile on bad rows and labels outside [0, num_classes).
Split read_split_csv(const std::filesystem::path& path, int num_classes);

/// Writes dataset.json plus train/val/test/shift CSVs into `dir`.
void save_csv(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_csv(const std::filesystem::path& dir);

}  // namespace soupkit
