// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named float tensors, checkpoints, and exact linear algebra over parameter sets.
// All reductions accumulate in double and round to float only on output.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace soupkit {

using Shape = std::vector<std::int64_t>;

std::int64_t element_count(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct Tensor {
    std::string name;
    Shape shape;
    std::vector<float> data;

    Tensor() = default;
    /// Throws ShapeMismatch if data.size() != product(shape) or any dimension is non-positive.
    Tensor(std::string name, Shape shape, std::vector<float> data);
    /// Zero-filled tensor.
    Tensor(std::string name, Shape shape);

    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

using Meta = std::map<std::string, std::string>;

/// Ordered name -> tensor map plus free-form metadata. Insertion order is the
/// serialization order and the flattening order.
class Checkpoint {
public:
    Checkpoint() = default;

    /// Throws DuplicateName if a tensor with the same name already exists.
    void add(Tensor tensor);

    [[nodiscard]] const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
    [[nodiscard]] std::vector<Tensor>& tensors() noexcept { return tensors_; }
    [[nodiscard]] std::size_t num_tensors() const noexcept { return tensors_.size(); }
    [[nodiscard]] bool empty() const noexcept { return tensors_.empty(); }
    [[nodiscard]] std::size_t num_elements() const noexcept;

    [[nodiscard]] const Tensor* find(std::string_view name) const;
    /// Throws InvalidArgument when absent.
    [[nodiscard]] const Tensor& at(std::string_view name) const;

    Meta meta;

    friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
        return a.tensors_ == b.tensors_ && a.meta == b.meta;
    }

private:
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Identical name sets (in identical order) and per-name shapes.
bool shape_compatible(const Checkpoint& a, const Checkpoint& b);
void require_shape_compatible(const Checkpoint& a, const Checkpoint& b);

/// Include-predicate over tensor names.
class ParamFilter {
public:
    using Predicate = std::function<bool(std::string_view)>;

    explicit ParamFilter(Predicate include, std::string description = "custom")
        : include_(std::move(include)), description_(std::move(description)) {}

    static ParamFilter all();
    /// Excludes names ending in ".gain" or ".bias".
    static ParamFilter default_analysis();
    static ParamFilter exclude_suffixes(std::vector<std::string> suffixes);

    [[nodiscard]] bool includes(std::string_view name) const { return include_(name); }
    [[nodiscard]] const std::string& description() const noexcept { return description_; }

    [[nodiscard]] Checkpoint apply(const Checkpoint& ckpt) const;

private:
    Predicate include_;
    std::string description_;
};

/// Element-wise sum_i coeffs[i] * ckpts[i], left-to-right in double, rounded to float.
/// The result's meta records the recipe.
Checkpoint combine(std::span<const double> coeffs, std::span<const Checkpoint> ckpts);
Checkpoint combine(std::span<const double> coeffs, std::span<const Checkpoint* const> ckpts);

/// a - b (rounded to float).
Checkpoint difference(const Checkpoint& a, const Checkpoint& b);

double dot(const Checkpoint& a, const Checkpoint& b, const ParamFilter& filter = ParamFilter::all());
double norm(const Checkpoint& a, const ParamFilter& filter = ParamFilter::all());

/// <a - origin, b - origin> with the differences formed in double.
double delta_dot(const Checkpoint& origin, const Checkpoint& a, const Checkpoint& b,
                 const ParamFilter& filter = ParamFilter::all());
double delta_norm(const Checkpoint& origin, const Checkpoint& a,
                  const ParamFilter& filter = ParamFilter::all());

/// Angle in degrees between two direction checkpoints. Throws UndefinedAngle on a zero norm.
double angle_between(const Checkpoint& d1, const Checkpoint& d2,
                     const ParamFilter& filter = ParamFilter::all());
/// Angle in degrees between a - origin and b - origin.
double delta_angle(const Checkpoint& origin, const Checkpoint& a, const Checkpoint& b,
                   const ParamFilter& filter = ParamFilter::all());

/// Concatenated parameters as doubles, in tensor order.
std::vector<double> flatten(const Checkpoint& ckpt);
/// Rebuilds a checkpoint shaped like `like` from flat values (rounded to float).
Checkpoint unflatten(const Checkpoint& like, std::span<const double> values);

bool all_finite(const Checkpoint& ckpt);

}  // namespace soupkit
