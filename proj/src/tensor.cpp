// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "soupkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "soupkit/error.hpp"

namespace soupkit {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::ShapeMismatch: return "shape_mismatch";
        case ErrorKind::EmptyInput: return "empty_input";
        case ErrorKind::BadMagic: return "bad_magic";
        case ErrorKind::VersionMismatch: return "version_mismatch";
        case ErrorKind::Truncated: return "truncated";
        case ErrorKind::DuplicateName: return "duplicate_name";
        case ErrorKind::MalformedFile: return "malformed_file";
        case ErrorKind::Io: return "io";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::UndefinedAngle: return "undefined_angle";
        case ErrorKind::Degenerate: return "degenerate";
        case ErrorKind::Config: return "config";
        case ErrorKind::MissingInput: return "missing_input";
    }
    return "unknown";
}

std::int64_t element_count(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::string name_, Shape shape_, std::vector<float> data_)
    : name(std::move(name_)), shape(std::move(shape_)), data(std::move(data_)) {
    for (auto d : shape) {
        if (d <= 0) {
            throw Error(ErrorKind::ShapeMismatch,
                        "tensor '" + name + "' has non-positive dimension in shape " + shape_to_string(shape));
        }
    }
    if (static_cast<std::int64_t>(data.size()) != element_count(shape)) {
        throw Error(ErrorKind::ShapeMismatch, "tensor '" + name + "' has " + std::to_string(data.size()) +
                                                  " values for shape " + shape_to_string(shape));
    }
}

Tensor::Tensor(std::string name_, Shape shape_)
    : Tensor(std::move(name_), shape_, std::vector<float>(static_cast<std::size_t>(element_count(shape_)), 0.0f)) {}

void Checkpoint::add(Tensor tensor) {
    if (index_.contains(tensor.name)) {
        throw Error(ErrorKind::DuplicateName, "duplicate tensor name '" + tensor.name + "'");
    }
    index_.emplace(tensor.name, tensors_.size());
    tensors_.push_back(std::move(tensor));
}

std::size_t Checkpoint::num_elements() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

const Tensor* Checkpoint::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &tensors_[it->second];
}

const Tensor& Checkpoint::at(std::string_view name) const {
    const Tensor* t = find(name);
    if (!t) throw Error(ErrorKind::InvalidArgument, "no tensor named '" + std::string(name) + "'");
    return *t;
}

bool shape_compatible(const Checkpoint& a, const Checkpoint& b) {
    if (a.num_tensors() != b.num_tensors()) return false;
    for (std::size_t i = 0; i < a.num_tensors(); ++i) {
        const auto& ta = a.tensors()[i];
        const auto& tb = b.tensors()[i];
        if (ta.name != tb.name || ta.shape != tb.shape) return false;
    }
    return true;
}

void require_shape_compatible(const Checkpoint& a, const Checkpoint& b) {
    if (!shape_compatible(a, b)) {
        throw Error(ErrorKind::ShapeMismatch, "checkpoints are not shape-compatible");
    }
}

ParamFilter ParamFilter::all() {
    return ParamFilter([](std::string_view) { return true; }, "all");
}

ParamFilter ParamFilter::default_analysis() {
    return exclude_suffixes({".gain", ".bias"});
}

ParamFilter ParamFilter::exclude_suffixes(std::vector<std::string> suffixes) {
    std::string desc = "exclude:";
    for (const auto& s : suffixes) desc += s;
    return ParamFilter(
        [suffixes = std::move(suffixes)](std::string_view name) {
            return std::none_of(suffixes.begin(), suffixes.end(),
                                [&](const std::string& s) { return name.ends_with(s); });
        },
        desc);
}

Checkpoint ParamFilter::apply(const Checkpoint& ckpt) const {
    Checkpoint out;
    out.meta = ckpt.meta;
    for (const auto& t : ckpt.tensors()) {
        if (includes(t.name)) out.add(t);
    }
    return out;
}

namespace {

std::string format_coeffs(std::span<const double> coeffs) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        if (i) os << ',';
        os << coeffs[i];
    }
    return os.str();
}

}  // namespace

Checkpoint combine(std::span<const double> coeffs, std::span<const Checkpoint* const> ckpts) {
    if (ckpts.empty()) throw Error(ErrorKind::EmptyInput, "combine: no checkpoints");
    if (coeffs.size() != ckpts.size()) {
        throw Error(ErrorKind::InvalidArgument, "combine: " + std::to_string(coeffs.size()) +
                                                    " coefficients for " + std::to_string(ckpts.size()) +
                                                    " checkpoints");
    }
    const Checkpoint& first = *ckpts[0];
    for (std::size_t i = 1; i < ckpts.size(); ++i) require_shape_compatible(first, *ckpts[i]);

    Checkpoint out;
    for (std::size_t t = 0; t < first.num_tensors(); ++t) {
        const Tensor& proto = first.tensors()[t];
        std::vector<float> values(proto.size());
        for (std::size_t e = 0; e < values.size(); ++e) {
            double acc = 0.0;
            for (std::size_t i = 0; i < ckpts.size(); ++i) {
                acc += coeffs[i] * static_cast<double>(ckpts[i]->tensors()[t].data[e]);
            }
            values[e] = static_cast<float>(acc);
        }
        out.add(Tensor(proto.name, proto.shape, std::move(values)));
    }
    out.meta["recipe"] = "combine";
    out.meta["coefficients"] = format_coeffs(coeffs);
    return out;
}

Checkpoint combine(std::span<const double> coeffs, std::span<const Checkpoint> ckpts) {
    std::vector<const Checkpoint*> ptrs;
    ptrs.reserve(ckpts.size());
    for (const auto& c : ckpts) ptrs.push_back(&c);
    return combine(coeffs, std::span<const Checkpoint* const>(ptrs));
}

Checkpoint difference(const Checkpoint& a, const Checkpoint& b) {
    const double coeffs[] = {1.0, -1.0};
    const Checkpoint* ptrs[] = {&a, &b};
    Checkpoint d = combine(coeffs, std::span<const Checkpoint* const>(ptrs));
    d.meta = {{"recipe", "difference"}};
    return d;
}

double dot(const Checkpoint& a, const Checkpoint& b, const ParamFilter& filter) {
    require_shape_compatible(a, b);
    double acc = 0.0;
    for (std::size_t t = 0; t < a.num_tensors(); ++t) {
        const auto& ta = a.tensors()[t];
        if (!filter.includes(ta.name)) continue;
        const auto& tb = b.tensors()[t];
        for (std::size_t e = 0; e < ta.size(); ++e) {
            acc += static_cast<double>(ta.data[e]) * static_cast<double>(tb.data[e]);
        }
    }
    return acc;
}

double norm(const Checkpoint& a, const ParamFilter& filter) {
    return std::sqrt(dot(a, a, filter));
}

double delta_dot(const Checkpoint& origin, const Checkpoint& a, const Checkpoint& b, const ParamFilter& filter) {
    require_shape_compatible(origin, a);
    require_shape_compatible(origin, b);
    double acc = 0.0;
    for (std::size_t t = 0; t < origin.num_tensors(); ++t) {
        const auto& to = origin.tensors()[t];
        if (!filter.includes(to.name)) continue;
        const auto& ta = a.tensors()[t];
        const auto& tb = b.tensors()[t];
        for (std::size_t e = 0; e < to.size(); ++e) {
            const double o = to.data[e];
            acc += (static_cast<double>(ta.data[e]) - o) * (static_cast<double>(tb.data[e]) - o);
        }
    }
    return acc;
}

double delta_norm(const Checkpoint& origin, const Checkpoint& a, const ParamFilter& filter) {
    return std::sqrt(delta_dot(origin, a, a, filter));
}

namespace {

double angle_from(double d12, double n1, double n2) {
    if (!(n1 > 0.0) || !(n2 > 0.0)) {
        throw Error(ErrorKind::UndefinedAngle, "angle undefined for a zero-norm delta");
    }
    const double c = std::clamp(d12 / (n1 * n2), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace

double angle_between(const Checkpoint& d1, const Checkpoint& d2, const ParamFilter& filter) {
    return angle_from(dot(d1, d2, filter), norm(d1, filter), norm(d2, filter));
}

double delta_angle(const Checkpoint& origin, const Checkpoint& a, const Checkpoint& b, const ParamFilter& filter) {
    return angle_from(delta_dot(origin, a, b, filter), delta_norm(origin, a, filter),
                      delta_norm(origin, b, filter));
}

std::vector<double> flatten(const Checkpoint& ckpt) {
    std::vector<double> out;
    out.reserve(ckpt.num_elements());
    for (const auto& t : ckpt.tensors()) {
        for (float v : t.data) out.push_back(v);
    }
    return out;
}

Checkpoint unflatten(const Checkpoint& like, std::span<const double> values) {
    if (values.size() != like.num_elements()) {
        throw Error(ErrorKind::ShapeMismatch, "unflatten: expected " + std::to_string(like.num_elements()) +
                                                  " values, got " + std::to_string(values.size()));
    }
    Checkpoint out;
    std::size_t offset = 0;
    for (const auto& t : like.tensors()) {
        std::vector<float> data(t.size());
        for (std::size_t e = 0; e < data.size(); ++e) data[e] = static_cast<float>(values[offset + e]);
        offset += t.size();
        out.add(Tensor(t.name, t.shape, std::move(data)));
    }
    return out;
}

bool all_finite(const Checkpoint& ckpt) {
    for (const auto& t : ckpt.tensors()) {
        for (float v : t.data) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

}  // namespace soupkit
