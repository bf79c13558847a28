// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Library-wide error type. Every failure carries a machine-readable kind so the
// CLI can map it onto a stable exit code.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace soupkit {

enum class ErrorKind {
    InvalidArgument,
    ShapeMismatch,
    EmptyInput,
    BadMagic,
    VersionMismatch,
    Truncated,
    DuplicateName,
    MalformedFile,
    Io,
    Divergence,
    UndefinedAngle,
    Degenerate,
    Config,
    MissingInput,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace soupkit
