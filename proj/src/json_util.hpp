// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Strict reading of JSON objects: every key must be consumed, otherwise the
// object is rejected as a config error.

#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "soupkit/error.hpp"

namespace soupkit::detail {

class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string context) : j_(j), context_(std::move(context)) {
        if (!j_.is_object()) throw Error(ErrorKind::Config, context_ + ": expected an object");
    }

    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!j_.contains(key)) return;
        used_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Config, context_ + "." + key + ": " + e.what());
        }
    }

    const nlohmann::json* child(const std::string& key) {
        if (!j_.contains(key)) return nullptr;
        used_.insert(key);
        return &j_.at(key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!used_.contains(k)) throw Error(ErrorKind::Config, context_ + ": unknown key '" + k + "'");
        }
    }

    [[nodiscard]] const std::string& context() const noexcept { return context_; }

private:
    const nlohmann::json& j_;
    std::string context_;
    std::set<std::string> used_;
};

}  // namespace soupkit::detail
