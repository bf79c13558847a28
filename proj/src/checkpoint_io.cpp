// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "soupkit/checkpoint_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "soupkit/error.hpp"

namespace soupkit {

namespace {

using json = nlohmann::json;

std::size_t align_up(std::size_t n) {
    return (n + kPayloadAlignment - 1) / kPayloadAlignment * kPayloadAlignment;
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xFF));
    }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[at + i]) << (8 * i);
    return v;
}

constexpr std::size_t kPreamble = 8 + 4 + 8;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    json header;
    header["meta"] = json::object();
    for (const auto& [k, v] : ckpt.meta) header["meta"][k] = v;
    header["tensors"] = json::array();
    std::size_t offset = 0;
    for (const auto& t : ckpt.tensors()) {
        const std::size_t nbytes = t.size() * sizeof(float);
        header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"nbytes", nbytes}});
        offset = align_up(offset + nbytes);
    }
    const std::string text = header.dump();

    std::vector<std::uint8_t> out;
    out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    if (ckpt.empty()) return out;

    const std::size_t base = align_up(out.size());
    offset = 0;
    for (const auto& t : ckpt.tensors()) {
        out.resize(base + offset, 0);
        for (float v : t.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
        offset = align_up(offset + t.size() * sizeof(float));
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= sizeof(kCheckpointMagic) &&
        std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        throw Error(ErrorKind::BadMagic, "not a SOUPCKPT file (bad magic)");
    }
    if (bytes.size() < kPreamble) throw Error(ErrorKind::Truncated, "checkpoint truncated in preamble");
    const auto version = get_le<std::uint32_t>(bytes, 8);
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::VersionMismatch, "unsupported SOUPCKPT version " + std::to_string(version));
    }
    const auto header_len = get_le<std::uint64_t>(bytes, 12);
    if (header_len > bytes.size() - kPreamble) throw Error(ErrorKind::Truncated, "checkpoint truncated in header");

    json header;
    try {
        header = json::parse(bytes.begin() + kPreamble, bytes.begin() + kPreamble + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedFile, std::string("malformed checkpoint header: ") + e.what());
    }

    Checkpoint ckpt;
    try {
        for (const auto& [k, v] : header.at("meta").items()) ckpt.meta[k] = v.get<std::string>();
        const auto& entries = header.at("tensors");
        const std::size_t base = align_up(kPreamble + header_len);
        std::unordered_set<std::string> seen;
        for (const auto& entry : entries) {
            auto name = entry.at("name").get<std::string>();
            if (!seen.insert(name).second) {
                throw Error(ErrorKind::DuplicateName, "duplicate tensor name '" + name + "' in checkpoint");
            }
            auto shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto nbytes = entry.at("nbytes").get<std::size_t>();
            const auto count = element_count(shape);
            if (count <= 0 || nbytes != static_cast<std::size_t>(count) * sizeof(float) ||
                offset % kPayloadAlignment != 0) {
                throw Error(ErrorKind::MalformedFile, "inconsistent header entry for tensor '" + name + "'");
            }
            if (base + offset + nbytes > bytes.size()) {
                throw Error(ErrorKind::Truncated, "payload of tensor '" + name + "' is truncated");
            }
            std::vector<float> data(static_cast<std::size_t>(count));
            for (std::size_t e = 0; e < data.size(); ++e) {
                data[e] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, base + offset + e * sizeof(float)));
            }
            ckpt.add(Tensor(std::move(name), std::move(shape), std::move(data)));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedFile, std::string("malformed checkpoint header: ") + e.what());
    }
    return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::random_device rd;
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(rd());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorKind::Io, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorKind::Io, "cannot rename into '" + path.string() + "': " + ec.message());
    }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingInput, "cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return {bytes.begin(), bytes.end()};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path));
}

}  // namespace soupkit
