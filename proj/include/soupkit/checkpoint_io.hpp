// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// SOUPCKPT on-disk format, version 1:
//
//   offset 0   8 bytes  magic "SOUPCKPT"
//   offset 8   u32 LE   format version (1)
//   offset 12  u64 LE   header length H
//   offset 20  H bytes  UTF-8 JSON header:
//                       {"meta":{...},"tensors":[{"name","shape","offset","nbytes"},...]}
//   zero padding up to the next multiple of 64 (payload base)
//   tensor payloads, little-endian float32, in header order; each tensor
//   starts at payload base + offset where offset is a multiple of 64.
//
// A checkpoint with no tensors is the 20-byte preamble plus the header.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "soupkit/tensor.hpp"

namespace soupkit {

inline constexpr char kCheckpointMagic[8] = {'S', 'O', 'U', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kPayloadAlignment = 64;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Atomic: writes a sibling temp file and renames it over `path`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Shared file helpers (atomic temp-file + rename writes).
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace soupkit
