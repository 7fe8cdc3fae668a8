// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint files: magic "UASCKPT1", u32 version, u32 entry count, then per
// entry a u32 name length, the name bytes, u32 rank, u32 extents and the
// float32 payload. All integers and floats are little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "unias/optim.hpp"

namespace unias::checkpoint {

inline constexpr char kMagic[8] = {'U', 'A', 'S', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kVersion = 1;

struct Entry {
  std::string name;
  Tensor<float> tensor;
};

std::string serialize(const ParamStore<float>& params);
std::vector<Entry> deserialize(const std::string& bytes, const std::string& what = "checkpoint");

void save(const std::filesystem::path& path, const ParamStore<float>& params);
std::vector<Entry> read(const std::filesystem::path& path);

/// Copies stored values into `params`; names, order and shapes must match exactly.
void load_into(const std::vector<Entry>& entries, ParamStore<float>& params,
               const std::string& what = "checkpoint");
void load(const std::filesystem::path& path, ParamStore<float>& params);

}  // namespace unias::checkpoint
