// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Raw tensor files (".ust"): the 8-byte magic "USTENS01", a little-endian u32
// rank, one little-endian u32 per extent, then the float32 little-endian
// payload in row-major order.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "unias/tensor.hpp"

namespace unias::io {

inline constexpr char kTensorMagic[8] = {'U', 'S', 'T', 'E', 'N', 'S', '0', '1'};

void write_ust(std::ostream& out, const Tensor<float>& t);
Tensor<float> read_ust(std::istream& in, const std::string& what = "stream");

void write_ust(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> read_ust(const std::filesystem::path& path);

// Little-endian primitives shared by the checkpoint format.
void put_u32(std::ostream& out, std::uint32_t v);
void put_f32(std::ostream& out, float v);
std::uint32_t get_u32(std::istream& in, const std::string& what);
float get_f32(std::istream& in, const std::string& what);

/// Whole-file read, throwing DataError when the file is missing.
std::string read_file(const std::filesystem::path& path);
/// Writes `bytes` to `path`, creating parent directories; DataError on failure.
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace unias::io
