// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace unias::io {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written with native little-endian stores");

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.write(b, 4);
}

void put_f32(std::ostream& out, float v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  char b[4];
  if (!in.read(b, 4)) throw DataError(what + ": truncated header");
  std::uint32_t v;
  std::memcpy(&v, b, 4);
  return v;
}

float get_f32(std::istream& in, const std::string& what) {
  char b[4];
  if (!in.read(b, 4)) throw DataError(what + ": truncated payload");
  float v;
  std::memcpy(&v, b, 4);
  return v;
}

void write_ust(std::ostream& out, const Tensor<float>& t) {
  out.write(kTensorMagic, sizeof(kTensorMagic));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::int64_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

Tensor<float> read_ust(std::istream& in, const std::string& what) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kTensorMagic, 8) != 0)
    throw DataError(what + ": not a USTENS01 tensor file");
  const std::uint32_t rank = get_u32(in, what);
  if (rank > 16) throw DataError(what + ": implausible rank " + std::to_string(rank));
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t e = get_u32(in, what);
    if (e == 0) throw DataError(what + ": zero extent");
    shape.push_back(e);
  }
  std::vector<float> values(static_cast<std::size_t>(numel(shape)));
  if (!in.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(float))))
    throw DataError(what + ": truncated payload");
  return Tensor<float>::from(std::move(shape), std::move(values));
}

void write_ust(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ostringstream os;
  write_ust(os, t);
  write_file(path, os.str());
}

Tensor<float> read_ust(const std::filesystem::path& path) {
  std::istringstream is(read_file(path));
  return read_ust(is, path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace unias::io
