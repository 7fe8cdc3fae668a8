// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "unias/tensor_io.hpp"

namespace unias::checkpoint {

std::string serialize(const ParamStore<float>& params) {
  std::ostringstream out;
  out.write(kMagic, sizeof(kMagic));
  io::put_u32(out, kVersion);
  io::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    io::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    io::put_u32(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::int64_t d : e.tensor.shape()) io::put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(e.tensor.data().data()),
              static_cast<std::streamsize>(e.tensor.numel() * sizeof(float)));
  }
  return out.str();
}

std::vector<Entry> deserialize(const std::string& bytes, const std::string& what) {
  std::istringstream in(bytes);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError(what + ": not a UASCKPT1 checkpoint");
  const std::uint32_t version = io::get_u32(in, what);
  if (version != kVersion)
    throw DataError(what + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = io::get_u32(in, what);
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = io::get_u32(in, what);
    if (len > 4096) throw DataError(what + ": implausible name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError(what + ": truncated entry name");
    const std::uint32_t rank = io::get_u32(in, what);
    if (rank > 16) throw DataError(what + ": implausible rank for " + name);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(io::get_u32(in, what));
    if (std::any_of(shape.begin(), shape.end(), [](std::int64_t d) { return d <= 0; }))
      throw DataError(what + ": zero extent in " + name);
    std::vector<float> values(static_cast<std::size_t>(numel(shape)));
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(float))))
      throw DataError(what + ": truncated payload for " + name);
    entries.push_back({std::move(name), Tensor<float>::from(std::move(shape), std::move(values))});
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(what + ": trailing bytes");
  return entries;
}

void save(const std::filesystem::path& path, const ParamStore<float>& params) {
  io::write_file(path, serialize(params));
}

std::vector<Entry> read(const std::filesystem::path& path) {
  return deserialize(io::read_file(path), path.string());
}

void load_into(const std::vector<Entry>& entries, ParamStore<float>& params,
               const std::string& what) {
  if (entries.size() != params.size())
    throw DataError(what + ": holds " + std::to_string(entries.size()) +
                    " tensors, model has " + std::to_string(params.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& dst = params.entries()[i];
    const auto& src = entries[i];
    if (src.name != dst.name)
      throw DataError(what + ": entry " + std::to_string(i) + " is '" + src.name +
                      "', model expects '" + dst.name + "'");
    if (src.tensor.shape() != dst.tensor.shape())
      throw DataError(what + ": " + src.name + " has shape " + to_string(src.tensor.shape()) +
                      ", model expects " + to_string(dst.tensor.shape()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor<float> dst = params.entries()[i].tensor;
    std::copy(entries[i].tensor.values().begin(), entries[i].tensor.values().end(),
              dst.values().begin());
  }
}

void load(const std::filesystem::path& path, ParamStore<float>& params) {
  load_into(read(path), params, path.string());
}

}  // namespace unias::checkpoint
