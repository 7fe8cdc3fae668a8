// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic synthetic corpus: one texture family per category, normal-only
// training images, and test images with spot, scratch or rectangle defects.
//
// Layout: <root>/<category>/train/good/NNN.ppm, <category>/test/good/NNN.ppm,
// <category>/test/anomalous/NNN.ppm with NNN_mask.pgm, and manifest.json.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "unias/tensor.hpp"

namespace unias::synth {

struct CategorySpec {
  std::string name;
  std::string texture;  // stripes | checker | blobs | weave | grain
  double target_ar = 0.03;
};

struct CorpusSpec {
  std::vector<CategorySpec> categories = {{"stripes", "stripes", 0.02},
                                          {"checker", "checker", 0.03},
                                          {"blobs", "blobs", 0.04},
                                          {"weave", "weave", 0.03},
                                          {"grain", "grain", 0.05}};
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t train_count = 200;
  std::int64_t test_normal = 40;
  std::int64_t test_anomalous = 40;
  std::vector<std::string> anomaly_types = {"spot", "scratch", "rectangle"};
  double contrast_floor = 0.25;  // minimum max-channel change at a defect pixel, in [0,1]
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument, including when a target AR cannot fit.
  void validate() const;
  /// Mean defect area per anomalous image needed to meet `target_ar`.
  double defect_area(const CategorySpec& c) const;
};

void to_json(nlohmann::json& j, const CategorySpec& c);
void from_json(const nlohmann::json& j, CategorySpec& c);
void to_json(nlohmann::json& j, const CorpusSpec& s);
/// Unknown keys throw std::invalid_argument.
void from_json(const nlohmann::json& j, CorpusSpec& s);

/// 8-bit RGB raster, row-major interleaved.
struct Rgb8 {
  std::int64_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
};

struct Rendered {
  Rgb8 image;
  Rgb8 normal;                     // the same image without the defect
  std::vector<std::uint8_t> mask;  // 0/1, H·W
};

/// Renders one image; `defect_area` <= 0 means a normal image.
Rendered render(const CorpusSpec& spec, std::size_t category, std::uint64_t image_seed,
                double defect_area);

struct FileEntry {
  std::string image;  // path relative to the corpus root
  std::string mask;   // empty for normal images
  std::string category;
  std::string split;  // train | test
  bool anomalous = false;
  std::string image_hash;
  std::string mask_hash;
  std::uint64_t seed = 0;
};

struct CategoryStats {
  std::string name;
  double target_ar = 0;
  double measured_ar = 0;
  std::uint64_t seed = 0;
};

struct Manifest {
  CorpusSpec spec;
  std::vector<CategoryStats> categories;
  std::vector<FileEntry> files;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

/// Writes the corpus under `root`; DataError when it cannot be written.
Manifest generate(const CorpusSpec& spec, const std::filesystem::path& root);

struct Sample {
  std::string id;        // image path without extension
  std::string category;
  std::string split;
  bool anomalous = false;
  Tensor<float> image;   // [3,H,W] in [0,1]
  std::vector<std::uint8_t> mask;  // 0/1, all zero for normal images
};

/// Read access with hash validation; iteration order is the manifest order.
class Corpus {
 public:
  /// Reads and parses manifest.json; DataError when missing or malformed.
  explicit Corpus(std::filesystem::path root);

  const Manifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }
  /// Entries of one split ("" for all), optionally of one category.
  std::vector<const FileEntry*> entries(const std::string& split,
                                        const std::string& category = "") const;
  /// Loads and verifies one entry; DataError naming the file on any mismatch.
  Sample load(const FileEntry& entry) const;

 private:
  std::filesystem::path root_;
  Manifest manifest_;
};

std::string hash_hex(const std::string& bytes);
std::string encode_ppm(const Rgb8& image);
Rgb8 decode_ppm(const std::string& bytes, const std::string& what);
/// Masks are written as 0/255 and read back as 0/1.
std::string encode_pgm(const std::vector<std::uint8_t>& mask, std::int64_t height, std::int64_t width);
std::vector<std::uint8_t> decode_pgm(const std::string& bytes, std::int64_t height, std::int64_t width,
                                     const std::string& what);

}  // namespace unias::synth
