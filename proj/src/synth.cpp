// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "unias/rng.hpp"
#include "unias/tensor_io.hpp"

namespace unias::synth {

namespace {

const std::set<std::string> kTextures = {"stripes", "checker", "blobs", "weave", "grain"};
const std::set<std::string> kDefects = {"spot", "scratch", "rectangle"};

using Color = std::array<double, 3>;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::uint64_t category_seed(const CorpusSpec& spec, std::size_t category) {
  return rng::derive(rng::derive(spec.seed, "data"), static_cast<std::uint64_t>(category));
}

// Smooth value noise on a coarse lattice of `cells`×`cells`, in [0,1].
std::vector<double> value_noise(std::mt19937_64& rng, std::int64_t h, std::int64_t w, int cells) {
  std::vector<double> lattice(static_cast<std::size_t>((cells + 1) * (cells + 1)));
  for (double& v : lattice) v = uniform(rng, 0, 1);
  std::vector<double> out(static_cast<std::size_t>(h * w));
  auto smooth = [](double t) { return t * t * (3 - 2 * t); };
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const double gy = static_cast<double>(y) / h * cells, gx = static_cast<double>(x) / w * cells;
      const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
      const double fy = smooth(gy - y0), fx = smooth(gx - x0);
      auto at = [&](int yy, int xx) { return lattice[yy * (cells + 1) + xx]; };
      out[y * w + x] = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                       fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
    }
  return out;
}

// Mixing weight in [0,1] of the two palette colours at every pixel.
std::vector<double> texture(const std::string& family, std::mt19937_64& cat_rng,
                            std::mt19937_64& rng, std::int64_t h, std::int64_t w) {
  std::vector<double> f(static_cast<std::size_t>(h * w));
  const double two_pi = 2 * std::numbers::pi;
  if (family == "stripes" || family == "weave") {
    const double base_angle = uniform(cat_rng, 0, std::numbers::pi);
    const double period = uniform(cat_rng, 6, 10);
    const double angle = base_angle + uniform(rng, -0.08, 0.08);
    const double phase = uniform(rng, 0, two_pi), phase2 = uniform(rng, 0, two_pi);
    const double c = std::cos(angle), s = std::sin(angle);
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const double u = (x * c + y * s) / period * two_pi + phase;
        if (family == "stripes") {
          f[y * w + x] = 0.5 + 0.5 * std::sin(u);
        } else {
          const double v = (-x * s + y * c) / period * two_pi + phase2;
          f[y * w + x] = 0.5 + 0.25 * (std::sin(u) + std::sin(v));
        }
      }
  } else if (family == "checker") {
    const double cell = uniform(cat_rng, 6, 10);
    const double oy = uniform(rng, 0, 2 * cell), ox = uniform(rng, 0, 2 * cell);
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const auto a = static_cast<std::int64_t>(std::floor((y + oy) / cell));
        const auto b = static_cast<std::int64_t>(std::floor((x + ox) / cell));
        f[y * w + x] = ((a + b) % 2 == 0) ? 0.15 : 0.85;
      }
  } else if (family == "blobs") {
    const auto n = value_noise(rng, h, w, 5);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::clamp((n[i] - 0.5) * 2.5 + 0.5, 0.0, 1.0);
  } else {  // grain
    const auto coarse = value_noise(rng, h, w, 8);
    const auto fine = value_noise(rng, h, w, 21);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = 0.6 * coarse[i] + 0.4 * fine[i];
  }
  return f;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void paint(Rgb8& img, std::vector<std::uint8_t>& mask, std::int64_t y, std::int64_t x,
           const Color& c) {
  if (y < 0 || y >= img.height || x < 0 || x >= img.width) return;
  const std::size_t p = static_cast<std::size_t>(y * img.width + x);
  for (int ch = 0; ch < 3; ++ch) img.pixels[p * 3 + ch] = quantize(c[ch]);
  mask[p] = 1;
}

void draw_defect(const std::string& type, double area, std::mt19937_64& rng, Rgb8& img,
                 std::vector<std::uint8_t>& mask) {
  const std::int64_t h = img.height, w = img.width;
  const Color color = {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)};
  if (type == "spot") {
    const double aspect = uniform(rng, 0.6, 1.6);
    const double r = std::sqrt(area / std::numbers::pi);
    const double ry = r / std::sqrt(aspect), rx = r * std::sqrt(aspect);
    const double cy = uniform(rng, std::min(ry, h / 2.0), std::max(h - ry, h / 2.0));
    const double cx = uniform(rng, std::min(rx, w / 2.0), std::max(w - rx, w / 2.0));
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        if (dy * dy + dx * dx <= 1.0) paint(img, mask, y, x, color);
      }
  } else if (type == "rectangle") {
    const double aspect = uniform(rng, 0.5, 2.0);
    const auto rw = std::clamp<std::int64_t>(std::lround(std::sqrt(area * aspect)), 1, w);
    const auto rh = std::clamp<std::int64_t>(std::lround(area / static_cast<double>(rw)), 1, h);
    const auto y0 = std::uniform_int_distribution<std::int64_t>(0, h - rh)(rng);
    const auto x0 = std::uniform_int_distribution<std::int64_t>(0, w - rw)(rng);
    for (std::int64_t y = y0; y < y0 + rh; ++y)
      for (std::int64_t x = x0; x < x0 + rw; ++x) paint(img, mask, y, x, color);
  } else {  // scratch: a three-segment polyline 1-3 px wide
    const int width = std::uniform_int_distribution<int>(1, 3)(rng);
    const double length = area / width;
    const Color ink = uniform(rng, 0, 1) < 0.5 ? Color{0.03, 0.03, 0.03} : Color{0.97, 0.97, 0.97};
    double y = uniform(rng, h * 0.25, h * 0.75), x = uniform(rng, w * 0.25, w * 0.75);
    double heading = uniform(rng, 0, 2 * std::numbers::pi);
    const double lo = (width - 1) / 2.0;
    for (int seg = 0; seg < 3; ++seg) {
      heading += uniform(rng, -0.7, 0.7);
      const double seg_len = length / 3;
      for (double t = 0; t < seg_len; t += 0.25) {
        const double py = y + std::sin(heading) * t, px = x + std::cos(heading) * t;
        const auto iy = static_cast<std::int64_t>(std::floor(py));
        const auto ix = static_cast<std::int64_t>(std::floor(px));
        for (int a = 0; a < width; ++a)
          for (int b = 0; b < width; ++b)
            paint(img, mask, iy + a - static_cast<std::int64_t>(lo),
                  ix + b - static_cast<std::int64_t>(lo), ink);
      }
      y += std::sin(heading) * seg_len;
      x += std::cos(heading) * seg_len;
      if (y < 2 || y > h - 3) heading = -heading, y = std::clamp(y, 2.0, h - 3.0);
      if (x < 2 || x > w - 3) heading = std::numbers::pi - heading, x = std::clamp(x, 2.0, w - 3.0);
    }
  }
}

}  // namespace

void CorpusSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("corpus spec: " + m); };
  if (categories.empty()) fail("at least one category is required");
  if (height < 16 || width < 16) fail("image extents must be at least 16");
  if (train_count < 1 || test_normal < 0 || test_anomalous < 1)
    fail("need at least one training and one anomalous test image");
  if (anomaly_types.empty()) fail("no anomaly types");
  for (const auto& t : anomaly_types)
    if (!kDefects.count(t)) fail("unknown anomaly type '" + t + "'");
  if (!(contrast_floor > 0 && contrast_floor <= 0.5)) fail("contrast_floor must lie in (0, 0.5]");
  std::set<std::string> names;
  for (const auto& c : categories) {
    if (c.name.empty() || c.name.find('/') != std::string::npos) fail("bad category name '" + c.name + "'");
    if (!names.insert(c.name).second) fail("duplicate category '" + c.name + "'");
    if (!kTextures.count(c.texture)) fail("unknown texture '" + c.texture + "'");
    if (!(c.target_ar > 0 && c.target_ar < 1)) fail(c.name + ": target_ar must lie in (0, 1)");
    // Jitter reaches 1.25× the mean area; keep every defect below half the image.
    if (defect_area(c) * 1.25 > 0.5 * static_cast<double>(height * width))
      fail(c.name + ": target_ar " + std::to_string(c.target_ar) +
           " is infeasible; each defect would exceed half the image");
    if (defect_area(c) < 4) fail(c.name + ": target_ar is too small for visible defects");
  }
}

double CorpusSpec::defect_area(const CategorySpec& c) const {
  const double test_pixels = static_cast<double>((test_normal + test_anomalous) * height * width);
  return c.target_ar * test_pixels / static_cast<double>(test_anomalous);
}

void to_json(nlohmann::json& j, const CategorySpec& c) {
  j = {{"name", c.name}, {"texture", c.texture}, {"target_ar", c.target_ar}};
}

void from_json(const nlohmann::json& j, CategorySpec& c) {
  for (const auto& [key, value] : j.items())
    if (key != "name" && key != "texture" && key != "target_ar")
      throw std::invalid_argument("unknown category key '" + key + "'");
  j.at("name").get_to(c.name);
  c.texture = j.value("texture", c.name);
  c.target_ar = j.value("target_ar", c.target_ar);
}

void to_json(nlohmann::json& j, const CorpusSpec& s) {
  j = {{"categories", s.categories}, {"height", s.height},
       {"width", s.width},           {"train_count", s.train_count},
       {"test_normal", s.test_normal}, {"test_anomalous", s.test_anomalous},
       {"anomaly_types", s.anomaly_types}, {"contrast_floor", s.contrast_floor},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, CorpusSpec& s) {
  if (!j.is_object()) throw std::invalid_argument("corpus spec must be a JSON object");
  static const std::set<std::string> known = {"categories",  "height",         "width",
                                              "train_count", "test_normal",    "test_anomalous",
                                              "anomaly_types", "contrast_floor", "seed"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown corpus spec key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("categories", s.categories);
  get("height", s.height);
  get("width", s.width);
  get("train_count", s.train_count);
  get("test_normal", s.test_normal);
  get("test_anomalous", s.test_anomalous);
  get("anomaly_types", s.anomaly_types);
  get("contrast_floor", s.contrast_floor);
  get("seed", s.seed);
}

Rendered render(const CorpusSpec& spec, std::size_t category, std::uint64_t image_seed,
                double defect_area) {
  const CategorySpec& cat = spec.categories.at(category);
  const std::int64_t h = spec.height, w = spec.width;
  std::mt19937_64 cat_rng(category_seed(spec, category));
  std::mt19937_64 rng(image_seed);

  Color c1, c2;
  for (int ch = 0; ch < 3; ++ch) c1[ch] = uniform(cat_rng, 0.15, 0.55);
  for (int ch = 0; ch < 3; ++ch) c2[ch] = uniform(cat_rng, 0.45, 0.85);
  const double jitter = uniform(rng, -0.04, 0.04);
  const auto f = texture(cat.texture, cat_rng, rng, h, w);
  std::normal_distribution<double> noise(0.0, 0.02);

  Rendered r;
  r.normal = {h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w * 3))};
  for (std::int64_t p = 0; p < h * w; ++p)
    for (int ch = 0; ch < 3; ++ch)
      r.normal.pixels[p * 3 + ch] =
          quantize(c1[ch] * (1 - f[p]) + c2[ch] * f[p] + jitter + noise(rng));
  r.image = r.normal;
  r.mask.assign(static_cast<std::size_t>(h * w), 0);
  if (defect_area <= 0) return r;

  const auto& types = spec.anomaly_types;
  const std::string& type =
      types[std::uniform_int_distribution<std::size_t>(0, types.size() - 1)(rng)];
  draw_defect(type, defect_area, rng, r.image, r.mask);

  // Contrast floor: nudge the dominant channel of any pixel that barely changed.
  const int floor8 = static_cast<int>(std::ceil(spec.contrast_floor * 255.0));
  for (std::int64_t p = 0; p < h * w; ++p) {
    if (!r.mask[p]) continue;
    int best = 0, best_diff = -1;
    for (int ch = 0; ch < 3; ++ch) {
      const int d = std::abs(int(r.image.pixels[p * 3 + ch]) - int(r.normal.pixels[p * 3 + ch]));
      if (d > best_diff) best_diff = d, best = ch;
    }
    if (best_diff >= floor8) continue;
    const int base = r.normal.pixels[p * 3 + best];
    r.image.pixels[p * 3 + best] = static_cast<std::uint8_t>(base + floor8 <= 255 ? base + floor8 : base - floor8);
  }
  return r;
}

std::string hash_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng::fnv1a64(bytes)));
  return buf;
}

std::string encode_ppm(const Rgb8& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

namespace {

// Parses "P?\n<w> <h>\n255\n" and returns the payload offset.
std::size_t parse_header(const std::string& bytes, const char* magic, std::int64_t& h,
                         std::int64_t& w, const std::string& what) {
  std::istringstream in(bytes);
  std::string m;
  int maxval = 0;
  if (!(in >> m >> w >> h >> maxval) || m != magic || maxval != 255 || w <= 0 || h <= 0)
    throw DataError(what + ": malformed " + magic + " header");
  in.get();
  return static_cast<std::size_t>(in.tellg());
}

}  // namespace

Rgb8 decode_ppm(const std::string& bytes, const std::string& what) {
  Rgb8 img;
  const std::size_t off = parse_header(bytes, "P6", img.height, img.width, what);
  const auto n = static_cast<std::size_t>(img.height * img.width * 3);
  if (bytes.size() != off + n) throw DataError(what + ": payload size mismatch");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off), bytes.end());
  return img;
}

std::string encode_pgm(const std::vector<std::uint8_t>& mask, std::int64_t height, std::int64_t width) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (std::uint8_t v : mask) out.push_back(static_cast<char>(v ? 255 : 0));
  return out;
}

std::vector<std::uint8_t> decode_pgm(const std::string& bytes, std::int64_t height, std::int64_t width,
                                     const std::string& what) {
  std::int64_t h = 0, w = 0;
  const std::size_t off = parse_header(bytes, "P5", h, w, what);
  if (h != height || w != width || bytes.size() != off + static_cast<std::size_t>(h * w))
    throw DataError(what + ": mask extent mismatch");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h * w));
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const auto v = static_cast<unsigned char>(bytes[off + i]);
    if (v != 0 && v != 255) throw DataError(what + ": mask is not binary");
    mask[i] = v != 0;
  }
  return mask;
}

nlohmann::json to_json(const Manifest& m) {
  nlohmann::json j;
  j["format"] = "unias-corpus-1";
  j["spec"] = m.spec;
  j["categories"] = nlohmann::json::array();
  for (const auto& c : m.categories)
    j["categories"].push_back({{"name", c.name},
                               {"target_ar", c.target_ar},
                               {"measured_ar", c.measured_ar},
                               {"seed", c.seed}});
  j["files"] = nlohmann::json::array();
  for (const auto& f : m.files)
    j["files"].push_back({{"image", f.image},
                          {"mask", f.mask},
                          {"category", f.category},
                          {"split", f.split},
                          {"anomalous", f.anomalous},
                          {"image_hash", f.image_hash},
                          {"mask_hash", f.mask_hash},
                          {"seed", f.seed}});
  return j;
}

Manifest manifest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "unias-corpus-1") throw DataError("manifest: unknown format");
  Manifest m;
  m.spec = j.at("spec").get<CorpusSpec>();
  for (const auto& c : j.at("categories"))
    m.categories.push_back({c.at("name"), c.at("target_ar"), c.at("measured_ar"), c.at("seed")});
  for (const auto& f : j.at("files")) {
    FileEntry e;
    f.at("image").get_to(e.image);
    f.at("mask").get_to(e.mask);
    f.at("category").get_to(e.category);
    f.at("split").get_to(e.split);
    f.at("anomalous").get_to(e.anomalous);
    f.at("image_hash").get_to(e.image_hash);
    f.at("mask_hash").get_to(e.mask_hash);
    f.at("seed").get_to(e.seed);
    m.files.push_back(std::move(e));
  }
  return m;
}

Manifest generate(const CorpusSpec& spec, const std::filesystem::path& root) {
  spec.validate();
  Manifest m;
  m.spec = spec;
  std::vector<std::vector<FileEntry>> per_category(spec.categories.size());
  std::vector<CategoryStats> stats(spec.categories.size());

  // Categories are independent streams, so the parallel split never changes output.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t ci = 0; ci < spec.categories.size(); ++ci) {
    const CategorySpec& cat = spec.categories[ci];
    const std::uint64_t cseed = category_seed(spec, ci);
    auto& files = per_category[ci];
    std::int64_t anomalous_pixels = 0;
    auto emit = [&](const std::string& split, const std::string& label, std::int64_t index,
                    double area) {
      const std::uint64_t seed = rng::derive(rng::derive(cseed, split + "/" + label), index);
      const Rendered r = render(spec, ci, seed, area);
      char name[32];
      std::snprintf(name, sizeof name, "%03lld", static_cast<long long>(index));
      const std::string dir = cat.name + "/" + split + "/" + label + "/";
      FileEntry e;
      e.image = dir + name + ".ppm";
      e.category = cat.name;
      e.split = split;
      e.anomalous = area > 0;
      e.seed = seed;
      const std::string img = encode_ppm(r.image);
      e.image_hash = hash_hex(img);
      io::write_file(root / e.image, img);
      std::int64_t count = 0;
      if (e.anomalous) {
        e.mask = dir + name + "_mask.pgm";
        const std::string mask = encode_pgm(r.mask, spec.height, spec.width);
        e.mask_hash = hash_hex(mask);
        io::write_file(root / e.mask, mask);
        for (std::uint8_t v : r.mask) count += v;
      }
      files.push_back(std::move(e));
      return count;
    };
    for (std::int64_t i = 0; i < spec.train_count; ++i) emit("train", "good", i, 0);
    for (std::int64_t i = 0; i < spec.test_normal; ++i) emit("test", "good", i, 0);

    // Each defect aims at the area still owed, with ±25% jitter except on the last one.
    const double total = spec.defect_area(cat) * static_cast<double>(spec.test_anomalous);
    std::mt19937_64 area_rng(rng::derive(cseed, "area"));
    for (std::int64_t i = 0; i < spec.test_anomalous; ++i) {
      const double owed = (total - static_cast<double>(anomalous_pixels)) /
                          static_cast<double>(spec.test_anomalous - i);
      const double jitter = i + 1 < spec.test_anomalous ? uniform(area_rng, 0.75, 1.25) : 1.0;
      const double mean = spec.defect_area(cat);
      const double area = std::clamp(owed * jitter, 0.25 * mean, 1.25 * mean);
      anomalous_pixels += emit("test", "anomalous", i, area);
    }
    const double test_pixels = static_cast<double>((spec.test_normal + spec.test_anomalous) *
                                                   spec.height * spec.width);
    stats[ci] = {cat.name, cat.target_ar, static_cast<double>(anomalous_pixels) / test_pixels, cseed};
  }
  for (std::size_t ci = 0; ci < spec.categories.size(); ++ci) {
    m.categories.push_back(stats[ci]);
    m.files.insert(m.files.end(), per_category[ci].begin(), per_category[ci].end());
  }
  io::write_file(root / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

Corpus::Corpus(std::filesystem::path root) : root_(std::move(root)) {
  const auto path = root_ / "manifest.json";
  try {
    manifest_ = manifest_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<const FileEntry*> Corpus::entries(const std::string& split,
                                              const std::string& category) const {
  std::vector<const FileEntry*> out;
  for (const auto& f : manifest_.files)
    if ((split.empty() || f.split == split) && (category.empty() || f.category == category))
      out.push_back(&f);
  return out;
}

Sample Corpus::load(const FileEntry& entry) const {
  const std::string bytes = io::read_file(root_ / entry.image);
  if (hash_hex(bytes) != entry.image_hash)
    throw DataError(entry.image + ": content hash does not match the manifest");
  const Rgb8 img = decode_ppm(bytes, entry.image);
  const auto& spec = manifest_.spec;
  if (img.height != spec.height || img.width != spec.width)
    throw DataError(entry.image + ": extent differs from the manifest");
  Sample s;
  s.id = entry.image.substr(0, entry.image.size() - 4);
  s.category = entry.category;
  s.split = entry.split;
  s.anomalous = entry.anomalous;
  const std::int64_t hw = img.height * img.width;
  std::vector<float> chw(static_cast<std::size_t>(3 * hw));
  for (std::int64_t p = 0; p < hw; ++p)
    for (int ch = 0; ch < 3; ++ch) chw[ch * hw + p] = img.pixels[p * 3 + ch] / 255.0f;
  s.image = Tensor<float>::from({3, img.height, img.width}, std::move(chw));
  if (entry.anomalous) {
    const std::string mb = io::read_file(root_ / entry.mask);
    if (hash_hex(mb) != entry.mask_hash)
      throw DataError(entry.mask + ": content hash does not match the manifest");
    s.mask = decode_pgm(mb, img.height, img.width, entry.mask);
    if (std::none_of(s.mask.begin(), s.mask.end(), [](std::uint8_t v) { return v != 0; }))
      throw DataError(entry.mask + ": anomalous image has an empty mask");
  } else {
    s.mask.assign(static_cast<std::size_t>(hw), 0);
  }
  return s;
}

}  // namespace unias::synth
