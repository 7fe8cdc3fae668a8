// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "unias/tensor_io.hpp"

namespace fs = std::filesystem;
using unias::io::read_file;
using unias::io::write_file;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(UNIAS_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("unias_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kSmallSpec =
    R"({"categories": [{"name": "checker", "texture": "checker", "target_ar": 0.03}],
        "train_count": 6, "test_normal": 2, "test_anomalous": 2})";

}  // namespace

TEST_CASE("usage") {
  CHECK(cli("--help").code == 0);
  CHECK(cli("train --help").out.find("--config") != std::string::npos);
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("analyze-metrics --ar 2").code == 1);
  CHECK(cli("gen-data").code == 1);
}

TEST_CASE("gen-data") {
  const auto dir = scratch("gen");
  write_file(dir / "spec.json", kSmallSpec);
  const Run ok = cli("gen-data --spec " + (dir / "spec.json").string() + " --out " + (dir / "c").string());
  CHECK(ok.code == 0);
  CHECK(ok.out.find("checker") != std::string::npos);
  CHECK(fs::exists(dir / "c" / "manifest.json"));

  write_file(dir / "bad.json", R"({"categories": [{"name": "x", "texture": "marble"}]})");
  const Run bad = cli("gen-data --spec " + (dir / "bad.json").string() + " --out " + (dir / "d").string());
  CHECK(bad.code == 1);
  CHECK(bad.out.find("marble") != std::string::npos);

  write_file(dir / "broken.json", "{");
  CHECK(cli("gen-data --spec " + (dir / "broken.json").string() + " --out " + (dir / "e").string()).code == 2);
}

TEST_CASE("train, eval and map") {
  const auto dir = scratch("train");
  nlohmann::json cfg = {{"corpus", (dir / "corpus").string()},
                        {"corpus_spec", nlohmann::json::parse(kSmallSpec)},
                        {"epochs", 1},
                        {"batch_size", 4},
                        {"output", (dir / "run").string()}};
  write_file(dir / "cfg.json", cfg.dump());
  const std::string config = " --config " + (dir / "cfg.json").string();
  const Run t = cli("train" + config);
  REQUIRE(t.code == 0);
  CHECK(t.out.find("epoch    1") != std::string::npos);

  const std::string ckpt = " --checkpoint " + (dir / "run" / "model.ckpt").string();
  const Run e = cli("eval" + config + ckpt + " --levels 1,4 --maps");
  CHECK(e.code == 0);
  CHECK(e.out.find("mean") != std::string::npos);
  const auto report = nlohmann::json::parse(read_file(dir / "run" / "eval" / "report.json"));
  CHECK(report["levels"] == nlohmann::json({1, 4}));

  const fs::path img = dir / "corpus" / "checker" / "test" / "anomalous" / "000.ppm";
  const Run m = cli("map" + config + ckpt + " --image " + img.string() + " --out " + (dir / "m").string());
  CHECK(m.code == 0);
  CHECK(fs::exists(dir / "m.ust"));
  CHECK(fs::exists(dir / "m.pgm"));
  CHECK(fs::exists(dir / "m.pgm.json"));

  // Corrupted checkpoint is a data error.
  write_file(dir / "bad.ckpt", "UASCKPT1");
  CHECK(cli("eval" + config + " --checkpoint " + (dir / "bad.ckpt").string()).code == 2);

  // A tampered training image is caught by the manifest hash.
  const fs::path train_img = dir / "corpus" / "checker" / "train" / "good" / "000.ppm";
  std::string bytes = read_file(train_img);
  bytes.back() = static_cast<char>(bytes.back() ^ 1);
  write_file(train_img, bytes);
  const Run tampered = cli("train" + config);
  CHECK(tampered.code == 2);
  CHECK(tampered.out.find("000.ppm") != std::string::npos);

  cfg["optimizer"] = {{"lr", 1e38}};
  cfg["epochs"] = 3;
  cfg["corpus"] = (dir / "corpus2").string();
  write_file(dir / "nan.json", cfg.dump());
  CHECK(cli("train --config " + (dir / "nan.json").string()).code == 3);

  cfg["unknown"] = 1;
  write_file(dir / "unknown.json", cfg.dump());
  CHECK(cli("train --config " + (dir / "unknown.json").string()).code == 1);
}

TEST_CASE("analyze-metrics") {
  const auto dir = scratch("analyze");
  const Run r = cli("analyze-metrics --out " + dir.string());
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(read_file(dir / "metrics.json"));
  CHECK(j["auroc"].get<double>() > 0.95);
  CHECK(j["auroc"].get<double>() - j["pap"].get<double>() > 0.3);
  CHECK(read_file(dir / "roc.csv").rfind("fpr,tpr\n", 0) == 0);
  CHECK(read_file(dir / "pr.csv").rfind("recall,precision\n", 0) == 0);

  const auto exact = scratch("analyze0");
  CHECK(cli("analyze-metrics --dilation 0 --out " + exact.string()).code == 0);
  const auto k = nlohmann::json::parse(read_file(exact / "metrics.json"));
  CHECK(k["auroc"].get<double>() == 1.0);
  CHECK(k["pap"].get<double>() == 1.0);

  const auto half = scratch("analyze50");
  CHECK(cli("analyze-metrics --ar 0.5 --out " + half.string()).code == 0);
  const auto h = nlohmann::json::parse(read_file(half / "metrics.json"));
  CHECK(h["auroc"].get<double>() - h["pap"].get<double>() <
        j["auroc"].get<double>() - j["pap"].get<double>());
}
