/* Copyright 2026 The Dualshift Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "json.hpp"

#include "dualshift/config.hpp"
#include "dualshift/data_io.hpp"
#include "test_helpers.hpp"

using namespace dualshift;
using dualshift::testing::TempDir;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const char* bin = std::getenv("DUALSHIFT_CLI_BIN");
  REQUIRE(bin != nullptr);
  const std::string cmd = std::string(bin) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult result;
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), buf.size(), pipe)) result.output += buf.data();
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

nlohmann::json base_config(const std::filesystem::path& root) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["seed"] = 5;
  j["paths"] = {{"clean_train", (root / "train").string()},
                {"clean_test", (root / "test").string()},
                {"gallery_dir", (root / "gallery").string()},
                {"output_dir", (root / "out").string()}};
  j["synth"] = {{"num_classes", 2}, {"train_per_class", 6}, {"test_per_class", 4},
                {"height", 16},     {"width", 16}};
  j["gallery"] = {{"arch", "compact"},
                  {"members", 1},
                  {"train", {{"epochs", 2}, {"batch_size", 8}, {"learning_rate", 0.02}}}};
  j["generator"] = {{"delta_y", 1},
                    {"pgd", {{"steps", 4}}},
                    {"pso", {{"swarm_size", 6}, {"iterations", 3}}},
                    {"color_sample_count", 6}};
  j["eval"] = {{"victim_arch", "compact"},
               {"train", {{"epochs", 1}, {"batch_size", 8}, {"learning_rate", 0.02}}},
               {"seeds", {1}},
               {"defenses", {{{"kind", "none"}}}},
               {"variants", {{{"name", "clean"}, {"path", (root / "train").string()}}}}};
  return j;
}

std::string write_config(const std::filesystem::path& root, const nlohmann::json& j) {
  const auto path = root / "config.json";
  std::ofstream out(path);
  out << j.dump(2);
  return path.string();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("cli end-to-end pipeline and exit codes") {
  TempDir dir("cli");
  const auto root = dir.path();
  const std::string cfg = write_config(root, base_config(root));

  SECTION("unknown schema keys are rejected with exit 2 and the key name") {
    nlohmann::json bad = base_config(root);
    bad["gallery"]["membres"] = 3;
    const std::string bad_cfg = write_config(root, bad);
    CliResult r = run_cli("train-gallery --config " + bad_cfg);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("membres") != std::string::npos);
  }

  SECTION("full pipeline") {
    CliResult synth = run_cli("synth --config " + cfg);
    REQUIRE(synth.exit_code == 0);
    REQUIRE(std::filesystem::exists(root / "train" / "manifest.json"));
    REQUIRE(std::filesystem::exists(root / "test" / "manifest.json"));

    CliResult gal = run_cli("train-gallery --config " + cfg);
    REQUIRE(gal.exit_code == 0);
    REQUIRE(std::filesystem::exists(root / "gallery" / "member_00.ckpt"));
    const std::string prov_first = slurp(root / "gallery" / "provenance.json");

    // Rerun: provenance is byte-identical (idempotent under identical seed).
    CliResult gal2 = run_cli("train-gallery --config " + cfg);
    REQUIRE(gal2.exit_code == 0);
    CHECK(slurp(root / "gallery" / "provenance.json") == prov_first);

    // Both branches disabled is a config error before heavy work.
    CliResult none = run_cli("generate --config " + cfg + " --no-sb --no-cb");
    CHECK(none.exit_code == 2);

    // Default generate carries the paper epsilon into the manifest.
    CliResult gen = run_cli("generate --config " + cfg);
    REQUIRE(gen.exit_code == 0);
    {
      std::ifstream mf(root / "out" / "ue_sb_cb_uee" / "manifest.json");
      nlohmann::json m;
      mf >> m;
      CHECK(m["perturbation"]["epsilon"].get<double>() ==
            Catch::Approx(8.0 / 255.0).epsilon(1e-12));
      // Offsets present for both classes.
      CHECK(m["perturbation"]["class_color_offsets"].size() == 2);
    }
    REQUIRE(std::filesystem::exists(root / "out" / "ue_sb_cb_uee" / "generation_record.json"));

    // Color branch off: every class offset is exactly zero.
    CliResult gen_nocb = run_cli("generate --config " + cfg + " --no-cb");
    REQUIRE(gen_nocb.exit_code == 0);
    {
      std::ifstream mf(root / "out" / "ue_sb_uee" / "manifest.json");
      nlohmann::json m;
      mf >> m;
      for (const auto& off : m["perturbation"]["class_color_offsets"]) {
        CHECK(off[0].get<double>() == 0.0);
        CHECK(off[1].get<double>() == 0.0);
        CHECK(off[2].get<double>() == 0.0);
      }
    }

    // Missing gallery is a runtime error (exit 1).
    nlohmann::json moved = base_config(root);
    moved["paths"]["gallery_dir"] = (root / "nowhere").string();
    const std::string moved_cfg = write_config(root, moved);
    CliResult nogal = run_cli("generate --config " + moved_cfg);
    CHECK(nogal.exit_code == 1);

    // Evaluate writes one CSV data row for the 1x1x1 matrix plus chart.
    CliResult ev = run_cli("evaluate --config " + cfg);
    REQUIRE(ev.exit_code == 0);
    {
      std::ifstream csv(root / "out" / "report.csv");
      std::string header, row, extra;
      std::getline(csv, header);
      std::getline(csv, row);
      CHECK(row.rfind("clean,none,compact,1,", 0) == 0);
      CHECK_FALSE(static_cast<bool>(std::getline(csv, extra)));
    }
    REQUIRE(std::filesystem::exists(root / "out" / "aggregate.json"));
    const std::string svg = slurp(root / "out" / "chart.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("clean") != std::string::npos);  // one bar group per variant

    // Rerun resumes and reports the skipped cell.
    CliResult ev2 = run_cli("evaluate --config " + cfg);
    REQUIRE(ev2.exit_code == 0);
    CHECK(ev2.output.find("skipped") != std::string::npos);

    // --defense overrides the config defense list.
    CliResult ev3 = run_cli("evaluate --config " + cfg + " --defense grayscale");
    REQUIRE(ev3.exit_code == 0);
    CHECK(ev3.output.find("grayscale") != std::string::npos);

    // Unknown defense parameters are config errors.
    CliResult ev4 = run_cli("evaluate --config " + cfg + " --defense jpeg:vibes=10");
    CHECK(ev4.exit_code == 2);
    CHECK(ev4.output.find("vibes") != std::string::npos);
  }

  SECTION("missing config file is a config error") {
    CliResult r = run_cli("synth --config /nonexistent/config.json");
    CHECK(r.exit_code == 2);
  }

  SECTION("defense spec parsing accepts parameters") {
    DefenseConfig d = parse_defense_spec("jpeg:quality=42");
    CHECK(d.kind == DefenseKind::kJpeg);
    CHECK(d.jpeg_quality == 42);
    DefenseConfig a = parse_defense_spec("adaptive_random:r_c=0.1,r_s=0.05");
    CHECK(a.r_c == Catch::Approx(0.1));
    CHECK(a.r_s == Catch::Approx(0.05));
    CHECK_THROWS_AS(parse_defense_spec("mystery"), ConfigError);
    // Training-level keys on a dataset-level defense are rejected: the two
    // levels cannot be combined in one run.
    CHECK_THROWS_AS(parse_defense_spec("jpeg:steps=7"), ConfigError);
  }

  SECTION("scale presets fill absent fields") {
    nlohmann::json j = base_config(root);
    j.erase("generator");
    j.erase("gallery");
    j.erase("eval");
    RunConfig desk = parse_run_config(j, "desk");
    CHECK(desk.generator.pso.swarm_size == 12);
    CHECK(desk.generator.color_sample_count == 96);
    RunConfig paper = parse_run_config(j, "paper");
    CHECK(paper.generator.pso.swarm_size == 50);
    CHECK(paper.generator.color_sample_count == 1000);
    CHECK(paper.gallery_members == 5);
    CHECK(paper.victim_train.epochs == 80);
    // Paper defaults carried by the generator itself.
    CHECK(paper.generator.pgd.epsilon == Catch::Approx(8.0 / 255.0));
    CHECK(paper.generator.pgd.beta == 0.5);
    CHECK(paper.generator.pgd.steps == 30);
    CHECK(paper.generator.delta_y == 3);
    CHECK(paper.generator.noise_constraint.lambda == 1.0);
  }

  SECTION("environment overrides apply to seeds and paths only") {
    nlohmann::json j = base_config(root);
    setenv("DUALSHIFT_SEED", "777", 1);
    setenv("DUALSHIFT_PATH_OUTPUT_DIR", "/tmp/elsewhere", 1);
    RunConfig c = parse_run_config(j);
    unsetenv("DUALSHIFT_SEED");
    unsetenv("DUALSHIFT_PATH_OUTPUT_DIR");
    CHECK(c.seed == 777);
    CHECK(c.generator.master_seed == 777);
    CHECK(c.paths.output_dir == "/tmp/elsewhere");
  }
}
