#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "sandlab/errors.hpp"
#include "sandlab/harness.hpp"
#include "sandlab/io.hpp"
#include "sandlab/rng.hpp"

using namespace sandlab;
using namespace sandlab::harness;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("sandlab_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("catalog lists the seven named experiments") {
  const auto& cat = list_experiments();
  CHECK(cat.size() == 7);
  for (std::size_t i = 0; i < cat.size(); ++i) {
    CHECK(cat[i].id == "E" + std::to_string(i + 1));
    CHECK_FALSE(cat[i].title.empty());
    CHECK_FALSE(cat[i].description.empty());
  }
  CHECK_THROWS_AS(catalog_entry("E9"), ValidationError);
  CHECK_THROWS_AS(default_config("bogus"), ValidationError);
}

TEST_CASE("config validation names the offending field") {
  Config cfg = default_config("E4");
  cfg["params"]["cases"][0]["pattern"]["pattern"] = "bogus";
  const auto problems = validate(cfg);
  REQUIRE_FALSE(problems.empty());
  CHECK(problems.front().find("params.cases[0].pattern") != std::string::npos);
  CHECK(problems.front().find("bogus") != std::string::npos);

  Config missing_seed = default_config("E3");
  missing_seed.erase("seed");
  const auto p2 = validate(missing_seed);
  REQUIRE_FALSE(p2.empty());
  CHECK(p2.front().find("seed") != std::string::npos);

  Config bad_gamma = default_config("E7");
  bad_gamma["params"]["gammas"] = std::vector<double>{4, 2};
  const auto p3 = validate(bad_gamma);
  REQUIRE_FALSE(p3.empty());
  CHECK(p3.front().find("gammas") != std::string::npos);
}

TEST_CASE("a one-site volume runs to completion in moments") {
  Config cfg = default_config("E3");
  cfg["output_dir"] = temp_dir("trivial").string();
  cfg["params"]["paths"] = std::vector<int>{1};
  cfg["params"]["grids"] = std::vector<std::vector<int>>{};
  const auto rr = run(cfg);
  CHECK(rr.exit_code == 0);
  REQUIRE(rr.experiments.size() == 1);
  CHECK(rr.experiments[0].all_passed());
  CHECK(rr.experiments[0].wall_seconds < 1.0);
  CHECK(fs::exists(rr.out_dir / "manifest.json"));
  CHECK(fs::exists(rr.out_dir / "summary.txt"));
  CHECK(fs::exists(rr.out_dir / "E3" / "recurrent_counts.csv"));
}

TEST_CASE("Dhar table on the 2-site path carries three pairs") {
  Config cfg = default_config("E2");
  cfg["output_dir"] = temp_dir("dhar2").string();
  cfg["params"]["volumes"] = Config::array({Config{{"kind", "path"}, {"sites", 2}}});
  cfg["params"]["burn_in"] = 500;
  cfg["params"]["samples"] = 20000;
  const auto rr = run(cfg);
  CHECK(rr.exit_code == 0);
  const auto csv = io::read_text_file(rr.out_dir / "E2" / "dhar_pairs.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 pairs
  const auto summary = io::read_text_file(rr.out_dir / "summary.txt");
  CHECK(summary.find("E2") != std::string::npos);
  CHECK(summary.find("PASS") != std::string::npos);
}

TEST_CASE("identical configs produce byte-identical outputs") {
  Config cfg = default_config("E3");
  cfg["params"]["paths"] = std::vector<int>{2, 3, 4};
  cfg["params"]["grids"] = std::vector<std::vector<int>>{{2, 2}};

  Config a = cfg;
  a["output_dir"] = temp_dir("det_a").string();
  Config b = cfg;
  b["output_dir"] = temp_dir("det_b").string();
  b["parallelism"] = 1;

  const auto ra = run(a);
  const auto rb = run(b);
  const auto csv_a = io::read_text_file(ra.out_dir / "E3" / "recurrent_counts.csv");
  const auto csv_b = io::read_text_file(rb.out_dir / "E3" / "recurrent_counts.csv");
  CHECK(csv_a == csv_b);

  // the manifest lists every output with its digest
  const auto manifest = Config::parse(io::read_text_file(ra.out_dir / "manifest.json"));
  REQUIRE(manifest.contains("outputs"));
  bool found = false;
  for (const auto& of : manifest.at("outputs")) {
    if (of.at("path").get<std::string>() == "E3/recurrent_counts.csv") {
      found = true;
      CHECK(of.at("fnv1a64").get<std::string>() == io::hex64(fnv1a64(csv_a)));
    }
  }
  CHECK(found);
}

TEST_CASE("config files merge over defaults") {
  const auto dir = temp_dir("cfg");
  const fs::path cfg_path = dir / "exp.json";
  io::write_text_file(cfg_path, R"({"experiment":"E3","seed":7,"params":{"paths":[2,3]}})");
  const auto cfg = load_config(cfg_path.string());
  CHECK(cfg.at("experiment") == "E3");
  CHECK(cfg.at("seed") == 7);
  CHECK(cfg.at("params").at("paths").get<std::vector<int>>() == std::vector<int>{2, 3});
  // untouched defaults survive the merge
  CHECK(cfg.at("params").contains("grids"));

  CHECK_THROWS_AS(load_config((dir / "missing.json").string()), ValidationError);
}

TEST_CASE("matrix export emits coordinate text") {
  Config cfg = default_config("E3");
  cfg["params"]["matrix"] = Config{{"kind", "path"}, {"sites", 2}};
  CHECK(export_matrix_text(cfg) == "0 0 2\n0 1 -1\n1 1 2\n1 0 -1\n");

  Config bad = cfg;
  bad["params"]["matrix"] = Config{{"kind", "grid"}};
  const auto problems = validate(bad);
  REQUIRE_FALSE(problems.empty());
  CHECK(problems.front().find("extents") != std::string::npos);
}

TEST_CASE("property battery passes at reduced size") {
  Config cfg = default_config("properties");
  cfg["output_dir"] = temp_dir("props").string();
  cfg["params"]["abelian_trials"] = 200;
  const auto rr = run(cfg);
  CHECK(rr.exit_code == 0);
  for (const auto& c : rr.experiments[0].checks) CHECK(c.pass);
}
