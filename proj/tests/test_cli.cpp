#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

#ifndef RELAND_CLI_PATH
#error "RELAND_CLI_PATH must be defined by the build"
#endif

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run_cli(const std::string& args) {
  const std::string out_path = "cli_stdout.tmp";
  const std::string err_path = "cli_stderr.tmp";
  const std::string cmd =
      std::string(RELAND_CLI_PATH) + " " + args + " > " + out_path + " 2> " + err_path;
  const int status = std::system(cmd.c_str());
  RunResult r;
#ifdef _WIN32
  r.exit_code = status;
#else
  r.exit_code = WEXITSTATUS(status);
#endif
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  std::remove(out_path.c_str());
  std::remove(err_path.c_str());
  return r;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

// One shared tiny dataset for the whole suite.
struct Fixture {
  Fixture() {
    write_file("cli_gen.conf", "grid_rows=12\ngrid_cols=12\nn_municipalities=3\nseed=5\n");
    write_file("cli_train.conf", "epochs=3\nbatch_size=64\n");
    RunResult gen = run_cli("gen --config cli_gen.conf --out cli_data.csv");
    REQUIRE(gen.exit_code == 0);
    RunResult tr = run_cli(
        "train --data cli_data.csv --val-data cli_data.csv --model reland --objective erm "
        "--config cli_train.conf --seed 1 --out cli_ckpt.json");
    REQUIRE(tr.exit_code == 0);
  }
  ~Fixture() {
    for (const char* f : {"cli_gen.conf", "cli_train.conf", "cli_data.csv", "cli_ckpt.json"}) {
      std::remove(f);
    }
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("gen then blockcv produces a k-fold report") {
  fixture();
  RunResult cv = run_cli(
      "cv --protocol blockcv --data cli_data.csv --model lr --objective erm "
      "--config cli_train.conf --seed 1 --report -");
  REQUIRE(cv.exit_code == 0);
  auto j = nlohmann::json::parse(cv.out);
  CHECK(j["protocol"] == "blockcv");
  CHECK(j["folds"].size() == 3);
  CHECK(j.contains("aggregate"));
}

TEST_CASE("train is deterministic: identical checkpoint bytes across runs") {
  fixture();
  for (const char* objective : {"erm", "irm"}) {
    const std::string cmd =
        std::string("train --data cli_data.csv --val-data cli_data.csv --model reland "
                    "--objective ") +
        objective + " --config cli_train.conf --seed 1 --out ";
    REQUIRE(run_cli(cmd + "cli_a.json").exit_code == 0);
    REQUIRE(run_cli(cmd + "cli_b.json").exit_code == 0);
    CHECK(slurp("cli_a.json") == slurp("cli_b.json"));
    CHECK(!slurp("cli_a.json").empty());
    std::remove("cli_a.json");
    std::remove("cli_b.json");
  }
}

TEST_CASE("eval emits a metric report to stdout") {
  fixture();
  RunResult ev = run_cli("eval --ckpt cli_ckpt.json --data cli_data.csv --report -");
  REQUIRE(ev.exit_code == 0);
  auto j = nlohmann::json::parse(ev.out);
  CHECK(j["roc_auc"].get<double>() >= 0.0);
  CHECK(j["roc_auc"].get<double>() <= 1.0);
  CHECK(j.contains("mean_rheight"));
}

TEST_CASE("importance column sums to one") {
  fixture();
  RunResult imp = run_cli("importance --ckpt cli_ckpt.json --data cli_data.csv --out -");
  REQUIRE(imp.exit_code == 0);
  std::istringstream lines(imp.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "feature,importance");
  double sum = 0.0;
  int rows = 0;
  while (std::getline(lines, line)) {
    const auto comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    sum += std::stod(line.substr(comma + 1));
    ++rows;
  }
  CHECK(rows == 6);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("riskmap writes valid GeoJSON with moran clusters") {
  fixture();
  RunResult rm = run_cli(
      "riskmap --ckpt cli_ckpt.json --data cli_data.csv --out cli_map.geojson "
      "--html cli_map.html --moran --alpha 0.01 --perms 99 --seed 2");
  REQUIRE(rm.exit_code == 0);
  auto j = nlohmann::json::parse(slurp("cli_map.geojson"));
  CHECK(j["type"] == "FeatureCollection");
  CHECK(j["features"].size() == 144);
  CHECK(!slurp("cli_map.html").empty());
  std::remove("cli_map.geojson");
  std::remove("cli_map.html");
}

TEST_CASE("validation errors exit 1 with a machine-parseable line") {
  fixture();
  write_file("cli_bad.conf", "epochs=3\nnot_a_key=1\n");
  RunResult r = run_cli(
      "train --data cli_data.csv --val-data cli_data.csv --config cli_bad.conf --out x.json");
  CHECK(r.exit_code == 1);
  CHECK(r.err.rfind("ERROR config:", 0) == 0);
  std::remove("cli_bad.conf");

  write_file("cli_bad.csv", "cell_id,lon,lat,municipality,department,label,f\na,1,2,M,D,7,1\n");
  RunResult r2 = run_cli("train --data cli_bad.csv --val-data cli_bad.csv --env-feature f --out x.json");
  CHECK(r2.exit_code == 1);
  CHECK(r2.err.rfind("ERROR parse:", 0) == 0);
  std::remove("cli_bad.csv");
}

TEST_CASE("runtime errors exit 2") {
  RunResult r = run_cli("eval --ckpt does_not_exist.json --data also_missing.csv --report -");
  CHECK(r.exit_code == 2);
  CHECK(r.err.rfind("ERROR io:", 0) == 0);
}

TEST_CASE("cv blockv/transfercv pipeline runs end to end deterministically") {
  fixture();
  write_file("cli_gen_b.conf", "grid_rows=10\ngrid_cols=10\nn_municipalities=2\nseed=9\n");
  REQUIRE(run_cli("gen --config cli_gen_b.conf --out cli_data_b.csv").exit_code == 0);
  const std::string args =
      "cv --protocol transfercv --data-a cli_data.csv --data-b cli_data_b.csv --model lr "
      "--objective erm --config cli_train.conf --seed 3 --report ";
  REQUIRE(run_cli(args + "cli_r1.json").exit_code == 0);
  REQUIRE(run_cli(args + "cli_r2.json").exit_code == 0);
  CHECK(slurp("cli_r1.json") == slurp("cli_r2.json"));
  auto j = nlohmann::json::parse(slurp("cli_r1.json"));
  CHECK(j["protocol"] == "transfercv");
  CHECK(j["folds"].size() == 2);
  for (const char* f : {"cli_gen_b.conf", "cli_data_b.csv", "cli_r1.json", "cli_r2.json"}) {
    std::remove(f);
  }
}
