#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "doctest.h"
#include "reland/dataset.hpp"
#include "reland/errors.hpp"

using namespace reland;

namespace {

std::string write_temp(const std::string& content) {
  static int counter = 0;
  std::string path = "test_dataset_tmp_" + std::to_string(counter++) + ".csv";
  std::ofstream out(path);
  out << content;
  return path;
}

const char* kHeader = "cell_id,lon,lat,municipality,department,label,hist,geo\n";

}  // namespace

TEST_CASE("load_csv parses rows and feature columns in file order") {
  std::string path = write_temp(std::string(kHeader) +
                                "a,1,2,M1,D,0,3,0.5\n"
                                "b,1,3,M1,D,1,0,0.25\n"
                                "c,2,2,M2,D,0,1,-1\n");
  Dataset ds = load_csv(path, "hist");
  CHECK(ds.size() == 3);
  CHECK(ds.dim() == 2);
  CHECK(ds.feature_names == std::vector<std::string>{"hist", "geo"});
  CHECK(ds.cells[1].label == 1);
  CHECK(ds.cells[2].features[1] == -1.0);
  CHECK(ds.env_feature == "hist");
  std::remove(path.c_str());
}

TEST_CASE("load_csv missing required column names it") {
  std::string path = write_temp("cell_id,lon,lat,municipality,label,f\na,1,2,M,0,1\n");
  try {
    load_csv(path, "f");
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.category() == "schema");
    CHECK(std::string(e.what()).find("department") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("load_csv bad label cites the row") {
  std::string path = write_temp(std::string(kHeader) +
                                "a,1,2,M,D,0,1,1\n"
                                "b,1,3,M,D,1,1,1\n"
                                "c,1,4,M,D,0,1,1\n"
                                "d,1,5,M,D,0,1,1\n"
                                "e,1,6,M,D,2,1,1\n");
  try {
    load_csv(path, "hist");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.category() == "parse");
    CHECK(std::string(e.what()).find("5") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("load_csv rejects duplicate cell_id and non-numeric feature") {
  std::string dup = write_temp(std::string(kHeader) + "a,1,2,M,D,0,1,1\na,1,3,M,D,0,1,1\n");
  CHECK_THROWS_AS(load_csv(dup, "hist"), Error);
  std::remove(dup.c_str());
  std::string bad = write_temp(std::string(kHeader) + "a,1,2,M,D,0,oops,1\n");
  try {
    load_csv(bad, "hist");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.category() == "parse");
  }
  std::remove(bad.c_str());
}

TEST_CASE("load_csv env feature must be a feature column") {
  std::string path = write_temp(std::string(kHeader) + "a,1,2,M,D,0,1,1\n");
  CHECK_THROWS_AS(load_csv(path, "nope"), Error);
  std::remove(path.c_str());
}

TEST_CASE("positive_rate is recomputed and exact") {
  Dataset ds;
  ds.feature_names = {"f"};
  ds.env_feature = "f";
  for (int i = 0; i < 1000; ++i) {
    Cell c;
    c.cell_id = "c" + std::to_string(i);
    c.features = {0.0};
    c.label = (i < 16) ? 1 : 0;
    ds.cells.push_back(c);
  }
  CHECK(ds.positive_rate() == doctest::Approx(0.016).epsilon(1e-15));
  ds.cells[999].label = 1;
  CHECK(ds.positive_rate() == doctest::Approx(0.017).epsilon(1e-15));
}

TEST_CASE("environment tagging: exhaustive four-case table") {
  CHECK(tag_cell(3.0, 1) == EnvironmentTag::Easy);
  CHECK(tag_cell(0.0, 0) == EnvironmentTag::Easy);
  CHECK(tag_cell(0.0, 1) == EnvironmentTag::Hard);
  CHECK(tag_cell(5.0, 0) == EnvironmentTag::Hard);
  CHECK_THROWS_AS(tag_cell(-1.0, 0), Error);
}

TEST_CASE("tag_environments on a four-cell dataset") {
  Dataset ds;
  ds.feature_names = {"env"};
  ds.env_feature = "env";
  const double envs[] = {0, 2, 0, 5};
  const int labels[] = {0, 1, 1, 0};
  for (int i = 0; i < 4; ++i) {
    Cell c;
    c.cell_id = "c" + std::to_string(i);
    c.features = {envs[i]};
    c.label = labels[i];
    ds.cells.push_back(c);
  }
  EnvironmentSplit split = tag_environments(ds);
  CHECK(split.tags == std::vector<EnvironmentTag>{EnvironmentTag::Easy, EnvironmentTag::Easy,
                                                  EnvironmentTag::Hard, EnvironmentTag::Hard});
  CHECK(split.n_easy == 2);
  CHECK(split.n_hard == 2);
}

TEST_CASE("split_by_municipality is a disjoint cover") {
  Dataset ds;
  ds.feature_names = {"f"};
  ds.env_feature = "f";
  const char* munis[] = {"A", "A", "B", "B", "B", "C", "C", "C", "C", "C"};
  for (int i = 0; i < 10; ++i) {
    Cell c;
    c.cell_id = "c" + std::to_string(i);
    c.municipality = munis[i];
    c.features = {0.0};
    ds.cells.push_back(c);
  }
  auto parts = split_by_municipality(ds);
  CHECK(parts.size() == 3);
  CHECK(parts["A"].size() == 2);
  CHECK(parts["B"].size() == 3);
  CHECK(parts["C"].size() == 5);
  std::set<std::size_t> seen;
  for (const auto& [name, idx] : parts) {
    for (std::size_t i : idx) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == 10);

  Dataset empty;
  CHECK(split_by_municipality(empty).empty());
}

TEST_CASE("synthetic determinism: equal seeds give byte-identical CSVs") {
  SyntheticConfig cfg;
  cfg.grid_rows = 15;
  cfg.grid_cols = 15;
  cfg.n_municipalities = 4;
  cfg.seed = 7;
  Dataset a = generate_synthetic(cfg);
  Dataset b = generate_synthetic(cfg);
  std::string pa = write_temp("");
  std::string pb = write_temp("");
  save_csv(a, pa);
  save_csv(b, pb);
  std::ifstream fa(pa), fb(pb);
  std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ca == cb);
  CHECK(!ca.empty());
  std::remove(pa.c_str());
  std::remove(pb.c_str());
}

TEST_CASE("synthetic CSV round-trip preserves the dataset") {
  SyntheticConfig cfg;
  cfg.grid_rows = 10;
  cfg.grid_cols = 10;
  cfg.n_municipalities = 2;
  cfg.seed = 3;
  Dataset a = generate_synthetic(cfg);
  std::string path = write_temp("");
  save_csv(a, path);
  Dataset b = load_csv(path, a.env_feature);
  REQUIRE(b.size() == a.size());
  CHECK(b.feature_names == a.feature_names);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(b.cells[i].cell_id == a.cells[i].cell_id);
    CHECK(b.cells[i].label == a.cells[i].label);
    for (std::size_t j = 0; j < a.dim(); ++j) {
      CHECK(b.cells[i].features[j] == a.cells[i].features[j]);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("synthetic spurious_strength=0 decorrelates env feature and label") {
  SyntheticConfig cfg;
  cfg.grid_rows = 100;
  cfg.grid_cols = 100;
  cfg.n_municipalities = 6;
  cfg.seed = 5;
  cfg.spurious_strength = 0.0;
  Dataset ds = generate_synthetic(cfg);
  REQUIRE(ds.size() == 10000);
  const std::size_t ei = ds.env_feature_index();
  double me = 0.0, my = 0.0;
  for (const Cell& c : ds.cells) {
    me += c.features[ei];
    my += c.label;
  }
  me /= ds.size();
  my /= ds.size();
  double cov = 0.0, ve = 0.0, vy = 0.0;
  for (const Cell& c : ds.cells) {
    const double de = c.features[ei] - me;
    const double dy = c.label - my;
    cov += de * dy;
    ve += de * de;
    vy += dy * dy;
  }
  const double rho = cov / std::sqrt(ve * vy);
  CHECK(std::abs(rho) < 0.1);
}

TEST_CASE("synthetic hard fraction lands near target on a small grid") {
  SyntheticConfig cfg;
  cfg.grid_rows = 10;
  cfg.grid_cols = 10;
  cfg.n_municipalities = 4;
  cfg.seed = 1;
  cfg.hard_fraction = 0.2;
  Dataset ds = generate_synthetic(cfg);
  REQUIRE(ds.size() == 100);
  auto parts = split_by_municipality(ds);
  CHECK(parts.size() == 4);
  EnvironmentSplit split = tag_environments(ds);
  CHECK(split.n_hard >= 10);
  CHECK(split.n_hard <= 30);
}

TEST_CASE("synthetic hard fraction within +-0.1 across configs") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    for (double hf : {0.1, 0.2, 0.35}) {
      SyntheticConfig cfg;
      cfg.grid_rows = 40;
      cfg.grid_cols = 40;
      cfg.n_municipalities = 6;
      cfg.seed = seed;
      cfg.hard_fraction = hf;
      Dataset ds = generate_synthetic(cfg);
      EnvironmentSplit split = tag_environments(ds);
      const double achieved = static_cast<double>(split.n_hard) / ds.size();
      CHECK(std::abs(achieved - hf) <= 0.1);
    }
  }
}

TEST_CASE("synthetic municipalities are contiguous rectangular blocks") {
  SyntheticConfig cfg;
  cfg.grid_rows = 20;
  cfg.grid_cols = 30;
  cfg.n_municipalities = 6;
  cfg.seed = 9;
  Dataset ds = generate_synthetic(cfg);
  auto parts = split_by_municipality(ds);
  CHECK(parts.size() == 6);
  for (const auto& [name, idx] : parts) {
    double min_lon = 1e9, max_lon = -1e9, min_lat = 1e9, max_lat = -1e9;
    for (std::size_t i : idx) {
      min_lon = std::min(min_lon, ds.cells[i].lon);
      max_lon = std::max(max_lon, ds.cells[i].lon);
      min_lat = std::min(min_lat, ds.cells[i].lat);
      max_lat = std::max(max_lat, ds.cells[i].lat);
    }
    // Block must be filled: the bounding box contains exactly the members.
    const double spacing = 0.005;
    const std::size_t w = static_cast<std::size_t>(std::lround((max_lon - min_lon) / spacing)) + 1;
    const std::size_t h = static_cast<std::size_t>(std::lround((max_lat - min_lat) / spacing)) + 1;
    CHECK(w * h == idx.size());
  }
}

TEST_CASE("synthetic invalid config is a config error") {
  SyntheticConfig cfg;
  cfg.grid_rows = 2;
  cfg.grid_cols = 2;
  cfg.n_municipalities = 9;
  CHECK_THROWS_AS(generate_synthetic(cfg), Error);
  SyntheticConfig cfg2;
  cfg2.hard_fraction = 0.8;
  CHECK_THROWS_AS(generate_synthetic(cfg2), Error);
}
