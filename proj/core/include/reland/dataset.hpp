#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace reland {

// One 500 m grid cell. `features` is ordered per Dataset::feature_names.
struct Cell {
  std::string cell_id;
  double lon = 0.0;
  double lat = 0.0;
  std::string municipality;
  std::string department;
  std::vector<double> features;
  int label = 0;
};

enum class EnvironmentTag { Easy, Hard };

struct EnvironmentSplit {
  std::vector<EnvironmentTag> tags;
  std::size_t n_easy = 0;
  std::size_t n_hard = 0;
};

struct Dataset {
  std::vector<Cell> cells;
  std::vector<std::string> feature_names;
  std::string env_feature;

  std::size_t size() const { return cells.size(); }
  std::size_t dim() const { return feature_names.size(); }
  std::size_t env_feature_index() const;
  std::size_t feature_index(const std::string& name) const;

  // Always recomputed; never cached.
  double positive_rate() const;
};

struct SyntheticConfig {
  std::size_t grid_rows = 50;
  std::size_t grid_cols = 50;
  std::size_t n_municipalities = 6;
  std::size_t d_geo = 5;
  std::uint64_t seed = 0;
  double spurious_strength = 0.9;
  double hard_fraction = 0.2;
};

// CSV ingestion. Columns: cell_id,lon,lat,municipality,department,label,<feature...>.
Dataset load_csv(const std::string& path, const std::string& env_feature);
void save_csv(const Dataset& ds, const std::string& path);

// Easy iff (env > 0 and label = 1) or (env = 0 and label = 0).
EnvironmentTag tag_cell(double env_value, int label);
EnvironmentSplit tag_environments(const Dataset& ds);

// Deterministic spatial generator: rectangular municipality blocks, smooth
// geospatial fields, clustered historical-event feature, and a spurious
// label-history link whose weight is spurious_strength in easy regions.
Dataset generate_synthetic(const SyntheticConfig& cfg);

// Disjoint cover of 0..n-1 keyed by municipality name.
std::map<std::string, std::vector<std::size_t>> split_by_municipality(const Dataset& ds);

}  // namespace reland
