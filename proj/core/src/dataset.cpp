#include "reland/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_set>

#include "reland/errors.hpp"

namespace reland {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t row, const std::string& col) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    if (!std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw parse_error("row " + std::to_string(row) + ": non-numeric value '" + s +
                      "' in column '" + col + "'");
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::size_t Dataset::feature_index(const std::string& name) const {
  auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) throw schema_error("unknown feature column '" + name + "'");
  return static_cast<std::size_t>(it - feature_names.begin());
}

std::size_t Dataset::env_feature_index() const { return feature_index(env_feature); }

double Dataset::positive_rate() const {
  if (cells.empty()) return 0.0;
  std::size_t pos = 0;
  for (const Cell& c : cells) pos += static_cast<std::size_t>(c.label);
  return static_cast<double>(pos) / static_cast<double>(cells.size());
}

Dataset load_csv(const std::string& path, const std::string& env_feature) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");

  std::string header_line;
  if (!std::getline(in, header_line)) throw schema_error("empty file '" + path + "'");
  if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
  std::vector<std::string> header = split_line(header_line);

  const std::vector<std::string> required = {"cell_id", "lon",        "lat",
                                             "municipality", "department", "label"};
  std::map<std::string, std::size_t> col_index;
  for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;
  for (const std::string& r : required) {
    if (!col_index.count(r)) throw schema_error("missing required column '" + r + "'");
  }

  Dataset ds;
  std::vector<std::size_t> feature_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (std::find(required.begin(), required.end(), header[i]) == required.end()) {
      ds.feature_names.push_back(header[i]);
      feature_cols.push_back(i);
    }
  }
  if (std::find(ds.feature_names.begin(), ds.feature_names.end(), env_feature) ==
      ds.feature_names.end()) {
    throw schema_error("env feature '" + env_feature + "' is not a feature column");
  }
  ds.env_feature = env_feature;

  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t row = 1;  // header was row 0
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      ++row;
      continue;
    }
    std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      throw parse_error("row " + std::to_string(row) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    Cell c;
    c.cell_id = fields[col_index["cell_id"]];
    if (!seen_ids.insert(c.cell_id).second) {
      throw parse_error("row " + std::to_string(row) + ": duplicate cell_id '" + c.cell_id + "'");
    }
    c.lon = parse_double(fields[col_index["lon"]], row, "lon");
    c.lat = parse_double(fields[col_index["lat"]], row, "lat");
    c.municipality = fields[col_index["municipality"]];
    c.department = fields[col_index["department"]];
    const std::string& lab = fields[col_index["label"]];
    if (lab == "0") {
      c.label = 0;
    } else if (lab == "1") {
      c.label = 1;
    } else {
      throw parse_error("row " + std::to_string(row) + ": label '" + lab + "' is not in {0,1}");
    }
    c.features.reserve(feature_cols.size());
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      c.features.push_back(parse_double(fields[feature_cols[j]], row, ds.feature_names[j]));
    }
    ds.cells.push_back(std::move(c));
    ++row;
  }
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << "cell_id,lon,lat,municipality,department,label";
  for (const std::string& f : ds.feature_names) out << ',' << f;
  out << '\n';
  for (const Cell& c : ds.cells) {
    out << c.cell_id << ',' << format_double(c.lon) << ',' << format_double(c.lat) << ','
        << c.municipality << ',' << c.department << ',' << c.label;
    for (double v : c.features) out << ',' << format_double(v);
    out << '\n';
  }
}

EnvironmentTag tag_cell(double env_value, int label) {
  if (env_value < 0.0) throw domain_error("negative env feature value");
  const bool has_history = env_value > 0.0;
  const bool agree = (has_history && label == 1) || (!has_history && label == 0);
  return agree ? EnvironmentTag::Easy : EnvironmentTag::Hard;
}

EnvironmentSplit tag_environments(const Dataset& ds) {
  EnvironmentSplit split;
  const std::size_t env_idx = ds.env_feature_index();
  split.tags.reserve(ds.size());
  for (const Cell& c : ds.cells) {
    EnvironmentTag t = tag_cell(c.features[env_idx], c.label);
    split.tags.push_back(t);
    if (t == EnvironmentTag::Easy) {
      ++split.n_easy;
    } else {
      ++split.n_hard;
    }
  }
  return split;
}

std::map<std::string, std::vector<std::size_t>> split_by_municipality(const Dataset& ds) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < ds.cells.size(); ++i) out[ds.cells[i].municipality].push_back(i);
  return out;
}

namespace {

struct GeoField {
  // Sum of random Gaussian bumps over the grid, standardized afterwards.
  std::vector<double> values;
};

GeoField make_geo_field(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  GeoField f;
  f.values.assign(rows * cols, 0.0);
  std::uniform_real_distribution<double> ur(0.0, 1.0);
  std::normal_distribution<double> amp(0.0, 1.0);
  const int n_bumps = 6;
  for (int b = 0; b < n_bumps; ++b) {
    const double cr = ur(rng) * static_cast<double>(rows);
    const double cc = ur(rng) * static_cast<double>(cols);
    const double sigma = 0.15 * static_cast<double>(std::max(rows, cols)) * (0.5 + ur(rng));
    const double a = amp(rng);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double dr = static_cast<double>(r) - cr;
        const double dc = static_cast<double>(c) - cc;
        f.values[r * cols + c] += a * std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      }
    }
  }
  // standardize
  double mean = 0.0;
  for (double v : f.values) mean += v;
  mean /= static_cast<double>(f.values.size());
  double var = 0.0;
  for (double v : f.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(f.values.size());
  const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
  for (double& v : f.values) v = (v - mean) / sd;
  return f;
}

constexpr std::size_t defaulted_guard(std::size_t rows, std::size_t cols) {
  return 10 * rows * cols + 100;
}

// Clustered count field: event clusters of Chebyshev radius 1, grown until
// roughly `target_cover` of cells carry a positive count.
std::vector<double> make_history_field(std::size_t rows, std::size_t cols, double target_cover,
                                       std::mt19937_64& rng) {
  std::vector<double> h(rows * cols, 0.0);
  std::uniform_int_distribution<std::size_t> pr(0, rows - 1);
  std::uniform_int_distribution<std::size_t> pc(0, cols - 1);
  std::poisson_distribution<int> cnt(1.0);
  const std::size_t target = static_cast<std::size_t>(target_cover * static_cast<double>(rows * cols));
  std::size_t covered = 0;
  std::size_t guard = 0;
  while (covered < target && guard < defaulted_guard(rows, cols)) {
    ++guard;
    const long r0 = static_cast<long>(pr(rng));
    const long c0 = static_cast<long>(pc(rng));
    for (long dr = -1; dr <= 1; ++dr) {
      for (long dc = -1; dc <= 1; ++dc) {
        const long r = r0 + dr;
        const long c = c0 + dc;
        if (r < 0 || c < 0 || r >= static_cast<long>(rows) || c >= static_cast<long>(cols)) continue;
        double& cell = h[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)];
        if (cell == 0.0) ++covered;
        cell += 1.0 + static_cast<double>(cnt(rng));
      }
    }
  }
  return h;
}

// Intercept b such that mean sigmoid(a*r + b) over the field hits the target
// rate, found by bisection.
double calibrate_intercept(const std::vector<double>& risk, double slope, double target) {
  double lo = -20.0, hi = 20.0;
  auto rate = [&](double b) {
    double s = 0.0;
    for (double r : risk) s += 1.0 / (1.0 + std::exp(-(slope * r + b)));
    return s / static_cast<double>(risk.size());
  };
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (rate(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.grid_rows == 0 || cfg.grid_cols == 0 || cfg.n_municipalities == 0 || cfg.d_geo == 0) {
    throw config_error("grid_rows, grid_cols, n_municipalities, d_geo must be positive");
  }
  if (cfg.grid_rows * cfg.grid_cols < cfg.n_municipalities) {
    throw config_error("grid smaller than municipality count");
  }
  if (!(cfg.hard_fraction > 0.0 && cfg.hard_fraction <= 0.5)) {
    throw config_error("hard_fraction must lie in (0, 0.5]");
  }
  if (cfg.spurious_strength < 0.0 || cfg.spurious_strength > 1.0) {
    throw config_error("spurious_strength must lie in [0, 1]");
  }

  const std::size_t rows = cfg.grid_rows;
  const std::size_t cols = cfg.grid_cols;
  const std::size_t n = rows * cols;
  std::mt19937_64 rng(cfg.seed);

  // Geospatial fields and the invariant risk score they induce.
  std::vector<GeoField> geo;
  geo.reserve(cfg.d_geo);
  for (std::size_t j = 0; j < cfg.d_geo; ++j) geo.push_back(make_geo_field(rows, cols, rng));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> w(cfg.d_geo);
  for (double& wi : w) wi = nd(rng);
  std::vector<double> risk(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cfg.d_geo; ++j) risk[i] += w[j] * geo[j].values[i];
  }
  {
    double mean = 0.0;
    for (double v : risk) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : risk) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (double& v : risk) v = (v - mean) / sd;
  }

  // Positive rate and independent-history coverage are tied to hard_fraction
  // so that fully independent history still lands near the requested Hard
  // share: with cover rho, P(disagree) = rho(1-pi) + (1-rho)pi = hard_fraction.
  const double pi = std::clamp(0.75 * cfg.hard_fraction, 0.02, 0.35);
  const double rho = (cfg.hard_fraction - pi) / (1.0 - 2.0 * pi);
  const double slope = 3.0;
  const double intercept = calibrate_intercept(risk, slope, pi);

  std::vector<double> h_indep = make_history_field(rows, cols, rho, rng);

  // Hard band: a contiguous strip of rows where the history feature always
  // disagrees with the label. Band share solves
  //   x + (1-x)(1-s) * hard_fraction = hard_fraction.
  const double s = cfg.spurious_strength;
  const double band_share = cfg.hard_fraction * s / (1.0 - (1.0 - s) * cfg.hard_fraction);
  const std::size_t band_rows =
      static_cast<std::size_t>(std::llround(band_share * static_cast<double>(rows)));

  // Municipality tiling: mr x mc rectangular blocks, extra tiles merged into
  // the last municipality.
  std::size_t mr = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(cfg.n_municipalities))));
  if (mr == 0) mr = 1;
  std::size_t mc = (cfg.n_municipalities + mr - 1) / mr;

  std::uniform_real_distribution<double> ur(0.0, 1.0);
  std::poisson_distribution<int> extra(2.0);

  Dataset ds;
  ds.feature_names.push_back("hist_mines");
  for (std::size_t j = 0; j < cfg.d_geo; ++j) ds.feature_names.push_back("geo_" + std::to_string(j));
  ds.env_feature = "hist_mines";
  ds.cells.reserve(n);

  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      Cell cell;
      cell.cell_id = "cell_" + std::to_string(i);
      cell.lon = -75.0 + 0.005 * static_cast<double>(c);
      cell.lat = 6.0 + 0.005 * static_cast<double>(r);
      std::size_t tile_r = std::min(mr - 1, r * mr / rows);
      std::size_t tile_c = std::min(mc - 1, c * mc / cols);
      std::size_t muni = std::min(cfg.n_municipalities - 1, tile_r * mc + tile_c);
      cell.municipality = "M" + std::to_string(muni);
      cell.department = "D0";

      const double p1 = 1.0 / (1.0 + std::exp(-(slope * risk[i] + intercept)));
      cell.label = (ur(rng) < p1) ? 1 : 0;

      double h;
      if (r < band_rows) {
        // hard band: history contradicts the label
        h = (cell.label == 1) ? 0.0 : 1.0 + static_cast<double>(extra(rng));
      } else if (ur(rng) < s) {
        // spurious link: history agrees with the label
        h = (cell.label == 1) ? 1.0 + static_cast<double>(extra(rng)) : 0.0;
      } else {
        h = h_indep[i];
      }

      cell.features.push_back(h);
      for (std::size_t j = 0; j < cfg.d_geo; ++j) cell.features.push_back(geo[j].values[i]);
      ds.cells.push_back(std::move(cell));
    }
  }
  return ds;
}

}  // namespace reland
