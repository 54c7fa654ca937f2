#include "reland/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"
#include "reland/errors.hpp"

namespace reland {

using nlohmann::json;

std::string cluster_class_name(ClusterClass c) {
  switch (c) {
    case ClusterClass::High: return "High";
    case ClusterClass::Medium: return "Medium";
    case ClusterClass::Low: return "Low";
    case ClusterClass::NotSignificant: return "NotSignificant";
  }
  throw state_error("unknown cluster class");
}

namespace {

// Smallest positive gap between sorted unique coordinates.
double infer_spacing(std::vector<double> coords) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  double spacing = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < coords.size(); ++i) {
    const double gap = coords[i] - coords[i - 1];
    if (gap > 1e-12) spacing = std::min(spacing, gap);
  }
  return spacing;
}

}  // namespace

SpatialWeights build_weights(const std::vector<Cell>& cells, ContiguityScheme scheme) {
  SpatialWeights w;
  w.scheme = scheme;
  const std::size_t n = cells.size();
  w.neighbors.resize(n);
  w.weights.resize(n);
  if (n == 0) return w;

  std::vector<double> lons, lats;
  lons.reserve(n);
  lats.reserve(n);
  for (const Cell& c : cells) {
    lons.push_back(c.lon);
    lats.push_back(c.lat);
  }
  const double dx = infer_spacing(lons);
  const double dy = infer_spacing(lats);
  if (!std::isfinite(dx) && !std::isfinite(dy)) {
    // single cell or fully degenerate layout: everything isolated
    return w;
  }
  const double sx = std::isfinite(dx) ? dx : 1.0;
  const double sy = std::isfinite(dy) ? dy : 1.0;

  const double lon0 = *std::min_element(lons.begin(), lons.end());
  const double lat0 = *std::min_element(lats.begin(), lats.end());
  std::map<std::pair<long, long>, std::size_t> grid;
  std::vector<std::pair<long, long>> coord(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long gx = std::lround((cells[i].lon - lon0) / sx);
    const long gy = std::lround((cells[i].lat - lat0) / sy);
    coord[i] = {gx, gy};
    grid[{gx, gy}] = i;
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (long ddx = -1; ddx <= 1; ++ddx) {
      for (long ddy = -1; ddy <= 1; ++ddy) {
        if (ddx == 0 && ddy == 0) continue;
        if (scheme == ContiguityScheme::Rook && ddx != 0 && ddy != 0) continue;
        auto it = grid.find({coord[i].first + ddx, coord[i].second + ddy});
        if (it != grid.end()) w.neighbors[i].push_back(it->second);
      }
    }
    std::sort(w.neighbors[i].begin(), w.neighbors[i].end());
    if (!w.neighbors[i].empty()) {
      const double wt = 1.0 / static_cast<double>(w.neighbors[i].size());
      w.weights[i].assign(w.neighbors[i].size(), wt);
    }
  }
  return w;
}

namespace {

struct Centered {
  Vec z;
  double m2 = 0.0;
  std::vector<std::size_t> active;  // non-isolated cells
};

Centered center_scores(const Vec& scores, const SpatialWeights& w) {
  if (scores.size() != w.size()) throw dimension_error("local_moran score/weight size mismatch");
  Centered c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!w.isolated(i)) c.active.push_back(i);
  }
  if (c.active.size() < 2) throw domain_error("local_moran needs at least 2 connected cells");
  double mean = 0.0;
  for (std::size_t i : c.active) mean += scores[i];
  mean /= static_cast<double>(c.active.size());
  c.z.assign(scores.size(), 0.0);
  for (std::size_t i : c.active) {
    c.z[i] = scores[i] - mean;
    c.m2 += c.z[i] * c.z[i];
  }
  c.m2 /= static_cast<double>(c.active.size());
  if (c.m2 == 0.0) throw domain_error("local_moran on a constant score field");
  return c;
}

}  // namespace

double global_moran(const Vec& scores, const SpatialWeights& w) {
  Centered c = center_scores(scores, w);
  double acc = 0.0;
  for (std::size_t i : c.active) {
    double lag = 0.0;
    for (std::size_t k = 0; k < w.neighbors[i].size(); ++k) {
      lag += w.weights[i][k] * c.z[w.neighbors[i][k]];
    }
    acc += c.z[i] * lag;
  }
  return acc / (c.m2 * static_cast<double>(c.active.size()));
}

ClusterMap local_moran(const Vec& scores, const SpatialWeights& w, std::size_t n_permutations,
                       std::uint64_t seed, double alpha) {
  Centered c = center_scores(scores, w);
  const std::size_t n = scores.size();

  ClusterMap out;
  out.alpha = alpha;
  out.local_i.assign(n, 0.0);
  out.p_value.assign(n, 1.0);
  out.cls.assign(n, ClusterClass::NotSignificant);
  out.isolated.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) out.isolated[i] = w.isolated(i);

  // pool of centered values for conditional permutation (cell i held out)
  Vec pool;
  pool.reserve(c.active.size());
  for (std::size_t i : c.active) pool.push_back(c.z[i]);

  for (std::size_t i : c.active) {
    double lag = 0.0;
    for (std::size_t k = 0; k < w.neighbors[i].size(); ++k) {
      lag += w.weights[i][k] * c.z[w.neighbors[i][k]];
    }
    const double observed = c.z[i] / c.m2 * lag;
    out.local_i[i] = observed;

    if (n_permutations > 0) {
      // sample k neighbor values from the pool without cell i
      Vec others;
      others.reserve(pool.size() - 1);
      for (std::size_t j : c.active) {
        if (j != i) others.push_back(c.z[j]);
      }
      std::seed_seq seq{seed, static_cast<std::uint64_t>(i)};
      std::mt19937_64 rng(seq);
      const std::size_t k = w.neighbors[i].size();
      std::size_t extreme = 0;
      Vec draw(k);
      for (std::size_t perm = 0; perm < n_permutations; ++perm) {
        // partial Fisher-Yates over a copy-free index sample
        for (std::size_t t = 0; t < k; ++t) {
          std::uniform_int_distribution<std::size_t> u(t, others.size() - 1);
          const std::size_t pick = u(rng);
          std::swap(others[t], others[pick]);
          draw[t] = others[t];
        }
        double plag = 0.0;
        for (std::size_t t = 0; t < k; ++t) plag += w.weights[i][t] * draw[t];
        const double stat = c.z[i] / c.m2 * plag;
        if (observed >= 0.0 ? stat >= observed : stat <= observed) ++extreme;
      }
      out.p_value[i] = (1.0 + static_cast<double>(extreme)) /
                       (1.0 + static_cast<double>(n_permutations));
    } else {
      out.p_value[i] = 1.0;
    }

    if (out.p_value[i] <= alpha) {
      if (c.z[i] > 0.0 && lag > 0.0) {
        out.cls[i] = ClusterClass::High;
      } else if (c.z[i] < 0.0 && lag < 0.0) {
        out.cls[i] = ClusterClass::Low;
      } else {
        out.cls[i] = ClusterClass::Medium;  // spatial outlier (HL or LH)
      }
    }
  }
  return out;
}

namespace {

json cell_polygon(const Cell& c, double cell_size_m) {
  // square centered on the cell, ring closed and counter-clockwise
  const double half_lat = 0.5 * cell_size_m / 111320.0;
  const double cos_lat = std::cos(c.lat * M_PI / 180.0);
  const double half_lon = half_lat / std::max(cos_lat, 1e-6);
  const double w = c.lon - half_lon, e = c.lon + half_lon;
  const double s = c.lat - half_lat, n = c.lat + half_lat;
  json ring = json::array();
  ring.push_back({w, s});
  ring.push_back({e, s});
  ring.push_back({e, n});
  ring.push_back({w, n});
  ring.push_back({w, s});
  json poly;
  poly["type"] = "Polygon";
  poly["coordinates"] = json::array({ring});
  return poly;
}

json riskmap_feature_collection(const std::vector<Cell>& cells, const Vec& scores,
                                const ClusterMap* cluster, double cell_size_m) {
  if (scores.size() != cells.size()) throw dimension_error("riskmap score count mismatch");
  for (double s : scores) {
    if (s < 0.0 || s > 1.0) throw domain_error("risk scores must lie in [0,1]");
  }
  json fc;
  fc["type"] = "FeatureCollection";
  json features = json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    json f;
    f["type"] = "Feature";
    f["geometry"] = cell_polygon(cells[i], cell_size_m);
    json props;
    props["cell_id"] = cells[i].cell_id;
    props["risk"] = scores[i];
    if (cluster) {
      props["cluster_class"] = cluster_class_name(cluster->cls[i]);
      props["local_i"] = cluster->local_i[i];
      props["p_value"] = cluster->p_value[i];
    } else {
      props["cluster_class"] = nullptr;
      props["local_i"] = nullptr;
      props["p_value"] = nullptr;
    }
    f["properties"] = props;
    features.push_back(f);
  }
  fc["features"] = features;
  return fc;
}

}  // namespace

std::string export_riskmap_geojson(const std::vector<Cell>& cells, const Vec& scores,
                                   const ClusterMap* cluster, double cell_size_m) {
  return riskmap_feature_collection(cells, scores, cluster, cell_size_m).dump(2);
}

std::string export_riskmap_html(const std::vector<Cell>& cells, const Vec& scores,
                                const ClusterMap* cluster, double cell_size_m) {
  const json fc = riskmap_feature_collection(cells, scores, cluster, cell_size_m);
  std::ostringstream os;
  os << R"(<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>Risk map</title>
<style>
body { font-family: sans-serif; margin: 0; }
#legend { position: fixed; top: 10px; right: 10px; background: #fff; padding: 8px;
          border: 1px solid #999; font-size: 12px; }
.swatch { display: inline-block; width: 14px; height: 14px; margin-right: 4px;
          vertical-align: middle; }
canvas { display: block; }
</style>
</head>
<body>
<div id="legend">
  <div><span class="swatch" style="background:#fff5f0"></span>risk 0.0</div>
  <div><span class="swatch" style="background:#fb6a4a"></span>risk 0.5</div>
  <div><span class="swatch" style="background:#67000d"></span>risk 1.0</div>
</div>
<canvas id="map" width="900" height="700"></canvas>
<script>
const data = )" << fc.dump() << R"(;
// linear ramp from light (#fff5f0) at 0 to dark (#67000d) at 1
function rampColor(t) {
  const lo = [255, 245, 240], hi = [103, 0, 13];
  const c = lo.map((v, i) => Math.round(v + (hi[i] - v) * t));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}
const canvas = document.getElementById('map');
const ctx = canvas.getContext('2d');
let minLon = Infinity, maxLon = -Infinity, minLat = Infinity, maxLat = -Infinity;
for (const f of data.features) {
  for (const p of f.geometry.coordinates[0]) {
    minLon = Math.min(minLon, p[0]); maxLon = Math.max(maxLon, p[0]);
    minLat = Math.min(minLat, p[1]); maxLat = Math.max(maxLat, p[1]);
  }
}
const pad = 20;
const sx = (canvas.width - 2 * pad) / Math.max(maxLon - minLon, 1e-9);
const sy = (canvas.height - 2 * pad) / Math.max(maxLat - minLat, 1e-9);
const s = Math.min(sx, sy);
function px(lon) { return pad + (lon - minLon) * s; }
function py(lat) { return canvas.height - pad - (lat - minLat) * s; }
for (const f of data.features) {
  const ring = f.geometry.coordinates[0];
  ctx.beginPath();
  ctx.moveTo(px(ring[0][0]), py(ring[0][1]));
  for (let i = 1; i < ring.length; i++) ctx.lineTo(px(ring[i][0]), py(ring[i][1]));
  ctx.closePath();
  ctx.fillStyle = rampColor(f.properties.risk);
  ctx.fill();
  const cls = f.properties.cluster_class;
  if (cls === 'High') { ctx.strokeStyle = '#000'; ctx.lineWidth = 1.5; ctx.stroke(); }
  else if (cls === 'Low') { ctx.strokeStyle = '#2166ac'; ctx.lineWidth = 1.5; ctx.stroke(); }
  else if (cls === 'Medium') { ctx.strokeStyle = '#762a83'; ctx.lineWidth = 1.5; ctx.stroke(); }
}
</script>
</body>
</html>
)";
  return os.str();
}

}  // namespace reland
