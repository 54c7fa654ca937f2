#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reland/dataset.hpp"
#include "reland/nn.hpp"

namespace reland {

enum class ContiguityScheme { Queen, Rook };

struct SpatialWeights {
  // Per cell: neighbor indices and row-standardized weights; empty lists mark
  // isolated cells, which are excluded from Moran computation.
  std::vector<std::vector<std::size_t>> neighbors;
  std::vector<std::vector<double>> weights;
  ContiguityScheme scheme = ContiguityScheme::Queen;
  bool row_standardized = true;

  std::size_t size() const { return neighbors.size(); }
  bool isolated(std::size_t i) const { return neighbors[i].empty(); }
};

enum class ClusterClass { High, Medium, Low, NotSignificant };

std::string cluster_class_name(ClusterClass c);

struct ClusterMap {
  Vec local_i;
  Vec p_value;
  std::vector<ClusterClass> cls;
  double alpha = 0.01;
  std::vector<bool> isolated;  // excluded cells
};

// Cells must sit on a (possibly partial) regular lon/lat grid; spacing is
// inferred from coordinate gaps.
SpatialWeights build_weights(const std::vector<Cell>& cells, ContiguityScheme scheme);

// Local Moran's I with conditional permutation significance.
ClusterMap local_moran(const Vec& scores, const SpatialWeights& w, std::size_t n_permutations,
                       std::uint64_t seed, double alpha);

// Row-standardized global Moran's I (mean of local values).
double global_moran(const Vec& scores, const SpatialWeights& w);

// RFC 7946 FeatureCollection of square cell polygons. cluster may be null.
std::string export_riskmap_geojson(const std::vector<Cell>& cells, const Vec& scores,
                                   const ClusterMap* cluster, double cell_size_m = 500.0);
std::string export_riskmap_html(const std::vector<Cell>& cells, const Vec& scores,
                                const ClusterMap* cluster, double cell_size_m = 500.0);

}  // namespace reland
