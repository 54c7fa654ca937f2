#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "reland/nn.hpp"

namespace reland {

struct MetricReport {
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double mean_height = 0.0;
  double mean_rheight = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;

  std::string to_json() const;
};

// Non-strict pair counts per Eq. 3 semantics: ties count fully.
// Sort-based, O((P+N) log(P+N)); exactly equal to the O(PN) double loop.
std::pair<double, double> height_metrics(const Vec& scores, const std::vector<int>& labels);

// Rank statistic with the half-tie convention.
double roc_auc(const Vec& scores, const std::vector<int>& labels);

// Average precision with tied scores processed as one block.
double pr_auc(const Vec& scores, const std::vector<int>& labels);

MetricReport evaluate(const Vec& scores, const std::vector<int>& labels);

}  // namespace reland
