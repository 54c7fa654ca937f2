#include "reland/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "reland/errors.hpp"

namespace reland {

namespace {

void split_scores(const Vec& scores, const std::vector<int>& labels, Vec& pos, Vec& neg) {
  if (scores.size() != labels.size()) throw dimension_error("metrics: length mismatch");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  }
  if (pos.empty() || neg.empty()) throw domain_error("metrics need both classes present");
}

}  // namespace

std::pair<double, double> height_metrics(const Vec& scores, const std::vector<int>& labels) {
  Vec pos, neg;
  split_scores(scores, labels, pos, neg);
  std::sort(pos.begin(), pos.end());
  // total = #{(i,j) : s_p,i <= s_n,j}, counted per negative via binary search
  double total = 0.0;
  for (double sn : neg) {
    total += static_cast<double>(std::upper_bound(pos.begin(), pos.end(), sn) - pos.begin());
  }
  return {total / static_cast<double>(neg.size()), total / static_cast<double>(pos.size())};
}

double roc_auc(const Vec& scores, const std::vector<int>& labels) {
  Vec pos, neg;
  split_scores(scores, labels, pos, neg);
  std::sort(neg.begin(), neg.end());
  double concordant = 0.0;
  double ties = 0.0;
  for (double sp : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), sp);
    const auto hi = std::upper_bound(neg.begin(), neg.end(), sp);
    concordant += static_cast<double>(lo - neg.begin());
    ties += static_cast<double>(hi - lo);
  }
  return (concordant + 0.5 * ties) / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double pr_auc(const Vec& scores, const std::vector<int>& labels) {
  Vec pos, neg;
  split_scores(scores, labels, pos, neg);
  const std::size_t p_total = pos.size();

  struct Entry {
    double score;
    int label;
  };
  std::vector<Entry> entries;
  entries.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) entries.push_back({scores[i], labels[i]});
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.score > b.score; });

  double ap = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  double prev_recall = 0.0;
  std::size_t i = 0;
  while (i < entries.size()) {
    std::size_t j = i;
    while (j < entries.size() && entries[j].score == entries[i].score) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (entries[k].label == 1) {
        ++tp;
      } else {
        ++fp;
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(p_total);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

MetricReport evaluate(const Vec& scores, const std::vector<int>& labels) {
  MetricReport r;
  auto [h, rh] = height_metrics(scores, labels);
  r.mean_height = h;
  r.mean_rheight = rh;
  r.roc_auc = roc_auc(scores, labels);
  r.pr_auc = pr_auc(scores, labels);
  for (int y : labels) {
    if (y == 1) {
      ++r.n_pos;
    } else {
      ++r.n_neg;
    }
  }
  return r;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["roc_auc"] = roc_auc;
  j["pr_auc"] = pr_auc;
  j["mean_height"] = mean_height;
  j["mean_rheight"] = mean_rheight;
  j["n_pos"] = n_pos;
  j["n_neg"] = n_neg;
  return j.dump(2);
}

}  // namespace reland
