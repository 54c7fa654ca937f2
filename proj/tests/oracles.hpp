#pragma once

// Independent brute-force oracles used to freeze expected values. These are
// deliberately naive re-derivations, not calls back into the library code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace oracles {

using Vec = std::vector<double>;

// Simplex projection by bisection on the threshold tau:
// proj_i = max(z_i - tau, 0) with sum = 1. Monotone in tau, so bisection
// converges to machine precision without touching the sort-threshold rule.
inline Vec simplex_projection(const Vec& z) {
  double lo = *std::min_element(z.begin(), z.end()) - 1.0;
  double hi = *std::max_element(z.begin(), z.end());
  const auto mass = [&](double tau) {
    double s = 0.0;
    for (double v : z) s += std::max(v - tau, 0.0);
    return s;
  };
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mass(mid) > 1.0) lo = mid;
    else hi = mid;
  }
  double tau = 0.5 * (lo + hi);
  Vec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::max(z[i] - tau, 0.0);
  double s = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& v : out) v /= s;
  return out;
}

// Central finite differences of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// O(PN) non-strict pair counts per Eq. 3 semantics.
struct PairCounts {
  double mean_height = 0.0;
  double mean_rheight = 0.0;
  long long nonstrict_pairs = 0;  // #{(i,j): pos_i <= neg_j}
  long long strict_discordant = 0;
  long long ties = 0;
};

inline PairCounts pair_counts(const Vec& scores, const std::vector<int>& labels) {
  Vec pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  }
  PairCounts pc;
  for (double p : pos) {
    for (double n : neg) {
      if (p <= n) ++pc.nonstrict_pairs;
      if (p < n) ++pc.strict_discordant;
      if (p == n) ++pc.ties;
    }
  }
  pc.mean_height = static_cast<double>(pc.nonstrict_pairs) / static_cast<double>(neg.size());
  pc.mean_rheight = static_cast<double>(pc.nonstrict_pairs) / static_cast<double>(pos.size());
  return pc;
}

inline double roc_auc_oracle(const Vec& scores, const std::vector<int>& labels) {
  PairCounts pc = pair_counts(scores, labels);
  std::size_t np = 0, nn = 0;
  for (int y : labels) (y == 1 ? np : nn) += 1;
  const double pn = static_cast<double>(np) * static_cast<double>(nn);
  return 1.0 - (static_cast<double>(pc.strict_discordant) + 0.5 * static_cast<double>(pc.ties)) / pn;
}

// Naive double-loop Eq. 4.
inline double pnorm_push_oracle(const Vec& pos, const Vec& neg, double p) {
  double total = 0.0;
  for (double n : neg) {
    double inner = 0.0;
    for (double ps : pos) {
      inner += std::pow(std::log1p(std::exp(n - ps)), p);
    }
    total += std::pow(inner / static_cast<double>(pos.size()), 1.0 / p);
  }
  return total / static_cast<double>(neg.size());
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Direct transcription of Eq. 7's negative-cell Hessian:
//   L = P^{-1} sum_i log(1+exp(yhat_n - yhat_p,i))^p
//   H = P^{-1} sum_i s(s * yhat_n^2 * (1 - yhat_n^2) + 1), s = sigma(yhat_n - yhat_p,i)
//   H_n = y(1-y) + p * L^{p-2} * ((p-1) G^2 + L * H)
inline double eq7_hessian_oracle(double y_hat_n, int y_n, double g_n, const Vec& y_hat_p,
                                 double p, bool predicted_lead) {
  const double P = static_cast<double>(y_hat_p.size());
  double L = 0.0, H = 0.0;
  for (double yp : y_hat_p) {
    const double d = y_hat_n - yp;
    L += std::pow(std::log1p(std::exp(d)), p);
    const double s = sigmoid(d);
    H += s * (s * y_hat_n * y_hat_n * (1.0 - y_hat_n * y_hat_n) + 1.0);
  }
  L /= P;
  H /= P;
  const double lead = predicted_lead ? y_hat_n * (1.0 - y_hat_n)
                                     : static_cast<double>(y_n) * (1.0 - y_n);
  return lead + p * std::pow(L, p - 2.0) * ((p - 1.0) * g_n * g_n + L * H);
}

// Average precision by hand: descending sweep, tied scores as one block.
inline double average_precision_oracle(const Vec& scores, const std::vector<int>& labels) {
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t total_pos = 0;
  for (int y : labels) total_pos += (y == 1);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0, i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    std::size_t block_pos = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      block_pos += (labels[idx[j]] == 1);
      ++j;
    }
    tp += block_pos;
    seen += (j - i);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += precision * static_cast<double>(block_pos) / static_cast<double>(total_pos);
    i = j;
  }
  return ap;
}

}  // namespace oracles
