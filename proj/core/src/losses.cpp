#include "reland/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "reland/errors.hpp"

namespace reland {

namespace {

constexpr double kProbEps = 1e-12;

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

double softplus(double x) {
  // log(1 + exp(x)), overflow-safe
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw dimension_error(std::string(what) + ": length mismatch");
}

}  // namespace

double cross_entropy(const Vec& probs, const std::vector<int>& labels) {
  check_lengths(probs.size(), labels.size(), "cross_entropy");
  if (probs.empty()) throw domain_error("cross_entropy on empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    total += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

Vec cross_entropy_grad(const Vec& probs, const std::vector<int>& labels) {
  check_lengths(probs.size(), labels.size(), "cross_entropy_grad");
  const double inv_n = 1.0 / static_cast<double>(probs.size());
  Vec g(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    g[i] = inv_n * (labels[i] == 1 ? -1.0 / p : 1.0 / (1.0 - p));
  }
  return g;
}

double irm_penalty_env(const Vec& logits, const std::vector<int>& labels) {
  check_lengths(logits.size(), labels.size(), "irm_penalty_env");
  if (logits.empty()) throw domain_error("irm_penalty_env on empty environment");
  double d = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    d += (sigmoid(logits[i]) - static_cast<double>(labels[i])) * logits[i];
  }
  d /= static_cast<double>(logits.size());
  return d * d;
}

ScalarWithGrad irm_penalty_env_with_grad(const Vec& logits, const std::vector<int>& labels) {
  check_lengths(logits.size(), labels.size(), "irm_penalty_env");
  if (logits.empty()) throw domain_error("irm_penalty_env on empty environment");
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  double d = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    d += (sigmoid(logits[i]) - static_cast<double>(labels[i])) * logits[i];
  }
  d *= inv_n;
  ScalarWithGrad out;
  out.value = d * d;
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double s = sigmoid(logits[i]);
    const double dd_dz = inv_n * (s * (1.0 - s) * logits[i] + s - static_cast<double>(labels[i]));
    out.grad[i] = 2.0 * d * dd_dz;
  }
  return out;
}

namespace {

// Index layout of the micro-batch scheme shared by value and gradient paths.
struct MicroBatches {
  std::vector<std::size_t> hard;
  std::vector<std::vector<std::size_t>> easy_chunks;
  bool degenerate = false;
};

MicroBatches partition_microbatches(const std::vector<EnvironmentTag>& tags,
                                    RemainderPolicy policy) {
  MicroBatches mb;
  std::vector<std::size_t> easy;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    (tags[i] == EnvironmentTag::Hard ? mb.hard : easy).push_back(i);
  }
  const std::size_t h = mb.hard.size();
  if (h == 0 || h == tags.size()) {
    mb.degenerate = true;
    return mb;
  }
  std::size_t i = 0;
  while (i + h <= easy.size()) {
    mb.easy_chunks.emplace_back(easy.begin() + i, easy.begin() + i + h);
    i += h;
  }
  const std::size_t remainder = easy.size() - i;
  if (remainder > 0 && policy == RemainderPolicy::MergeIntoLast) {
    if (mb.easy_chunks.empty()) {
      mb.easy_chunks.emplace_back(easy.begin() + i, easy.end());
    } else {
      mb.easy_chunks.back().insert(mb.easy_chunks.back().end(), easy.begin() + i, easy.end());
    }
  }
  return mb;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& src, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(src[i]);
  return out;
}

}  // namespace

double irm_microbatch_penalty(const Vec& logits, const std::vector<int>& labels,
                              const std::vector<EnvironmentTag>& tags, const IrmConfig& cfg) {
  check_lengths(logits.size(), labels.size(), "irm_microbatch_penalty");
  check_lengths(logits.size(), tags.size(), "irm_microbatch_penalty");
  if (logits.empty()) throw domain_error("irm_microbatch_penalty on empty batch");
  if (cfg.lambda == 0.0) return 0.0;
  MicroBatches mb = partition_microbatches(tags, cfg.remainder_policy);
  if (mb.degenerate) return 0.0;
  const double b = cfg.batch_size > 0 ? static_cast<double>(cfg.batch_size)
                                      : static_cast<double>(logits.size());
  double total = irm_penalty_env(gather(logits, mb.hard), gather(labels, mb.hard));
  for (const auto& chunk : mb.easy_chunks) {
    total += irm_penalty_env(gather(logits, chunk), gather(labels, chunk));
  }
  return cfg.lambda / b * total;
}

ScalarWithGrad irm_microbatch_penalty_with_grad(const Vec& logits, const std::vector<int>& labels,
                                                const std::vector<EnvironmentTag>& tags,
                                                const IrmConfig& cfg) {
  check_lengths(logits.size(), labels.size(), "irm_microbatch_penalty");
  check_lengths(logits.size(), tags.size(), "irm_microbatch_penalty");
  if (logits.empty()) throw domain_error("irm_microbatch_penalty on empty batch");
  ScalarWithGrad out;
  out.grad.assign(logits.size(), 0.0);
  if (cfg.lambda == 0.0) return out;
  MicroBatches mb = partition_microbatches(tags, cfg.remainder_policy);
  if (mb.degenerate) return out;
  const double b = cfg.batch_size > 0 ? static_cast<double>(cfg.batch_size)
                                      : static_cast<double>(logits.size());
  const double scale = cfg.lambda / b;
  auto accumulate = [&](const std::vector<std::size_t>& idx) {
    ScalarWithGrad env = irm_penalty_env_with_grad(gather(logits, idx), gather(labels, idx));
    out.value += scale * env.value;
    for (std::size_t k = 0; k < idx.size(); ++k) out.grad[idx[k]] += scale * env.grad[k];
  };
  accumulate(mb.hard);
  for (const auto& chunk : mb.easy_chunks) accumulate(chunk);
  return out;
}

double pnorm_push(const Vec& pos_scores, const Vec& neg_scores, double p) {
  if (pos_scores.empty() || neg_scores.empty()) {
    throw domain_error("pnorm_push needs at least one positive and one negative");
  }
  if (p < 1.0) throw domain_error("pnorm_push exponent must be >= 1");
  const double log_p_count = std::log(static_cast<double>(pos_scores.size()));
  double total = 0.0;
  for (double sn : neg_scores) {
    // log A_j = logsumexp_i(p * log l_ij) - log P, term_j = exp(log A_j / p)
    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<double> logs;
    logs.reserve(pos_scores.size());
    for (double sp : pos_scores) {
      const double l = softplus(sn - sp);
      const double lg = l > 0.0 ? p * std::log(l) : -std::numeric_limits<double>::infinity();
      logs.push_back(lg);
      max_log = std::max(max_log, lg);
    }
    if (!std::isfinite(max_log)) continue;  // all pairwise losses underflowed to zero
    double acc = 0.0;
    for (double lg : logs) acc += std::exp(lg - max_log);
    const double log_a = max_log + std::log(acc) - log_p_count;
    total += std::exp(log_a / p);
  }
  return total / static_cast<double>(neg_scores.size());
}

void pnorm_push_grad(const Vec& pos_scores, const Vec& neg_scores, double p, Vec& d_pos,
                     Vec& d_neg) {
  if (pos_scores.empty() || neg_scores.empty()) {
    throw domain_error("pnorm_push needs at least one positive and one negative");
  }
  const std::size_t np = pos_scores.size();
  const std::size_t nn = neg_scores.size();
  d_pos.assign(np, 0.0);
  d_neg.assign(nn, 0.0);
  const double log_p_count = std::log(static_cast<double>(np));
  const double inv_n = 1.0 / static_cast<double>(nn);
  std::vector<double> logs(np);
  for (std::size_t j = 0; j < nn; ++j) {
    const double sn = neg_scores[j];
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < np; ++i) {
      const double l = softplus(sn - pos_scores[i]);
      logs[i] = l > 0.0 ? std::log(l) : -std::numeric_limits<double>::infinity();
      max_log = std::max(max_log, p * logs[i]);
    }
    if (!std::isfinite(max_log)) continue;
    double acc = 0.0;
    for (std::size_t i = 0; i < np; ++i) acc += std::exp(p * logs[i] - max_log);
    const double log_a = max_log + std::log(acc) - log_p_count;
    // d term_j / d l_ij = exp((1/p - 1) log A_j + (p-1) log l_ij - log P)
    for (std::size_t i = 0; i < np; ++i) {
      if (!std::isfinite(logs[i])) continue;
      const double dterm_dl =
          std::exp((1.0 / p - 1.0) * log_a + (p - 1.0) * logs[i] - log_p_count);
      const double s = sigmoid(sn - pos_scores[i]);  // dl/dsn = s, dl/dsp = -s
      d_neg[j] += inv_n * dterm_dl * s;
      d_pos[i] -= inv_n * dterm_dl * s;
    }
  }
}

ScalarWithGrad pushed_objective(const Vec& probs, const std::vector<int>& labels,
                                const PushConfig& cfg) {
  check_lengths(probs.size(), labels.size(), "pushed_objective");
  for (double pv : probs) {
    if (pv < 0.0 || pv > 1.0) throw domain_error("pushed_objective probs must lie in [0,1]");
  }
  ScalarWithGrad out;
  out.value = cross_entropy(probs, labels);
  out.grad = cross_entropy_grad(probs, labels);

  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == 1 ? pos_idx : neg_idx).push_back(i);
  }
  if (cfg.lambda_p == 0.0 || pos_idx.empty() || neg_idx.empty()) return out;

  Vec pos = gather(probs, pos_idx);
  Vec neg = gather(probs, neg_idx);
  out.value += cfg.lambda_p * pnorm_push(pos, neg, cfg.p);
  Vec d_pos, d_neg;
  pnorm_push_grad(pos, neg, cfg.p, d_pos, d_neg);
  for (std::size_t k = 0; k < pos_idx.size(); ++k) out.grad[pos_idx[k]] += cfg.lambda_p * d_pos[k];
  for (std::size_t k = 0; k < neg_idx.size(); ++k) out.grad[neg_idx[k]] += cfg.lambda_p * d_neg[k];
  return out;
}

Vec pushed_gbdt_gradient(const Vec& y_hat_n, const std::vector<int>& y_n, const Vec& y_hat_p,
                         double /*p*/) {
  check_lengths(y_hat_n.size(), y_n.size(), "pushed_gbdt_gradient");
  if (y_hat_p.empty()) throw domain_error("pushed_gbdt_gradient needs a non-empty positive set");
  const double inv_p = 1.0 / static_cast<double>(y_hat_p.size());
  Vec g(y_hat_n.size());
  for (std::size_t j = 0; j < y_hat_n.size(); ++j) {
    const double yn = y_hat_n[j];
    double push = 0.0;
    for (double yp : y_hat_p) push += sigmoid(yn - yp);
    g[j] = yn - static_cast<double>(y_n[j]) + yn * (1.0 - yn) * inv_p * push;
  }
  return g;
}

Vec pushed_gbdt_gradient_pos(const Vec& y_hat_p, const std::vector<int>& y_p) {
  check_lengths(y_hat_p.size(), y_p.size(), "pushed_gbdt_gradient_pos");
  Vec g(y_hat_p.size());
  for (std::size_t i = 0; i < y_hat_p.size(); ++i) {
    g[i] = y_hat_p[i] - static_cast<double>(y_p[i]);
  }
  return g;
}

Vec pushed_gbdt_hessian(const Vec& y_hat_n, const std::vector<int>& y_n, const Vec& g_n,
                        const Vec& y_hat_p, double p, bool predicted_lead_term) {
  check_lengths(y_hat_n.size(), y_n.size(), "pushed_gbdt_hessian");
  check_lengths(y_hat_n.size(), g_n.size(), "pushed_gbdt_hessian");
  if (y_hat_p.empty()) throw domain_error("pushed_gbdt_hessian needs a non-empty positive set");
  const double inv_p = 1.0 / static_cast<double>(y_hat_p.size());
  Vec h(y_hat_n.size());
  for (std::size_t j = 0; j < y_hat_n.size(); ++j) {
    const double yn = y_hat_n[j];
    double l = 0.0;
    double hh = 0.0;
    for (double yp : y_hat_p) {
      const double margin = yn - yp;
      l += std::pow(softplus(margin), p);
      const double s = sigmoid(margin);
      hh += s * (s * yn * yn * (1.0 - yn * yn) + 1.0);
    }
    l *= inv_p;
    hh *= inv_p;
    if (l == 0.0 && p < 2.0) throw domain_error("pushed_gbdt_hessian: L = 0 with p < 2");
    const double lead = predicted_lead_term
                            ? yn * (1.0 - yn)
                            : static_cast<double>(y_n[j]) * (1.0 - static_cast<double>(y_n[j]));
    h[j] = lead + p * std::pow(l, p - 2.0) * ((p - 1.0) * g_n[j] * g_n[j] + l * hh);
  }
  return h;
}

Vec pushed_gbdt_hessian_pos(const std::vector<int>& y_p, const Vec& y_hat_p,
                            bool predicted_lead_term) {
  check_lengths(y_hat_p.size(), y_p.size(), "pushed_gbdt_hessian_pos");
  Vec h(y_p.size());
  for (std::size_t i = 0; i < y_p.size(); ++i) {
    h[i] = predicted_lead_term
               ? y_hat_p[i] * (1.0 - y_hat_p[i])
               : static_cast<double>(y_p[i]) * (1.0 - static_cast<double>(y_p[i]));
  }
  return h;
}

double pnorm_split_gain(const std::vector<int>& labels_left, const std::vector<int>& labels_right,
                        double p) {
  auto count_pos = [](const std::vector<int>& v) {
    std::size_t c = 0;
    for (int y : v) c += static_cast<std::size_t>(y);
    return c;
  };
  const std::size_t pos_l = count_pos(labels_left);
  const std::size_t pos_r = count_pos(labels_right);
  const std::size_t n_l = labels_left.size();
  const std::size_t n_r = labels_right.size();
  const std::size_t pos_total = pos_l + pos_r;
  const std::size_t n_total = n_l + n_r;
  if (pos_total == 0 || pos_total == n_total) return 0.0;  // no ranking signal

  const double prob_l = n_l > 0 ? static_cast<double>(pos_l) / static_cast<double>(n_l) : 0.0;
  const double prob_r = n_r > 0 ? static_cast<double>(pos_r) / static_cast<double>(n_r) : 0.0;
  Vec pos_scores, neg_scores;
  auto assign = [&](const std::vector<int>& labels, double prob) {
    for (int y : labels) (y == 1 ? pos_scores : neg_scores).push_back(prob);
  };
  assign(labels_left, prob_l);
  assign(labels_right, prob_r);
  return std::log(2.0) - pnorm_push(pos_scores, neg_scores, p);
}

}  // namespace reland
