#pragma once

#include <cstddef>
#include <vector>

#include "reland/dataset.hpp"
#include "reland/nn.hpp"

namespace reland {

enum class RemainderPolicy { MergeIntoLast, DropRemainder };

struct IrmConfig {
  double lambda = 1.0;
  // Normalizer B of the micro-batch scheme; 0 means "use the batch length".
  std::size_t batch_size = 0;
  RemainderPolicy remainder_policy = RemainderPolicy::MergeIntoLast;
};

struct PushConfig {
  double p = 4.0;
  double lambda_p = 1.0;
};

struct ScalarWithGrad {
  double value = 0.0;
  Vec grad;
};

// Mean binary cross-entropy; probs clamped to [1e-12, 1 - 1e-12].
double cross_entropy(const Vec& probs, const std::vector<int>& labels);
Vec cross_entropy_grad(const Vec& probs, const std::vector<int>& labels);

// Squared gradient of the environment risk w.r.t. a dummy scalar classifier
// scaling the pre-sigmoid logit, evaluated at w = 1:
//   D = mean_i (sigmoid(z_i) - y_i) * z_i, penalty = D^2.
double irm_penalty_env(const Vec& logits, const std::vector<int>& labels);
ScalarWithGrad irm_penalty_env_with_grad(const Vec& logits, const std::vector<int>& labels);

// Micro-batch scheme: Hard cells form one environment, Easy cells are chunked
// (in batch order) into micro-batches of the same size as the Hard set.
double irm_microbatch_penalty(const Vec& logits, const std::vector<int>& labels,
                              const std::vector<EnvironmentTag>& tags, const IrmConfig& cfg);
ScalarWithGrad irm_microbatch_penalty_with_grad(const Vec& logits, const std::vector<int>& labels,
                                                const std::vector<EnvironmentTag>& tags,
                                                const IrmConfig& cfg);

// p-push norm with logistic loss, inner powers evaluated in log space.
double pnorm_push(const Vec& pos_scores, const Vec& neg_scores, double p);
void pnorm_push_grad(const Vec& pos_scores, const Vec& neg_scores, double p, Vec& d_pos,
                     Vec& d_neg);

// CE + lambda_p * push over class-split probabilities; gradient w.r.t. probs.
// Batches lacking either class fall back to CE alone.
ScalarWithGrad pushed_objective(const Vec& probs, const std::vector<int>& labels,
                                const PushConfig& cfg);

// Pushed-GBDT kernels (per-sample gradient/Hessian of the negative-side loss).
Vec pushed_gbdt_gradient(const Vec& y_hat_n, const std::vector<int>& y_n, const Vec& y_hat_p,
                         double p);
Vec pushed_gbdt_gradient_pos(const Vec& y_hat_p, const std::vector<int>& y_p);
// `predicted_lead_term` switches the leading y(1-y) to y_hat(1-y_hat).
Vec pushed_gbdt_hessian(const Vec& y_hat_n, const std::vector<int>& y_n, const Vec& g_n,
                        const Vec& y_hat_p, double p, bool predicted_lead_term = false);
Vec pushed_gbdt_hessian_pos(const std::vector<int>& y_p, const Vec& y_hat_p,
                            bool predicted_lead_term = false);

// Pushed-RF split criterion: ln 2 minus the children push norm, where each
// sample is scored with the positive fraction of the child it lands in.
double pnorm_split_gain(const std::vector<int>& labels_left, const std::vector<int>& labels_right,
                        double p);

}  // namespace reland
