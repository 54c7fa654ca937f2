#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reland/dataset.hpp"
#include "reland/nn.hpp"

namespace reland {

enum class ModelKind { Reland, Mlp, Lr, LrSingle };

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

constexpr double kLogitClamp = 30.0;

struct RelandConfig {
  std::size_t dim = 0;
  std::size_t steps = 2;
  std::size_t latent = 8;
  double gamma = -1.0;
};

// Forward cache; holds everything the manual backward pass needs.
struct RelandForwardCache {
  Matrix x;
  Matrix mask_pre;                // W0 x
  std::vector<Vec> sample_masks;  // per-sample SM outputs (train mode only)
  std::vector<Vec> masks;         // m_1 .. m_S
  std::vector<Matrix> step_in;    // m_s ⊙ x
  std::vector<Matrix> step_pre;   // FC output before BN
  std::vector<Matrix> step_bn;    // after BN
  std::vector<Matrix> step_act;   // after ReLU
  Matrix total;                   // sum of step activations
  Vec raw_logits;
  Vec logits;  // clamped to +-kLogitClamp
  Vec probs;
  bool training = false;
};

// Compact sparse-mask tabular model: one learned mask head, parameter-free
// recursive step masks m_s = SM(gamma * prod_{j<s} m_j), summed FC+BN+ReLU
// decision blocks, sigmoid aggregation head.
struct RelandModel {
  RelandConfig cfg;
  DenseLayer mask_fc;
  BatchNormLayer mask_bn;
  std::vector<DenseLayer> step_fc;
  std::vector<BatchNormLayer> step_bn;
  DenseLayer agg;
  std::optional<Vec> frozen_mask;

  RelandModel() = default;
  RelandModel(const RelandConfig& cfg, std::uint64_t seed);

  RelandForwardCache forward(const Matrix& x, bool training);
  void backward(const RelandForwardCache& cache, const Vec& dlogits);

  void zero_grad();
  void visit(const std::function<void(double&, double&)>& fn);
};

struct MlpForwardCache {
  Matrix x, h1_pre, h1, h2_pre, h2;
  Vec raw_logits, logits, probs;
};

struct MlpModel {
  DenseLayer l1, l2, out;

  MlpModel() = default;
  MlpModel(std::size_t dim, std::size_t hidden, std::uint64_t seed);

  MlpForwardCache forward(const Matrix& x);
  void backward(const MlpForwardCache& cache, const Vec& dlogits);
  void zero_grad();
  void visit(const std::function<void(double&, double&)>& fn);
};

struct LrForwardCache {
  Matrix x;
  Vec raw_logits, logits, probs;
};

struct LrModel {
  DenseLayer fc;

  LrModel() = default;
  LrModel(std::size_t dim, std::uint64_t seed);

  LrForwardCache forward(const Matrix& x);
  void backward(const LrForwardCache& cache, const Vec& dlogits);
  void zero_grad();
  void visit(const std::function<void(double&, double&)>& fn);
};

// Uniform wrapper over the model kinds used by the training loop.
struct Model {
  ModelKind kind = ModelKind::Reland;
  std::optional<RelandModel> reland;
  std::optional<MlpModel> mlp;
  std::optional<LrModel> lr;
  // LrSingle only: column index into the (standardized) design matrix.
  std::size_t single_feature_index = 0;

  static Model make(ModelKind kind, std::size_t dim, std::uint64_t seed,
                    const RelandConfig& reland_cfg, std::size_t mlp_hidden = 20);

  // Returns (probs, logits); cache kept internally for backward().
  std::pair<Vec, Vec> forward(const Matrix& x, bool training);
  void backward(const Vec& dlogits);
  void zero_grad();
  void visit(const std::function<void(double&, double&)>& fn);
  std::size_t param_count();

 private:
  std::optional<RelandForwardCache> reland_cache_;
  std::optional<MlpForwardCache> mlp_cache_;
  std::optional<LrForwardCache> lr_cache_;
  Matrix restrict_single(const Matrix& x) const;
};

// Frozen mask: full-train mean of SM(BN_infer(W0 x)).
Vec finalize_mask(RelandModel& model, const Matrix& train_x);

struct ImportanceReport {
  Vec importance;          // per feature, sums to 1
  std::vector<Vec> masks;  // m_1 .. m_S
  Vec step_weights;        // eta_1 .. eta_S
};

// Aggregated step weights by default; per_sample averages per-sample
// normalized importances instead.
ImportanceReport feature_importance(RelandModel& model, const Matrix& train_x,
                                    bool per_sample = false);

struct Standardizer {
  Vec mean;
  Vec stddev;  // zero-variance columns mapped to 1
  static Standardizer fit(const Matrix& x);
  static Standardizer identity(std::size_t dim);
  Matrix apply(const Matrix& x) const;
};

struct Checkpoint {
  int format_version = 1;
  Model model;
  std::vector<std::string> feature_names;
  std::string single_feature;  // lr-single only
  Standardizer standardizer;
  std::size_t best_epoch = 0;
  double best_val_roc = 0.0;

  std::string to_json() const;
  static Checkpoint from_json(const std::string& text);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// Builds the design matrix for a dataset in checkpoint feature order.
Matrix design_matrix(const Dataset& ds, const std::vector<std::string>& feature_names);
std::vector<int> label_vector(const Dataset& ds);

// Deterministic inference-mode scoring.
Vec score(const Checkpoint& ckpt, const Dataset& ds);
Vec score_matrix(const Checkpoint& ckpt, const Matrix& raw_x);

}  // namespace reland
