#include "reland/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "reland/errors.hpp"

namespace reland {

using nlohmann::json;

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Reland: return "reland";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Lr: return "lr";
    case ModelKind::LrSingle: return "lr-single";
  }
  throw state_error("unknown model kind");
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "reland") return ModelKind::Reland;
  if (name == "mlp") return ModelKind::Mlp;
  if (name == "lr") return ModelKind::Lr;
  if (name == "lr-single") return ModelKind::LrSingle;
  throw config_error("unknown model kind '" + name + "'");
}

namespace {

Vec clamp_logits(const Vec& raw) {
  Vec z = raw;
  for (double& v : z) v = std::clamp(v, -kLogitClamp, kLogitClamp);
  return z;
}

Vec probs_from_logits(const Vec& logits) {
  Vec p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

// gradient gate of the clamp
Vec gate_dlogits(const Vec& raw, const Vec& dlogits) {
  Vec d = dlogits;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] <= -kLogitClamp || raw[i] >= kLogitClamp) d[i] = 0.0;
  }
  return d;
}

Matrix column_matrix(const Vec& v) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

Vec mask_product_except(const std::vector<Vec>& masks, std::size_t upto, std::size_t skip,
                        std::size_t dim) {
  Vec prod(dim, 1.0);
  for (std::size_t j = 0; j < upto; ++j) {
    if (j == skip) continue;
    for (std::size_t t = 0; t < dim; ++t) prod[t] *= masks[j][t];
  }
  return prod;
}

}  // namespace

RelandModel::RelandModel(const RelandConfig& c, std::uint64_t seed) : cfg(c) {
  if (cfg.dim == 0 || cfg.steps == 0 || cfg.latent == 0) {
    throw config_error("reland config requires positive dim, steps, latent");
  }
  if (cfg.gamma < -1.0 || cfg.gamma > 1.0) throw config_error("gamma must lie in [-1, 1]");
  std::mt19937_64 rng(seed);
  mask_fc = DenseLayer(cfg.dim, cfg.dim);
  mask_fc.init_glorot(rng);
  mask_bn = BatchNormLayer(cfg.dim);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    step_fc.emplace_back(cfg.latent, cfg.dim);
    step_fc.back().init_glorot(rng);
    step_bn.emplace_back(cfg.latent);
  }
  agg = DenseLayer(1, cfg.latent);
  agg.init_glorot(rng);
}

RelandForwardCache RelandModel::forward(const Matrix& x, bool training) {
  if (x.cols != cfg.dim) throw dimension_error("reland_forward input dim mismatch");
  if (training && x.rows < 2) throw domain_error("reland train mode needs batch size >= 2");
  RelandForwardCache c;
  c.training = training;
  c.x = x;
  const std::size_t n = x.rows;
  const std::size_t d = cfg.dim;

  // m_1: batch mean of SM(BN(W0 x)) in training, frozen mask in inference.
  Vec m1(d, 0.0);
  if (training) {
    c.mask_pre = mask_fc.forward(x);
    Matrix bn_out = mask_bn.forward(c.mask_pre, true);
    c.sample_masks.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      Vec row(bn_out.row(k), bn_out.row(k) + d);
      Vec sm = sparsemax(row);
      for (std::size_t t = 0; t < d; ++t) m1[t] += sm[t];
      c.sample_masks.push_back(std::move(sm));
    }
    for (double& v : m1) v /= static_cast<double>(n);
  } else {
    if (!frozen_mask) throw state_error("inference requires a frozen mask; call finalize_mask");
    m1 = *frozen_mask;
  }
  c.masks.push_back(m1);
  for (std::size_t s = 1; s < cfg.steps; ++s) {
    Vec prod(d, 1.0);
    for (std::size_t j = 0; j < s; ++j) {
      for (std::size_t t = 0; t < d; ++t) prod[t] *= c.masks[j][t];
    }
    for (double& v : prod) v *= cfg.gamma;
    c.masks.push_back(sparsemax(prod));
  }

  c.total = Matrix(n, cfg.latent);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    Matrix in(n, d);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t t = 0; t < d; ++t) in(k, t) = c.masks[s][t] * x(k, t);
    }
    Matrix pre = step_fc[s].forward(in);
    Matrix bn = step_bn[s].forward(pre, training);
    Matrix act = relu_forward(bn);
    for (std::size_t i = 0; i < c.total.data.size(); ++i) c.total.data[i] += act.data[i];
    c.step_in.push_back(std::move(in));
    c.step_pre.push_back(std::move(pre));
    c.step_bn.push_back(std::move(bn));
    c.step_act.push_back(std::move(act));
  }

  Matrix logit_col = agg.forward(c.total);
  c.raw_logits.resize(n);
  for (std::size_t k = 0; k < n; ++k) c.raw_logits[k] = logit_col(k, 0);
  c.logits = clamp_logits(c.raw_logits);
  c.probs = probs_from_logits(c.logits);
  return c;
}

void RelandModel::backward(const RelandForwardCache& c, const Vec& dlogits) {
  if (!c.training) throw state_error("reland backward requires a training-mode forward cache");
  if (dlogits.size() != c.x.rows) throw dimension_error("reland backward dlogits size mismatch");
  const std::size_t n = c.x.rows;
  const std::size_t d = cfg.dim;

  Vec dz = gate_dlogits(c.raw_logits, dlogits);
  Matrix dtotal = agg.backward(c.total, column_matrix(dz));

  std::vector<Vec> dmask(cfg.steps, Vec(d, 0.0));
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    Matrix dbn = relu_backward(c.step_bn[s], dtotal);
    Matrix dpre = step_bn[s].backward(c.step_pre[s], dbn);
    Matrix din = step_fc[s].backward(c.step_in[s], dpre);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t t = 0; t < d; ++t) dmask[s][t] += din(k, t) * c.x(k, t);
    }
  }

  // Walk the mask recursion backwards: m_s = SM(gamma * prod_{j<s} m_j).
  for (std::size_t s = cfg.steps; s-- > 1;) {
    Vec dprod = sparsemax_backward(c.masks[s], dmask[s]);
    for (double& v : dprod) v *= cfg.gamma;
    for (std::size_t j = 0; j < s; ++j) {
      Vec rest = mask_product_except(c.masks, s, j, d);
      for (std::size_t t = 0; t < d; ++t) dmask[j][t] += dprod[t] * rest[t];
    }
  }

  // m_1 is the batch mean of per-sample sparsemax outputs.
  Matrix du(n, d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    Vec dk = sparsemax_backward(c.sample_masks[k], dmask[0]);
    for (std::size_t t = 0; t < d; ++t) du(k, t) = dk[t] * inv_n;
  }
  Matrix dpre0 = mask_bn.backward(c.mask_pre, du);
  mask_fc.backward(c.x, dpre0);
}

void RelandModel::zero_grad() {
  mask_fc.zero_grad();
  mask_bn.zero_grad();
  for (auto& l : step_fc) l.zero_grad();
  for (auto& l : step_bn) l.zero_grad();
  agg.zero_grad();
}

void RelandModel::visit(const std::function<void(double&, double&)>& fn) {
  mask_fc.visit(fn);
  mask_bn.visit(fn);
  for (std::size_t s = 0; s < step_fc.size(); ++s) {
    step_fc[s].visit(fn);
    step_bn[s].visit(fn);
  }
  agg.visit(fn);
}

MlpModel::MlpModel(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  l1 = DenseLayer(hidden, dim);
  l1.init_glorot(rng);
  l2 = DenseLayer(hidden, hidden);
  l2.init_glorot(rng);
  out = DenseLayer(1, hidden);
  out.init_glorot(rng);
}

MlpForwardCache MlpModel::forward(const Matrix& x) {
  MlpForwardCache c;
  c.x = x;
  c.h1_pre = l1.forward(x);
  c.h1 = relu_forward(c.h1_pre);
  c.h2_pre = l2.forward(c.h1);
  c.h2 = relu_forward(c.h2_pre);
  Matrix logit_col = out.forward(c.h2);
  c.raw_logits.resize(x.rows);
  for (std::size_t k = 0; k < x.rows; ++k) c.raw_logits[k] = logit_col(k, 0);
  c.logits = clamp_logits(c.raw_logits);
  c.probs = probs_from_logits(c.logits);
  return c;
}

void MlpModel::backward(const MlpForwardCache& c, const Vec& dlogits) {
  Vec dz = gate_dlogits(c.raw_logits, dlogits);
  Matrix dh2 = out.backward(c.h2, column_matrix(dz));
  Matrix dh2_pre = relu_backward(c.h2_pre, dh2);
  Matrix dh1 = l2.backward(c.h1, dh2_pre);
  Matrix dh1_pre = relu_backward(c.h1_pre, dh1);
  l1.backward(c.x, dh1_pre);
}

void MlpModel::zero_grad() {
  l1.zero_grad();
  l2.zero_grad();
  out.zero_grad();
}

void MlpModel::visit(const std::function<void(double&, double&)>& fn) {
  l1.visit(fn);
  l2.visit(fn);
  out.visit(fn);
}

LrModel::LrModel(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  fc = DenseLayer(1, dim);
  fc.init_glorot(rng);
}

LrForwardCache LrModel::forward(const Matrix& x) {
  LrForwardCache c;
  c.x = x;
  Matrix logit_col = fc.forward(x);
  c.raw_logits.resize(x.rows);
  for (std::size_t k = 0; k < x.rows; ++k) c.raw_logits[k] = logit_col(k, 0);
  c.logits = clamp_logits(c.raw_logits);
  c.probs = probs_from_logits(c.logits);
  return c;
}

void LrModel::backward(const LrForwardCache& c, const Vec& dlogits) {
  Vec dz = gate_dlogits(c.raw_logits, dlogits);
  fc.backward(c.x, column_matrix(dz));
}

void LrModel::zero_grad() { fc.zero_grad(); }

void LrModel::visit(const std::function<void(double&, double&)>& fn) { fc.visit(fn); }

Model Model::make(ModelKind kind, std::size_t dim, std::uint64_t seed,
                  const RelandConfig& reland_cfg, std::size_t mlp_hidden) {
  Model m;
  m.kind = kind;
  switch (kind) {
    case ModelKind::Reland: {
      RelandConfig c = reland_cfg;
      c.dim = dim;
      m.reland = RelandModel(c, seed);
      break;
    }
    case ModelKind::Mlp:
      m.mlp = MlpModel(dim, mlp_hidden, seed);
      break;
    case ModelKind::Lr:
      m.lr = LrModel(dim, seed);
      break;
    case ModelKind::LrSingle:
      m.lr = LrModel(1, seed);
      break;
  }
  return m;
}

Matrix Model::restrict_single(const Matrix& x) const {
  Matrix out(x.rows, 1);
  if (single_feature_index >= x.cols) throw dimension_error("single feature index out of range");
  for (std::size_t k = 0; k < x.rows; ++k) out(k, 0) = x(k, single_feature_index);
  return out;
}

std::pair<Vec, Vec> Model::forward(const Matrix& x, bool training) {
  switch (kind) {
    case ModelKind::Reland:
      reland_cache_ = reland->forward(x, training);
      return {reland_cache_->probs, reland_cache_->logits};
    case ModelKind::Mlp:
      mlp_cache_ = mlp->forward(x);
      return {mlp_cache_->probs, mlp_cache_->logits};
    case ModelKind::Lr:
      lr_cache_ = lr->forward(x);
      return {lr_cache_->probs, lr_cache_->logits};
    case ModelKind::LrSingle:
      lr_cache_ = lr->forward(restrict_single(x));
      return {lr_cache_->probs, lr_cache_->logits};
  }
  throw state_error("unknown model kind");
}

void Model::backward(const Vec& dlogits) {
  switch (kind) {
    case ModelKind::Reland:
      if (!reland_cache_) throw state_error("backward without forward");
      reland->backward(*reland_cache_, dlogits);
      return;
    case ModelKind::Mlp:
      if (!mlp_cache_) throw state_error("backward without forward");
      mlp->backward(*mlp_cache_, dlogits);
      return;
    case ModelKind::Lr:
    case ModelKind::LrSingle:
      if (!lr_cache_) throw state_error("backward without forward");
      lr->backward(*lr_cache_, dlogits);
      return;
  }
}

void Model::zero_grad() {
  if (reland) reland->zero_grad();
  if (mlp) mlp->zero_grad();
  if (lr) lr->zero_grad();
}

void Model::visit(const std::function<void(double&, double&)>& fn) {
  if (kind == ModelKind::Reland) {
    reland->visit(fn);
  } else if (kind == ModelKind::Mlp) {
    mlp->visit(fn);
  } else {
    lr->visit(fn);
  }
}

std::size_t Model::param_count() {
  std::size_t n = 0;
  visit([&n](double&, double&) { ++n; });
  return n;
}

Vec finalize_mask(RelandModel& model, const Matrix& train_x) {
  if (train_x.rows == 0) throw domain_error("finalize_mask on empty dataset");
  Matrix pre = model.mask_fc.forward(train_x);
  Matrix bn_out = model.mask_bn.forward(pre, false);
  Vec m1(model.cfg.dim, 0.0);
  for (std::size_t k = 0; k < train_x.rows; ++k) {
    Vec row(bn_out.row(k), bn_out.row(k) + model.cfg.dim);
    Vec sm = sparsemax(row);
    for (std::size_t t = 0; t < model.cfg.dim; ++t) m1[t] += sm[t];
  }
  for (double& v : m1) v /= static_cast<double>(train_x.rows);
  model.frozen_mask = m1;
  return m1;
}

ImportanceReport feature_importance(RelandModel& model, const Matrix& train_x, bool per_sample) {
  if (!model.frozen_mask) throw state_error("feature_importance requires a finalized model");
  RelandForwardCache c = model.forward(train_x, false);
  const std::size_t n = train_x.rows;
  const std::size_t d = model.cfg.dim;
  const std::size_t steps = model.cfg.steps;

  ImportanceReport rep;
  rep.masks = c.masks;
  rep.step_weights.assign(steps, 0.0);
  rep.importance.assign(d, 0.0);

  if (per_sample) {
    std::size_t used = 0;
    for (std::size_t k = 0; k < n; ++k) {
      Vec eta(steps, 0.0);
      double denom = 0.0;
      for (std::size_t s = 0; s < steps; ++s) {
        for (std::size_t l = 0; l < model.cfg.latent; ++l) eta[s] += c.step_act[s](k, l);
        denom += eta[s];  // masks each sum to 1
      }
      if (denom <= 0.0) continue;
      ++used;
      for (std::size_t j = 0; j < d; ++j) {
        double num = 0.0;
        for (std::size_t s = 0; s < steps; ++s) num += eta[s] * c.masks[s][j];
        rep.importance[j] += num / denom;
      }
    }
    if (used == 0) throw domain_error("degenerate model: all step outputs are zero");
    for (double& v : rep.importance) v /= static_cast<double>(used);
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < model.cfg.latent; ++l) rep.step_weights[s] += c.step_act[s](k, l);
      }
      rep.step_weights[s] /= static_cast<double>(n);
    }
    return rep;
  }

  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = 0; l < model.cfg.latent; ++l) rep.step_weights[s] += c.step_act[s](k, l);
    }
    rep.step_weights[s] /= static_cast<double>(n);
  }
  double denom = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t j = 0; j < d; ++j) denom += rep.step_weights[s] * c.masks[s][j];
  }
  if (denom <= 0.0) throw domain_error("degenerate model: all step outputs are zero");
  for (std::size_t j = 0; j < d; ++j) {
    double num = 0.0;
    for (std::size_t s = 0; s < steps; ++s) num += rep.step_weights[s] * c.masks[s][j];
    rep.importance[j] = num / denom;
  }
  return rep;
}

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  s.mean.assign(x.cols, 0.0);
  s.stddev.assign(x.cols, 1.0);
  if (x.rows == 0) return s;
  for (std::size_t c = 0; c < x.cols; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) m += x(r, c);
    m /= static_cast<double>(x.rows);
    double v = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) v += (x(r, c) - m) * (x(r, c) - m);
    v /= static_cast<double>(x.rows);
    s.mean[c] = m;
    s.stddev[c] = v > 0.0 ? std::sqrt(v) : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t dim) {
  Standardizer s;
  s.mean.assign(dim, 0.0);
  s.stddev.assign(dim, 1.0);
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols != mean.size()) throw dimension_error("standardizer dim mismatch");
  Matrix y = x;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) y(r, c) = (x(r, c) - mean[c]) / stddev[c];
  }
  return y;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json j;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  j["data"] = m.data;
  return j;
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data = j.at("data").get<Vec>();
  if (m.data.size() != m.rows * m.cols) throw parse_error("checkpoint matrix size mismatch");
  return m;
}

json dense_to_json(const DenseLayer& l) {
  json j;
  j["weights"] = matrix_to_json(l.weights);
  j["bias"] = l.bias;
  return j;
}

DenseLayer dense_from_json(const json& j) {
  Matrix w = matrix_from_json(j.at("weights"));
  DenseLayer l(w.rows, w.cols);
  l.weights = std::move(w);
  l.bias = j.at("bias").get<Vec>();
  return l;
}

json bn_to_json(const BatchNormLayer& l) {
  json j;
  j["scale"] = l.scale;
  j["shift"] = l.shift;
  j["running_mean"] = l.running_mean;
  j["running_var"] = l.running_var;
  j["momentum"] = l.momentum;
  j["epsilon"] = l.epsilon;
  return j;
}

BatchNormLayer bn_from_json(const json& j) {
  Vec scale = j.at("scale").get<Vec>();
  BatchNormLayer l(scale.size());
  l.scale = std::move(scale);
  l.shift = j.at("shift").get<Vec>();
  l.running_mean = j.at("running_mean").get<Vec>();
  l.running_var = j.at("running_var").get<Vec>();
  l.momentum = j.at("momentum").get<double>();
  l.epsilon = j.at("epsilon").get<double>();
  return l;
}

}  // namespace

std::string Checkpoint::to_json() const {
  json j;
  j["format_version"] = format_version;
  j["model_kind"] = model_kind_name(model.kind);
  j["feature_names"] = feature_names;
  j["single_feature"] = single_feature;
  j["standardization"]["mean"] = standardizer.mean;
  j["standardization"]["std"] = standardizer.stddev;
  j["best_epoch"] = best_epoch;
  j["best_val_roc"] = best_val_roc;

  json params;
  if (model.kind == ModelKind::Reland) {
    const RelandModel& rm = *model.reland;
    j["config"] = {{"dim", rm.cfg.dim},
                   {"steps", rm.cfg.steps},
                   {"latent", rm.cfg.latent},
                   {"gamma", rm.cfg.gamma}};
    params["mask_fc"] = dense_to_json(rm.mask_fc);
    params["mask_bn"] = bn_to_json(rm.mask_bn);
    for (std::size_t s = 0; s < rm.cfg.steps; ++s) {
      params["step_fc_" + std::to_string(s)] = dense_to_json(rm.step_fc[s]);
      params["step_bn_" + std::to_string(s)] = bn_to_json(rm.step_bn[s]);
    }
    params["agg"] = dense_to_json(rm.agg);
    if (rm.frozen_mask) {
      j["frozen_mask"] = *rm.frozen_mask;
    } else {
      j["frozen_mask"] = nullptr;
    }
  } else if (model.kind == ModelKind::Mlp) {
    const MlpModel& mm = *model.mlp;
    j["config"] = {{"dim", mm.l1.weights.cols}, {"hidden", mm.l1.weights.rows}};
    params["l1"] = dense_to_json(mm.l1);
    params["l2"] = dense_to_json(mm.l2);
    params["out"] = dense_to_json(mm.out);
    j["frozen_mask"] = nullptr;
  } else {
    const LrModel& lm = *model.lr;
    j["config"] = {{"dim", lm.fc.weights.cols}};
    params["fc"] = dense_to_json(lm.fc);
    j["frozen_mask"] = nullptr;
  }
  j["params"] = params;
  return j.dump(2);
}

Checkpoint Checkpoint::from_json(const std::string& text) {
  json j = json::parse(text);
  Checkpoint c;
  c.format_version = j.at("format_version").get<int>();
  if (c.format_version != 1) throw parse_error("unsupported checkpoint format version");
  c.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  c.single_feature = j.at("single_feature").get<std::string>();
  c.standardizer.mean = j.at("standardization").at("mean").get<Vec>();
  c.standardizer.stddev = j.at("standardization").at("std").get<Vec>();
  c.best_epoch = j.at("best_epoch").get<std::size_t>();
  c.best_val_roc = j.at("best_val_roc").get<double>();

  const std::string kind = j.at("model_kind").get<std::string>();
  c.model.kind = model_kind_from_name(kind);
  const json& params = j.at("params");
  if (c.model.kind == ModelKind::Reland) {
    RelandModel rm;
    rm.cfg.dim = j.at("config").at("dim").get<std::size_t>();
    rm.cfg.steps = j.at("config").at("steps").get<std::size_t>();
    rm.cfg.latent = j.at("config").at("latent").get<std::size_t>();
    rm.cfg.gamma = j.at("config").at("gamma").get<double>();
    rm.mask_fc = dense_from_json(params.at("mask_fc"));
    rm.mask_bn = bn_from_json(params.at("mask_bn"));
    for (std::size_t s = 0; s < rm.cfg.steps; ++s) {
      rm.step_fc.push_back(dense_from_json(params.at("step_fc_" + std::to_string(s))));
      rm.step_bn.push_back(bn_from_json(params.at("step_bn_" + std::to_string(s))));
    }
    rm.agg = dense_from_json(params.at("agg"));
    if (!j.at("frozen_mask").is_null()) rm.frozen_mask = j.at("frozen_mask").get<Vec>();
    c.model.reland = std::move(rm);
  } else if (c.model.kind == ModelKind::Mlp) {
    MlpModel mm;
    mm.l1 = dense_from_json(params.at("l1"));
    mm.l2 = dense_from_json(params.at("l2"));
    mm.out = dense_from_json(params.at("out"));
    c.model.mlp = std::move(mm);
  } else {
    LrModel lm;
    lm.fc = dense_from_json(params.at("fc"));
    c.model.lr = std::move(lm);
    if (c.model.kind == ModelKind::LrSingle) {
      auto it = std::find(c.feature_names.begin(), c.feature_names.end(), c.single_feature);
      if (it == c.feature_names.end()) throw parse_error("lr-single checkpoint missing feature");
      c.model.single_feature_index =
          static_cast<std::size_t>(it - c.feature_names.begin());
    }
  }
  return c;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << to_json() << '\n';
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

Matrix design_matrix(const Dataset& ds, const std::vector<std::string>& feature_names) {
  if (ds.feature_names != feature_names) {
    throw schema_error("dataset feature names do not match expected feature order");
  }
  Matrix x(ds.size(), feature_names.size());
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < feature_names.size(); ++c) x(r, c) = ds.cells[r].features[c];
  }
  return x;
}

std::vector<int> label_vector(const Dataset& ds) {
  std::vector<int> y;
  y.reserve(ds.size());
  for (const Cell& c : ds.cells) y.push_back(c.label);
  return y;
}

Vec score_matrix(const Checkpoint& ckpt, const Matrix& raw_x) {
  Matrix x = ckpt.standardizer.apply(raw_x);
  Model m = ckpt.model;  // copy: scoring must not mutate the checkpoint
  auto [probs, logits] = m.forward(x, false);
  (void)logits;
  return probs;
}

Vec score(const Checkpoint& ckpt, const Dataset& ds) {
  return score_matrix(ckpt, design_matrix(ds, ckpt.feature_names));
}

}  // namespace reland
