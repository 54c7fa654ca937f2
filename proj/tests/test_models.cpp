#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "reland/errors.hpp"
#include "reland/losses.hpp"
#include "reland/models.hpp"

using namespace reland;

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Matrix m(r, c);
  for (double& x : m.data) x = u(rng);
  return m;
}

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng() % 2);
  return y;
}

// Flattened view of all model parameters for finite-difference probing.
Vec flat_params(Model& m) {
  Vec out;
  m.visit([&](double& p, double&) { out.push_back(p); });
  return out;
}

void set_flat_params(Model& m, const Vec& v) {
  std::size_t i = 0;
  m.visit([&](double& p, double&) { p = v[i++]; });
}

Vec flat_grads(Model& m) {
  Vec out;
  m.visit([&](double&, double& g) { out.push_back(g); });
  return out;
}

// Checks every parameter gradient of `loss` against central differences.
void check_model_gradients(Model& model, const Matrix& x,
                           const std::function<double(const Vec&, const Vec&)>& loss_of,
                           const std::function<Vec(const Vec&, const Vec&)>& dlogits_of,
                           double tol = 1e-4) {
  auto [probs, logits] = model.forward(x, true);
  model.zero_grad();
  model.backward(dlogits_of(probs, logits));
  const Vec analytic = flat_grads(model);
  const Vec theta = flat_params(model);
  const double h = 1e-5;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    Vec tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    set_flat_params(model, tp);
    auto [pp, lp] = model.forward(x, true);
    const double fp = loss_of(pp, lp);
    set_flat_params(model, tm);
    auto [pm, lm] = model.forward(x, true);
    const double fm = loss_of(pm, lm);
    const double fd = (fp - fm) / (2.0 * h);
    CHECK(oracles::rel_error(analytic[i], fd, 1e-5) < tol);
  }
  set_flat_params(model, theta);
}

Vec ce_dlogits(const Vec& probs, const std::vector<int>& labels) {
  Vec d(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    d[i] = (probs[i] - labels[i]) / static_cast<double>(probs.size());
  }
  return d;
}

}  // namespace

TEST_CASE("reland S=1 base case: masked single-step forward") {
  std::mt19937_64 rng(51);
  RelandConfig cfg;
  cfg.dim = 4;
  cfg.steps = 1;
  cfg.latent = 3;
  RelandModel m(cfg, 7);
  Matrix x = random_matrix(rng, 5, 4);
  RelandForwardCache cache = m.forward(x, true);
  REQUIRE(cache.masks.size() == 1);
  const Vec& m1 = cache.masks[0];
  CHECK(std::accumulate(m1.begin(), m1.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  // Recompute the decision path by hand from the cached mask.
  Matrix masked(5, 4);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 4; ++c) masked(r, c) = m1[c] * x(r, c);
  }
  RelandModel copy = m;
  Matrix pre = copy.step_fc[0].forward(masked);
  CHECK(pre.data.size() == cache.step_pre[0].data.size());
  for (std::size_t i = 0; i < pre.data.size(); ++i) {
    CHECK(pre.data[i] == doctest::Approx(cache.step_pre[0].data[i]).epsilon(1e-12));
  }
}

TEST_CASE("reland gamma=-1 mask recursion avoids used features") {
  // m_1 = [1,0,0] -> m_2 = SM([-1,0,0]) = [0, 0.5, 0.5].
  Vec m2 = sparsemax({-1.0, 0.0, 0.0});
  CHECK(m2[0] == 0.0);
  CHECK(m2[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m2[2] == doctest::Approx(0.5).epsilon(1e-12));

  std::mt19937_64 rng(52);
  RelandConfig cfg;
  cfg.dim = 6;
  cfg.steps = 2;
  cfg.gamma = -1.0;
  RelandModel m(cfg, 3);
  Matrix x = random_matrix(rng, 8, 6);
  RelandForwardCache cache = m.forward(x, true);
  // Whenever m_1 is single-support, m_2's support must be disjoint.
  const Vec& m1 = cache.masks[0];
  std::size_t support1 = 0;
  for (double v : m1) support1 += (v > 0);
  if (support1 == 1) {
    for (std::size_t j = 0; j < 6; ++j) {
      if (m1[j] > 0) CHECK(cache.masks[1][j] == 0.0);
    }
  }
  for (const Vec& mask : cache.masks) {
    CHECK(std::accumulate(mask.begin(), mask.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : mask) CHECK(v >= 0.0);
  }
}

TEST_CASE("reland full-model gradients match finite differences") {
  std::mt19937_64 rng(53);
  for (std::size_t steps : {1, 2, 3}) {
    RelandConfig rc;
    rc.dim = 10;
    rc.steps = steps;
    rc.latent = 4;
    Model model = Model::make(ModelKind::Reland, 10, 900 + steps, rc);
    Matrix x = random_matrix(rng, 16, 10);
    std::vector<int> y = random_labels(rng, 16);
    check_model_gradients(
        model, x, [&](const Vec& probs, const Vec&) { return cross_entropy(probs, y); },
        [&](const Vec& probs, const Vec&) { return ce_dlogits(probs, y); });
  }
}

TEST_CASE("reland ERM+IRM composite gradients match finite differences") {
  std::mt19937_64 rng(54);
  RelandConfig rc;
  rc.dim = 6;
  rc.steps = 2;
  rc.latent = 3;
  Matrix x = random_matrix(rng, 12, 6);
  std::vector<int> y = random_labels(rng, 12);
  std::vector<EnvironmentTag> tags(12);
  for (auto& t : tags) t = (rng() % 2) ? EnvironmentTag::Hard : EnvironmentTag::Easy;
  tags[0] = EnvironmentTag::Hard;
  tags[1] = EnvironmentTag::Easy;
  for (double lambda : {0.1, 1.0, 10.0}) {
    Model model = Model::make(ModelKind::Reland, 6, 77, rc);
    IrmConfig irm;
    irm.lambda = lambda;
    check_model_gradients(
        model, x,
        [&](const Vec& probs, const Vec& logits) {
          return cross_entropy(probs, y) + irm_microbatch_penalty(logits, y, tags, irm);
        },
        [&](const Vec& probs, const Vec& logits) {
          Vec d = ce_dlogits(probs, y);
          ScalarWithGrad pen = irm_microbatch_penalty_with_grad(logits, y, tags, irm);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += pen.grad[i];
          return d;
        });
  }
}

TEST_CASE("reland pushed objective gradients match finite differences") {
  std::mt19937_64 rng(55);
  RelandConfig rc;
  rc.dim = 6;
  rc.steps = 2;
  rc.latent = 3;
  Matrix x = random_matrix(rng, 10, 6);
  std::vector<int> y = random_labels(rng, 10);
  y[0] = 1;
  y[1] = 0;
  for (double p : {2.0, 4.0}) {
    Model model = Model::make(ModelKind::Reland, 6, 88, rc);
    PushConfig push;
    push.p = p;
    push.lambda_p = 0.5;
    check_model_gradients(
        model, x,
        [&](const Vec& probs, const Vec&) { return pushed_objective(probs, y, push).value; },
        [&](const Vec& probs, const Vec&) {
          // Chain rule through the sigmoid: dL/dz = dL/dp * p(1-p).
          ScalarWithGrad sg = pushed_objective(probs, y, push);
          Vec d(probs.size());
          for (std::size_t i = 0; i < probs.size(); ++i) {
            d[i] = sg.grad[i] * probs[i] * (1.0 - probs[i]);
          }
          return d;
        });
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  std::mt19937_64 rng(56);
  RelandConfig rc;
  rc.dim = 5;
  rc.steps = 2;
  Model model = Model::make(ModelKind::Reland, 5, 5, rc);
  Matrix x = random_matrix(rng, 6, 5);
  model.forward(x, true);
  model.zero_grad();
  model.backward(Vec(6, 0.0));
  for (double g : flat_grads(model)) CHECK(g == 0.0);
}

TEST_CASE("inference without a frozen mask is a state error") {
  RelandConfig rc;
  rc.dim = 3;
  RelandModel m(rc, 1);
  Matrix x(2, 3);
  CHECK_THROWS_AS(m.forward(x, false), Error);
}

TEST_CASE("finalize_mask single-sample and mean semantics") {
  std::mt19937_64 rng(57);
  RelandConfig rc;
  rc.dim = 4;
  RelandModel m(rc, 9);
  Matrix warm = random_matrix(rng, 10, 4);
  m.forward(warm, true);  // populate BN running stats

  Matrix one = random_matrix(rng, 1, 4);
  Vec frozen1 = finalize_mask(m, one);
  // Hand evaluation: SM(BN_infer(W0 x)) for the single sample.
  RelandModel copy = m;
  Matrix pre = copy.mask_fc.forward(one);
  Matrix bn = copy.mask_bn.forward(pre, false);
  Vec sm = sparsemax(Vec(bn.data.begin(), bn.data.end()));
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(frozen1[j] == doctest::Approx(sm[j]).epsilon(1e-12));
  }

  // Two samples: elementwise mean of the per-sample SM outputs.
  Matrix two = random_matrix(rng, 2, 4);
  Vec frozen2 = finalize_mask(m, two);
  RelandModel copy2 = m;
  Matrix pre2 = copy2.mask_fc.forward(two);
  Matrix bn2 = copy2.mask_bn.forward(pre2, false);
  Vec sma = sparsemax(Vec(bn2.row(0), bn2.row(0) + 4));
  Vec smb = sparsemax(Vec(bn2.row(1), bn2.row(1) + 4));
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(frozen2[j] == doctest::Approx(0.5 * (sma[j] + smb[j])).epsilon(1e-12));
  }
  CHECK(std::accumulate(frozen2.begin(), frozen2.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-9));

  Matrix empty(0, 4);
  CHECK_THROWS_AS(finalize_mask(m, empty), Error);
}

TEST_CASE("frozen-mask inference is batch-size invariant") {
  std::mt19937_64 rng(58);
  RelandConfig rc;
  rc.dim = 5;
  rc.steps = 2;
  RelandModel m(rc, 11);
  Matrix warm = random_matrix(rng, 12, 5);
  m.forward(warm, true);
  m.frozen_mask = finalize_mask(m, warm);
  Matrix x = random_matrix(rng, 7, 5);
  RelandForwardCache full = m.forward(x, false);
  for (std::size_t r = 0; r < 7; ++r) {
    Matrix one(1, 5);
    for (std::size_t c = 0; c < 5; ++c) one(0, c) = x(r, c);
    RelandForwardCache single = m.forward(one, false);
    CHECK(std::abs(single.probs[0] - full.probs[r]) < 1e-12);
  }
}

TEST_CASE("feature_importance S=1 equals the frozen mask") {
  std::mt19937_64 rng(59);
  RelandConfig rc;
  rc.dim = 4;
  rc.steps = 1;
  RelandModel m(rc, 13);
  Matrix x = random_matrix(rng, 10, 4);
  m.forward(x, true);
  m.frozen_mask = finalize_mask(m, x);
  ImportanceReport rep = feature_importance(m, x);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(rep.importance[j] == doctest::Approx((*m.frozen_mask)[j]).epsilon(1e-12));
  }
}

TEST_CASE("feature_importance invariants on random models") {
  std::mt19937_64 rng(60);
  for (int t = 0; t < 5; ++t) {
    RelandConfig rc;
    rc.dim = 6;
    rc.steps = 2 + t % 2;
    RelandModel m(rc, 100 + t);
    Matrix x = random_matrix(rng, 20, 6);
    m.forward(x, true);
    m.frozen_mask = finalize_mask(m, x);
    for (bool per_sample : {false, true}) {
      ImportanceReport rep = feature_importance(m, x, per_sample);
      double sum = std::accumulate(rep.importance.begin(), rep.importance.end(), 0.0);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      for (double v : rep.importance) CHECK(v >= 0.0);
      CHECK(rep.masks.size() == rc.steps);
      CHECK(rep.step_weights.size() == rc.steps);
    }
  }
}

TEST_CASE("feature_importance hand-computed two-step formula") {
  // eta=(2,1), m_1=[1,0], m_2=[0,1] -> importance = [2/3, 1/3].
  const double eta[] = {2.0, 1.0};
  const double masks[2][2] = {{1.0, 0.0}, {0.0, 1.0}};
  double num[2] = {0, 0}, denom = 0;
  for (int s = 0; s < 2; ++s) {
    for (int j = 0; j < 2; ++j) {
      num[j] += eta[s] * masks[s][j];
      denom += eta[s] * masks[s][j];
    }
  }
  CHECK(num[0] / denom == doctest::Approx(2.0 / 3.0));
  CHECK(num[1] / denom == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("MLP and LR gradients match finite differences") {
  std::mt19937_64 rng(61);
  Matrix x = random_matrix(rng, 9, 5);
  std::vector<int> y = random_labels(rng, 9);
  for (ModelKind kind : {ModelKind::Mlp, ModelKind::Lr}) {
    Model model = Model::make(kind, 5, 3, RelandConfig{}, 6);
    check_model_gradients(
        model, x, [&](const Vec& probs, const Vec&) { return cross_entropy(probs, y); },
        [&](const Vec& probs, const Vec&) { return ce_dlogits(probs, y); }, 1e-5);
  }
}

TEST_CASE("LR with zero weights outputs 0.5 everywhere") {
  Model model = Model::make(ModelKind::Lr, 3, 1, RelandConfig{});
  model.visit([](double& p, double&) { p = 0.0; });
  Matrix x(4, 3, 2.0);
  auto [probs, logits] = model.forward(x, false);
  (void)logits;
  for (double p : probs) CHECK(p == 0.5);
}

TEST_CASE("standardizer maps zero-variance columns to stddev 1") {
  Matrix x(3, 2);
  x(0, 0) = 5.0;
  x(1, 0) = 5.0;
  x(2, 0) = 5.0;
  x(0, 1) = 1.0;
  x(1, 1) = 2.0;
  x(2, 1) = 3.0;
  Standardizer st = Standardizer::fit(x);
  CHECK(st.stddev[0] == 1.0);
  Matrix z = st.apply(x);
  CHECK(z(0, 0) == 0.0);
  CHECK(z(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("checkpoint JSON round-trip is byte-stable and score-exact") {
  std::mt19937_64 rng(62);
  RelandConfig rc;
  rc.dim = 5;
  rc.steps = 2;
  Checkpoint ckpt;
  ckpt.model = Model::make(ModelKind::Reland, 5, 21, rc);
  Matrix warm = random_matrix(rng, 15, 5);
  ckpt.model.reland->forward(warm, true);
  ckpt.model.reland->frozen_mask = finalize_mask(*ckpt.model.reland, warm);
  ckpt.feature_names = {"a", "b", "c", "d", "e"};
  ckpt.standardizer = Standardizer::fit(warm);

  const std::string j1 = ckpt.to_json();
  Checkpoint back = Checkpoint::from_json(j1);
  CHECK(back.to_json() == j1);

  Matrix x = random_matrix(rng, 8, 5);
  Vec s1 = score_matrix(ckpt, x);
  Vec s2 = score_matrix(back, x);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(std::abs(s1[i] - s2[i]) < 1e-12);
}

TEST_CASE("checkpoint round-trips for every model kind") {
  std::mt19937_64 rng(63);
  Matrix warm = random_matrix(rng, 10, 3);
  for (ModelKind kind : {ModelKind::Mlp, ModelKind::Lr, ModelKind::LrSingle}) {
    Checkpoint ckpt;
    ckpt.model = Model::make(kind, 3, 2, RelandConfig{}, 4);
    ckpt.feature_names = {"x", "y", "z"};
    if (kind == ModelKind::LrSingle) {
      ckpt.single_feature = "y";
      ckpt.model.single_feature_index = 1;
    }
    ckpt.standardizer = Standardizer::fit(warm);
    Checkpoint back = Checkpoint::from_json(ckpt.to_json());
    CHECK(back.to_json() == ckpt.to_json());
    Matrix x = random_matrix(rng, 5, 3);
    Vec s1 = score_matrix(ckpt, x);
    Vec s2 = score_matrix(back, x);
    for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);
  }
}

TEST_CASE("design_matrix requires matching feature names") {
  Dataset ds;
  ds.feature_names = {"a", "b"};
  ds.env_feature = "a";
  Cell c;
  c.cell_id = "c0";
  c.features = {1.0, 2.0};
  ds.cells.push_back(c);
  Matrix x = design_matrix(ds, {"a", "b"});
  CHECK(x(0, 1) == 2.0);
  CHECK_THROWS_AS(design_matrix(ds, {"a", "zzz"}), Error);
}

TEST_CASE("logits are clamped to +-30") {
  Model model = Model::make(ModelKind::Lr, 1, 1, RelandConfig{});
  model.visit([](double& p, double&) { p = 100.0; });
  Matrix x(2, 1);
  x(0, 0) = 10.0;
  x(1, 0) = -10.0;
  auto [probs, logits] = model.forward(x, false);
  CHECK(logits[0] == 30.0);
  CHECK(logits[1] == -30.0);
  CHECK(probs[0] == doctest::Approx(1.0 / (1.0 + std::exp(-30.0))).epsilon(1e-15));
}
