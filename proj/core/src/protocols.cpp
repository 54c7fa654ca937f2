#include "reland/protocols.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "reland/errors.hpp"

namespace reland {

using nlohmann::json;

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::Erm: return "erm";
    case Objective::Irm: return "irm";
    case Objective::Pushed: return "pushed";
    case Objective::IrmPushed: return "irm-pushed";
  }
  throw state_error("unknown objective");
}

Objective objective_from_name(const std::string& name) {
  if (name == "erm") return Objective::Erm;
  if (name == "irm") return Objective::Irm;
  if (name == "pushed") return Objective::Pushed;
  if (name == "irm-pushed") return Objective::IrmPushed;
  throw config_error("unknown objective '" + name + "'");
}

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::BlockCV: return "blockcv";
    case Protocol::BlockV: return "blockv";
    case Protocol::TransferCV: return "transfercv";
  }
  throw state_error("unknown protocol");
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.feature_names = ds.feature_names;
  out.env_feature = ds.env_feature;
  out.cells.reserve(indices.size());
  for (std::size_t i : indices) out.cells.push_back(ds.cells[i]);
  return out;
}

namespace {

bool has_both_classes(const Dataset& ds) {
  bool pos = false, neg = false;
  for (const Cell& c : ds.cells) {
    (c.label == 1 ? pos : neg) = true;
    if (pos && neg) return true;
  }
  return false;
}

std::vector<std::string> cell_ids(const Dataset& ds) {
  std::vector<std::string> ids;
  ids.reserve(ds.size());
  for (const Cell& c : ds.cells) ids.push_back(c.cell_id);
  return ids;
}

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), x.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = x(idx[r], c);
  }
  return out;
}

template <typename T>
std::vector<T> gather_vec(const std::vector<T>& src, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(src[i]);
  return out;
}

// One epoch-seeded shuffle; trailing singleton folded into the previous batch
// so BN always sees >= 2 samples.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint64_t>(0x9e3779b97f4a7c15ULL), seed,
                    static_cast<std::uint64_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    const std::size_t end = std::min(n, i + batch_size);
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

struct TrainInputs {
  Matrix x;  // standardized
  std::vector<int> y;
  std::vector<EnvironmentTag> tags;
};

Checkpoint train_impl(Model model, const Standardizer& standardizer, const Dataset& train_ds,
                      const TrainConfig& cfg, const Dataset& val_ds,
                      const std::string& single_feature) {
  if (!has_both_classes(train_ds)) throw domain_error("training set has a single class");
  if (!has_both_classes(val_ds)) throw domain_error("validation set has a single class");
  if (train_ds.feature_names != val_ds.feature_names) {
    throw schema_error("train and validation feature names differ");
  }

  TrainInputs in;
  in.x = standardizer.apply(design_matrix(train_ds, train_ds.feature_names));
  in.y = label_vector(train_ds);
  in.tags = tag_environments(train_ds).tags;

  Matrix val_x = standardizer.apply(design_matrix(val_ds, val_ds.feature_names));
  std::vector<int> val_y = label_vector(val_ds);

  AdamState adam(model.param_count());
  adam.base_lr = cfg.base_lr;
  adam.decay_factor = cfg.decay_factor;
  adam.decay_every = cfg.decay_every;
  adam.weight_decay = cfg.weight_decay;

  const bool use_irm = (cfg.objective == Objective::Irm || cfg.objective == Objective::IrmPushed) &&
                       cfg.irm.lambda > 0.0;
  const bool use_push =
      (cfg.objective == Objective::Pushed || cfg.objective == Objective::IrmPushed) &&
      cfg.push.lambda_p > 0.0;

  Checkpoint best;
  best.feature_names = train_ds.feature_names;
  best.standardizer = standardizer;
  best.single_feature = single_feature;
  double best_roc = -1.0;

  auto evaluate_epoch = [&](std::size_t epoch) {
    Model snapshot = model;
    if (snapshot.kind == ModelKind::Reland) finalize_mask(*snapshot.reland, in.x);
    auto [val_probs, val_logits] = snapshot.forward(val_x, false);
    (void)val_logits;
    const double roc = roc_auc(val_probs, val_y);
    if (roc > best_roc) {
      best_roc = roc;
      best.model = snapshot;
      best.best_epoch = epoch;
      best.best_val_roc = roc;
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = make_batches(in.x.rows, cfg.batch_size, cfg.seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      Matrix xb = gather_rows(in.x, idx);
      std::vector<int> yb = gather_vec(in.y, idx);
      auto [probs, logits] = model.forward(xb, true);

      const std::size_t nb = idx.size();
      const double inv_nb = 1.0 / static_cast<double>(nb);
      Vec dlogits(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        dlogits[i] = (probs[i] - static_cast<double>(yb[i])) * inv_nb;
      }
      if (use_irm) {
        std::vector<EnvironmentTag> tagsb = gather_vec(in.tags, idx);
        IrmConfig irm = cfg.irm;
        irm.batch_size = nb;
        ScalarWithGrad pen = irm_microbatch_penalty_with_grad(logits, yb, tagsb, irm);
        for (std::size_t i = 0; i < nb; ++i) dlogits[i] += pen.grad[i];
      }
      if (use_push) {
        std::vector<std::size_t> pos_idx, neg_idx;
        for (std::size_t i = 0; i < nb; ++i) (yb[i] == 1 ? pos_idx : neg_idx).push_back(i);
        if (!pos_idx.empty() && !neg_idx.empty()) {
          Vec pos = gather_vec(probs, pos_idx);
          Vec neg = gather_vec(probs, neg_idx);
          Vec d_pos, d_neg;
          pnorm_push_grad(pos, neg, cfg.push.p, d_pos, d_neg);
          for (std::size_t k = 0; k < pos_idx.size(); ++k) {
            const double p = probs[pos_idx[k]];
            dlogits[pos_idx[k]] += cfg.push.lambda_p * d_pos[k] * p * (1.0 - p);
          }
          for (std::size_t k = 0; k < neg_idx.size(); ++k) {
            const double p = probs[neg_idx[k]];
            dlogits[neg_idx[k]] += cfg.push.lambda_p * d_neg[k] * p * (1.0 - p);
          }
        }
      }
      for (double g : dlogits) {
        if (!std::isfinite(g)) {
          throw optimizer_error("non-finite loss gradient at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(b));
        }
      }
      model.zero_grad();
      model.backward(dlogits);
      adam.step_update([&model](const std::function<void(double&, double&)>& fn) { model.visit(fn); },
                       epoch);
    }
    evaluate_epoch(epoch);
  }
  if (cfg.epochs == 0) evaluate_epoch(0);
  return best;
}

}  // namespace

Checkpoint train(ModelKind kind, const Dataset& train_ds, const TrainConfig& cfg,
                 const Dataset& val_ds) {
  if (cfg.batch_size < 2) throw config_error("batch_size must be >= 2");
  Matrix raw = design_matrix(train_ds, train_ds.feature_names);
  Standardizer st = cfg.standardize ? Standardizer::fit(raw) : Standardizer::identity(raw.cols);
  Model model = Model::make(kind, raw.cols, cfg.seed, cfg.reland, cfg.mlp_hidden);
  std::string single_feature;
  if (kind == ModelKind::LrSingle) {
    single_feature = cfg.single_feature.empty() ? train_ds.env_feature : cfg.single_feature;
    model.single_feature_index = train_ds.feature_index(single_feature);
  }
  return train_impl(std::move(model), st, train_ds, cfg, val_ds, single_feature);
}

namespace {

FoldResult evaluate_fold(const Checkpoint& ckpt, const Dataset& val_ds,
                         const std::string& fold_id) {
  FoldResult fr;
  fr.fold_id = fold_id;
  fr.val_cell_ids = cell_ids(val_ds);
  fr.best_epoch = ckpt.best_epoch;
  if (!has_both_classes(val_ds)) {
    fr.available = false;
    fr.note = "validation municipality has a single class";
    return fr;
  }
  Vec probs = score(ckpt, val_ds);
  fr.report = evaluate(probs, label_vector(val_ds));
  return fr;
}

void run_jobs(std::size_t n_tasks, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < std::min(jobs, n_tasks); ++w) {
    workers.emplace_back([&, w]() {
      for (std::size_t i = w; i < n_tasks; i += jobs) task(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace

ProtocolReport block_cv(const Dataset& ds, ModelKind kind, const TrainConfig& cfg,
                        std::size_t jobs,
                        std::vector<std::optional<Checkpoint>>* fold_checkpoints) {
  auto munis = split_by_municipality(ds);
  if (munis.size() < 2) throw domain_error("blockCV needs at least 2 municipalities");

  std::vector<std::string> names;
  for (const auto& [name, idx] : munis) names.push_back(name);

  ProtocolReport report;
  report.protocol = Protocol::BlockCV;
  report.folds.resize(names.size());
  if (fold_checkpoints) fold_checkpoints->assign(names.size(), std::nullopt);

  run_jobs(names.size(), jobs, [&](std::size_t f) {
    const std::string& name = names[f];
    const auto& val_idx = munis.at(name);
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.cells[i].municipality != name) train_idx.push_back(i);
    }
    Dataset val_ds = subset(ds, val_idx);
    Dataset train_ds = subset(ds, train_idx);

    const auto t0 = std::chrono::steady_clock::now();
    FoldResult fr;
    if (!has_both_classes(val_ds)) {
      fr.fold_id = name;
      fr.available = false;
      fr.note = "validation municipality has a single class";
      fr.val_cell_ids = cell_ids(val_ds);
    } else if (!has_both_classes(train_ds)) {
      fr.fold_id = name;
      fr.available = false;
      fr.note = "training split has a single class";
      fr.val_cell_ids = cell_ids(val_ds);
    } else {
      // The validation municipality doubles as the checkpoint-selection set;
      // optimistic selection, mirrored in the report note.
      Checkpoint ckpt = train(kind, train_ds, cfg, val_ds);
      fr = evaluate_fold(ckpt, val_ds, name);
      fr.note = "checkpoint selected on the reported validation fold";
      if (fold_checkpoints) (*fold_checkpoints)[f] = std::move(ckpt);
    }
    fr.train_cell_ids = cell_ids(train_ds);
    fr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.folds[f] = std::move(fr);
  });
  return report;
}

ProtocolReport block_v(const Dataset& region_a, const Dataset& region_b, ModelKind kind,
                       const TrainConfig& cfg, Checkpoint* trained) {
  if (region_a.feature_names != region_b.feature_names) {
    throw schema_error("region A and B feature names differ");
  }
  auto munis_b = split_by_municipality(region_b);
  if (munis_b.empty()) throw domain_error("region B has no municipalities");

  // Municipality-stratified 10% selection holdout of A.
  auto munis_a = split_by_municipality(region_a);
  std::vector<std::size_t> train_idx, holdout_idx;
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
  for (auto& [name, idx] : munis_a) {
    std::vector<std::size_t> shuffled = idx;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const std::size_t n_hold = std::max<std::size_t>(1, (shuffled.size() + 9) / 10);
    for (std::size_t i = 0; i < shuffled.size(); ++i) {
      (i < n_hold ? holdout_idx : train_idx).push_back(shuffled[i]);
    }
  }
  Dataset train_ds = subset(region_a, train_idx);
  Dataset holdout_ds = subset(region_a, holdout_idx);
  Checkpoint ckpt = train(kind, train_ds, cfg, holdout_ds);

  ProtocolReport report;
  report.protocol = Protocol::BlockV;
  for (const auto& [name, idx] : munis_b) {
    FoldResult fr = evaluate_fold(ckpt, subset(region_b, idx), name);
    fr.train_cell_ids = cell_ids(region_a);
    report.folds.push_back(std::move(fr));
  }
  if (trained) *trained = std::move(ckpt);
  return report;
}

ProtocolReport transfer_cv(const Checkpoint& ckpt, const Dataset& region_b,
                           const TrainConfig& cfg, std::size_t jobs) {
  if (ckpt.feature_names != region_b.feature_names) {
    throw schema_error("checkpoint feature space does not match region B");
  }
  auto munis = split_by_municipality(region_b);
  if (munis.empty()) throw domain_error("region B has no municipalities");
  std::vector<std::string> names;
  for (const auto& [name, idx] : munis) names.push_back(name);

  ProtocolReport report;
  report.protocol = Protocol::TransferCV;
  report.folds.resize(names.size());

  run_jobs(names.size(), jobs, [&](std::size_t f) {
    const std::string& name = names[f];
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < region_b.size(); ++i) {
      if (region_b.cells[i].municipality != name) train_idx.push_back(i);
    }
    Dataset val_ds = subset(region_b, munis.at(name));
    Dataset train_ds = subset(region_b, train_idx);

    const auto t0 = std::chrono::steady_clock::now();
    FoldResult fr;
    if (cfg.epochs == 0) {
      fr = evaluate_fold(ckpt, val_ds, name);
    } else if (!has_both_classes(val_ds) || !has_both_classes(train_ds)) {
      fr.fold_id = name;
      fr.available = false;
      fr.note = "fine-tune fold has a single class";
      fr.val_cell_ids = cell_ids(val_ds);
    } else {
      TrainConfig ft = cfg;
      ft.base_lr = cfg.fine_tune_lr;
      // Standardization statistics travel with the checkpoint.
      Checkpoint tuned =
          train_impl(ckpt.model, ckpt.standardizer, train_ds, ft, val_ds, ckpt.single_feature);
      fr = evaluate_fold(tuned, val_ds, name);
    }
    fr.train_cell_ids = cell_ids(train_ds);
    fr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.folds[f] = std::move(fr);
  });
  return report;
}

MetricAggregate ProtocolReport::aggregate() const {
  MetricAggregate a;
  std::vector<const MetricReport*> avail;
  for (const FoldResult& f : folds) {
    if (f.available) {
      avail.push_back(&f.report);
    } else {
      ++a.n_excluded;
    }
  }
  a.n_folds = avail.size();
  if (avail.empty()) return a;
  auto mean_std = [&](auto getter, double& mean, double& std) {
    double m = 0.0;
    for (const MetricReport* r : avail) m += getter(*r);
    m /= static_cast<double>(avail.size());
    double v = 0.0;
    for (const MetricReport* r : avail) v += (getter(*r) - m) * (getter(*r) - m);
    v /= static_cast<double>(avail.size());
    mean = m;
    std = std::sqrt(v);
  };
  mean_std([](const MetricReport& r) { return r.roc_auc; }, a.mean_roc, a.std_roc);
  mean_std([](const MetricReport& r) { return r.pr_auc; }, a.mean_pr, a.std_pr);
  mean_std([](const MetricReport& r) { return r.mean_height; }, a.mean_height, a.std_height);
  mean_std([](const MetricReport& r) { return r.mean_rheight; }, a.mean_rheight, a.std_rheight);
  return a;
}

std::string ProtocolReport::to_json() const {
  json j;
  j["format_version"] = 1;
  j["protocol"] = protocol_name(protocol);
  json folds_json = json::array();
  for (const FoldResult& f : folds) {
    json fj;
    fj["fold_id"] = f.fold_id;
    fj["available"] = f.available;
    if (!f.note.empty()) fj["note"] = f.note;
    fj["best_epoch"] = f.best_epoch;
    if (f.available) {
      fj["metrics"] = {{"roc_auc", f.report.roc_auc},
                       {"pr_auc", f.report.pr_auc},
                       {"mean_height", f.report.mean_height},
                       {"mean_rheight", f.report.mean_rheight},
                       {"n_pos", f.report.n_pos},
                       {"n_neg", f.report.n_neg}};
    }
    folds_json.push_back(fj);
  }
  j["folds"] = folds_json;
  MetricAggregate a = aggregate();
  j["aggregate"] = {{"mean", {{"roc_auc", a.mean_roc},
                              {"pr_auc", a.mean_pr},
                              {"mean_height", a.mean_height},
                              {"mean_rheight", a.mean_rheight}}},
                    {"std", {{"roc_auc", a.std_roc},
                             {"pr_auc", a.std_pr},
                             {"mean_height", a.std_height},
                             {"mean_rheight", a.std_rheight}}},
                    {"n_folds", a.n_folds},
                    {"n_excluded", a.n_excluded}};
  return j.dump(2);
}

std::string ProtocolReport::to_table() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "fold              ROC (x100, up)  PR (x100, up)  Height (down)  rHeight (down)\n";
  for (const FoldResult& f : folds) {
    os.width(16);
    os << std::left << f.fold_id << "  ";
    if (!f.available) {
      os << "excluded: " << f.note << '\n';
      continue;
    }
    os << std::right;
    os.width(14);
    os << 100.0 * f.report.roc_auc;
    os.width(15);
    os << 100.0 * f.report.pr_auc;
    os.width(15);
    os << f.report.mean_height;
    os.width(16);
    os << f.report.mean_rheight;
    os << '\n';
  }
  MetricAggregate a = aggregate();
  os << "mean (std) over " << a.n_folds << " folds";
  if (a.n_excluded > 0) os << " [" << a.n_excluded << " excluded]";
  os << ": ROC " << 100.0 * a.mean_roc << " (" << 100.0 * a.std_roc << ")"
     << ", PR " << 100.0 * a.mean_pr << " (" << 100.0 * a.std_pr << ")"
     << ", Height " << a.mean_height << " (" << a.std_height << ")"
     << ", rHeight " << a.mean_rheight << " (" << a.std_rheight << ")\n";
  return os.str();
}

}  // namespace reland
