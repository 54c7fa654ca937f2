#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reland/dataset.hpp"
#include "reland/losses.hpp"
#include "reland/metrics.hpp"
#include "reland/models.hpp"

namespace reland {

enum class Objective { Erm, Irm, Pushed, IrmPushed };

std::string objective_name(Objective o);
Objective objective_from_name(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 2048;
  double base_lr = 0.01;
  double decay_factor = 0.1;
  std::size_t decay_every = 75;
  double weight_decay = 0.0005;
  std::uint64_t seed = 0;
  Objective objective = Objective::Erm;
  IrmConfig irm;
  PushConfig push;
  bool standardize = true;
  RelandConfig reland;  // dim filled from the data
  std::size_t mlp_hidden = 20;
  // lr-single column; empty means "use the dataset's env feature".
  std::string single_feature;
  double fine_tune_lr = 0.05;
};

// Epoch loop with seeded shuffling, best-val-ROC checkpoint selection
// (ties resolved to the earliest epoch), and train-only standardization.
Checkpoint train(ModelKind kind, const Dataset& train_ds, const TrainConfig& cfg,
                 const Dataset& val_ds);

enum class Protocol { BlockCV, BlockV, TransferCV };

std::string protocol_name(Protocol p);

struct FoldResult {
  std::string fold_id;
  bool available = true;
  std::string note;  // set when unavailable
  MetricReport report;
  std::size_t best_epoch = 0;
  double seconds = 0.0;  // wall clock; excluded from JSON on purpose
  // Instrumentation for leakage checks; never serialized.
  std::vector<std::string> train_cell_ids;
  std::vector<std::string> val_cell_ids;
};

struct MetricAggregate {
  double mean_roc = 0.0, std_roc = 0.0;
  double mean_pr = 0.0, std_pr = 0.0;
  double mean_height = 0.0, std_height = 0.0;
  double mean_rheight = 0.0, std_rheight = 0.0;
  std::size_t n_folds = 0;
  std::size_t n_excluded = 0;
};

struct ProtocolReport {
  Protocol protocol = Protocol::BlockCV;
  std::vector<FoldResult> folds;

  MetricAggregate aggregate() const;  // recomputed from available folds
  std::string to_json() const;
  std::string to_table() const;  // ROC/PR scaled by 100
};

// Leave-one-municipality-out. Per-fold checkpoints optionally returned for
// subset analyses; slots of unavailable folds stay empty.
ProtocolReport block_cv(const Dataset& ds, ModelKind kind, const TrainConfig& cfg,
                        std::size_t jobs = 1,
                        std::vector<std::optional<Checkpoint>>* fold_checkpoints = nullptr);

// Train once on A (10% municipality-stratified selection holdout), evaluate
// per municipality of B.
ProtocolReport block_v(const Dataset& region_a, const Dataset& region_b, ModelKind kind,
                       const TrainConfig& cfg, Checkpoint* trained = nullptr);

// Fine-tune the checkpoint on B minus one municipality, test on it; repeated
// for every municipality. epochs = 0 reproduces block_v evaluation exactly.
ProtocolReport transfer_cv(const Checkpoint& ckpt, const Dataset& region_b,
                           const TrainConfig& cfg, std::size_t jobs = 1);

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace reland
