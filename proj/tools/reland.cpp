#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "reland/dataset.hpp"
#include "reland/errors.hpp"
#include "reland/models.hpp"
#include "reland/protocols.hpp"
#include "reland/spatial.hpp"

namespace {

using namespace reland;

// Plain key=value config file; '#' starts a comment; unknown keys rejected.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("config line " + std::to_string(line_no) + ": expected key=value");
    }
    kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
  }
  return kv;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': '" + v + "' is not a number");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': '" + v + "' is not a non-negative integer");
  }
}

SyntheticConfig synthetic_from_config(const std::map<std::string, std::string>& kv) {
  SyntheticConfig cfg;
  for (const auto& [key, v] : kv) {
    if (key == "grid_rows") cfg.grid_rows = to_uint(key, v);
    else if (key == "grid_cols") cfg.grid_cols = to_uint(key, v);
    else if (key == "n_municipalities") cfg.n_municipalities = to_uint(key, v);
    else if (key == "d_geo") cfg.d_geo = to_uint(key, v);
    else if (key == "seed") cfg.seed = to_uint(key, v);
    else if (key == "spurious_strength") cfg.spurious_strength = to_double(key, v);
    else if (key == "hard_fraction") cfg.hard_fraction = to_double(key, v);
    else throw config_error("unknown config key '" + key + "'");
  }
  return cfg;
}

void apply_train_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, v] : kv) {
    if (key == "epochs") cfg.epochs = to_uint(key, v);
    else if (key == "batch_size") cfg.batch_size = to_uint(key, v);
    else if (key == "base_lr") cfg.base_lr = to_double(key, v);
    else if (key == "decay_factor") cfg.decay_factor = to_double(key, v);
    else if (key == "decay_every") cfg.decay_every = to_uint(key, v);
    else if (key == "weight_decay") cfg.weight_decay = to_double(key, v);
    else if (key == "seed") cfg.seed = to_uint(key, v);
    else if (key == "irm_lambda") cfg.irm.lambda = to_double(key, v);
    else if (key == "push_p") cfg.push.p = to_double(key, v);
    else if (key == "push_lambda") cfg.push.lambda_p = to_double(key, v);
    else if (key == "standardize") cfg.standardize = (v == "1" || v == "true");
    else if (key == "steps") cfg.reland.steps = to_uint(key, v);
    else if (key == "latent") cfg.reland.latent = to_uint(key, v);
    else if (key == "gamma") cfg.reland.gamma = to_double(key, v);
    else if (key == "mlp_hidden") cfg.mlp_hidden = to_uint(key, v);
    else if (key == "single_feature") cfg.single_feature = v;
    else if (key == "fine_tune_lr") cfg.fine_tune_lr = to_double(key, v);
    else throw config_error("unknown config key '" + key + "'");
  }
}

void write_output(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    if (!content.empty() && content.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << content;
  if (!content.empty() && content.back() != '\n') out << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"RELand: landmine risk modeling toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic spatial dataset CSV");
  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "key=value config file");
  gen->add_option("--out", gen_out, "output CSV path")->required();
  gen->add_option("--seed", gen_seed, "RNG seed override");

  // train
  auto* tr = app.add_subcommand("train", "Train one model and write a checkpoint");
  std::string tr_data, tr_val, tr_model = "reland", tr_objective = "erm", tr_env = "hist_mines";
  std::string tr_out, tr_config, tr_feature;
  std::uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "training CSV")->required();
  tr->add_option("--val-data", tr_val, "validation CSV")->required();
  tr->add_option("--model", tr_model, "reland|mlp|lr|lr-single");
  tr->add_option("--objective", tr_objective, "erm|irm|pushed|irm-pushed");
  tr->add_option("--env-feature", tr_env, "environment-splitting feature column");
  tr->add_option("--seed", tr_seed, "RNG seed");
  tr->add_option("--out", tr_out, "checkpoint JSON path")->required();
  tr->add_option("--config", tr_config, "key=value config file");
  tr->add_option("--feature", tr_feature, "feature column for lr-single");

  // cv
  auto* cv = app.add_subcommand("cv", "Run a validation protocol");
  std::string cv_protocol, cv_data, cv_data_a, cv_data_b, cv_ckpt, cv_report = "-";
  std::string cv_model = "reland", cv_objective = "erm", cv_env = "hist_mines", cv_config;
  std::uint64_t cv_seed = 0;
  std::size_t cv_jobs = 1;
  bool cv_table = false;
  cv->add_option("--protocol", cv_protocol, "blockcv|blockv|transfercv")->required();
  cv->add_option("--data", cv_data, "dataset CSV (blockcv)");
  cv->add_option("--data-a", cv_data_a, "region A CSV (blockv/transfercv)");
  cv->add_option("--data-b", cv_data_b, "region B CSV (blockv/transfercv)");
  cv->add_option("--ckpt", cv_ckpt, "pretrained checkpoint (transfercv)");
  cv->add_option("--model", cv_model, "reland|mlp|lr|lr-single");
  cv->add_option("--objective", cv_objective, "erm|irm|pushed|irm-pushed");
  cv->add_option("--env-feature", cv_env, "environment-splitting feature column");
  cv->add_option("--seed", cv_seed, "RNG seed");
  cv->add_option("--jobs", cv_jobs, "concurrent folds");
  cv->add_option("--report", cv_report, "report JSON path, - for stdout");
  cv->add_option("--config", cv_config, "key=value config file");
  cv->add_flag("--table", cv_table, "also print the formatted table");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a dataset with a checkpoint");
  std::string ev_ckpt, ev_data, ev_report = "-";
  ev->add_option("--ckpt", ev_ckpt, "checkpoint JSON")->required();
  ev->add_option("--data", ev_data, "dataset CSV")->required();
  ev->add_option("--report", ev_report, "metric report path, - for stdout");

  // importance
  auto* imp = app.add_subcommand("importance", "Global feature importance of a checkpoint");
  std::string imp_ckpt, imp_data, imp_out = "-";
  imp->add_option("--ckpt", imp_ckpt, "reland checkpoint JSON")->required();
  imp->add_option("--data", imp_data, "train dataset CSV")->required();
  imp->add_option("--out", imp_out, "importance CSV path, - for stdout");

  // riskmap
  auto* rm = app.add_subcommand("riskmap", "Export a GeoJSON/HTML risk map");
  std::string rm_ckpt, rm_data, rm_out, rm_html;
  bool rm_moran = false, rm_rook = false;
  double rm_alpha = 0.01;
  std::size_t rm_perms = 999;
  std::uint64_t rm_seed = 0;
  rm->add_option("--ckpt", rm_ckpt, "checkpoint JSON")->required();
  rm->add_option("--data", rm_data, "dataset CSV")->required();
  rm->add_option("--out", rm_out, "GeoJSON output path")->required();
  rm->add_option("--html", rm_html, "optional standalone HTML output path");
  rm->add_flag("--moran", rm_moran, "compute Local Moran hazard clusters");
  rm->add_flag("--rook", rm_rook, "rook contiguity instead of queen");
  rm->add_option("--alpha", rm_alpha, "significance level");
  rm->add_option("--perms", rm_perms, "permutation count");
  rm->add_option("--seed", rm_seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    SyntheticConfig cfg;
    if (!gen_config.empty()) cfg = synthetic_from_config(read_config_file(gen_config));
    if (gen_seed) cfg.seed = *gen_seed;
    Dataset ds = generate_synthetic(cfg);
    save_csv(ds, gen_out);
    std::cout << "wrote " << ds.size() << " cells to " << gen_out << " (positive rate "
              << ds.positive_rate() << ")\n";
    return 0;
  }

  if (tr->parsed()) {
    TrainConfig cfg;
    if (!tr_config.empty()) apply_train_config(cfg, read_config_file(tr_config));
    cfg.seed = tr_seed;
    cfg.objective = objective_from_name(tr_objective);
    if (!tr_feature.empty()) cfg.single_feature = tr_feature;
    Dataset train_ds = load_csv(tr_data, tr_env);
    Dataset val_ds = load_csv(tr_val, tr_env);
    Checkpoint ckpt = train(model_kind_from_name(tr_model), train_ds, cfg, val_ds);
    ckpt.save(tr_out);
    std::cout << "best epoch " << ckpt.best_epoch << ", val ROC " << ckpt.best_val_roc << ", wrote "
              << tr_out << '\n';
    return 0;
  }

  if (cv->parsed()) {
    TrainConfig cfg;
    if (!cv_config.empty()) apply_train_config(cfg, read_config_file(cv_config));
    cfg.seed = cv_seed;
    cfg.objective = objective_from_name(cv_objective);
    ProtocolReport report;
    if (cv_protocol == "blockcv") {
      if (cv_data.empty()) throw config_error("blockcv requires --data");
      Dataset ds = load_csv(cv_data, cv_env);
      report = block_cv(ds, model_kind_from_name(cv_model), cfg, cv_jobs);
    } else if (cv_protocol == "blockv") {
      if (cv_data_a.empty() || cv_data_b.empty()) {
        throw config_error("blockv requires --data-a and --data-b");
      }
      Dataset a = load_csv(cv_data_a, cv_env);
      Dataset b = load_csv(cv_data_b, cv_env);
      report = block_v(a, b, model_kind_from_name(cv_model), cfg);
    } else if (cv_protocol == "transfercv") {
      if (cv_data_b.empty()) throw config_error("transfercv requires --data-b");
      Dataset b = load_csv(cv_data_b, cv_env);
      Checkpoint ckpt;
      if (!cv_ckpt.empty()) {
        ckpt = Checkpoint::load(cv_ckpt);
      } else {
        if (cv_data_a.empty()) throw config_error("transfercv requires --ckpt or --data-a");
        Dataset a = load_csv(cv_data_a, cv_env);
        block_v(a, b, model_kind_from_name(cv_model), cfg, &ckpt);
      }
      cfg.base_lr = cfg.fine_tune_lr;
      report = transfer_cv(ckpt, b, cfg, cv_jobs);
    } else {
      throw config_error("unknown protocol '" + cv_protocol + "'");
    }
    write_output(cv_report, report.to_json());
    if (cv_table) std::cout << report.to_table();
    return 0;
  }

  if (ev->parsed()) {
    Checkpoint ckpt = Checkpoint::load(ev_ckpt);
    Dataset ds = load_csv(ev_data, ckpt.feature_names.front());
    Vec probs = score(ckpt, ds);
    MetricReport mr = evaluate(probs, label_vector(ds));
    write_output(ev_report, mr.to_json());
    return 0;
  }

  if (imp->parsed()) {
    Checkpoint ckpt = Checkpoint::load(imp_ckpt);
    if (ckpt.model.kind != ModelKind::Reland) {
      throw config_error("importance requires a reland checkpoint");
    }
    Dataset ds = load_csv(imp_data, ckpt.feature_names.front());
    Matrix x = ckpt.standardizer.apply(design_matrix(ds, ckpt.feature_names));
    RelandModel model = *ckpt.model.reland;
    ImportanceReport rep = feature_importance(model, x);
    std::ostringstream os;
    os << "feature,importance\n";
    os.precision(17);
    for (std::size_t j = 0; j < rep.importance.size(); ++j) {
      os << ckpt.feature_names[j] << ',' << rep.importance[j] << '\n';
    }
    write_output(imp_out, os.str());
    return 0;
  }

  if (rm->parsed()) {
    Checkpoint ckpt = Checkpoint::load(rm_ckpt);
    Dataset ds = load_csv(rm_data, ckpt.feature_names.front());
    Vec probs = score(ckpt, ds);
    std::optional<ClusterMap> cluster;
    if (rm_moran) {
      SpatialWeights w = build_weights(
          ds.cells, rm_rook ? ContiguityScheme::Rook : ContiguityScheme::Queen);
      cluster = local_moran(probs, w, rm_perms, rm_seed, rm_alpha);
    }
    const ClusterMap* cm = cluster ? &*cluster : nullptr;
    write_output(rm_out, export_riskmap_geojson(ds.cells, probs, cm));
    if (!rm_html.empty()) write_output(rm_html, export_riskmap_html(ds.cells, probs, cm));
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const reland::Error& e) {
    std::cerr << "ERROR " << e.category() << ": " << e.what() << '\n';
    const std::string& cat = e.category();
    const bool validation = cat == "config" || cat == "schema" || cat == "parse" ||
                            cat == "domain" || cat == "dimension" || cat == "state";
    return validation ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "ERROR internal: " << e.what() << '\n';
    return 2;
  }
}
