#include "fmseg/crossval.hpp"

#include <cmath>

#include <json.hpp>

namespace fmseg {

std::vector<int> fold_val_samples(const DatasetSpec& spec_in, int folds,
                                  std::uint64_t master_seed) {
  DatasetSpec spec = spec_in;
  spec.apply_defaults();
  const int non_test = spec.train_samples + spec.val_samples;
  if (folds > non_test) throw ConfigError("run_crossval: more folds than non-test samples");
  std::vector<int> ids(static_cast<std::size_t>(non_test));
  for (int i = 0; i < non_test; ++i) ids[static_cast<std::size_t>(i)] = i;
  RngStream rng(master_seed, "fold_rotation");
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.uniform_int(i)]);
  ids.resize(static_cast<std::size_t>(folds));
  return ids;
}

CrossvalResult run_crossval(const CrossvalConfig& cfg) {
  DatasetSpec spec = cfg.data_spec;
  spec.apply_defaults();
  spec.validate();

  const std::vector<MarkerPatch> base = generate_dataset(spec);
  const std::vector<int> val_samples = fold_val_samples(spec, cfg.folds, cfg.master_seed);
  const int non_test = spec.train_samples + spec.val_samples;

  CrossvalResult result;
  for (int fold = 0; fold < cfg.folds; ++fold) {
    const int val_sample = val_samples[static_cast<std::size_t>(fold)];

    std::vector<MarkerPatch> patches = base;
    for (MarkerPatch& p : patches) {
      if (p.sample_id >= non_test)
        p.split = Split::test;
      else if (p.sample_id == val_sample)
        p.split = Split::val;
      else
        p.split = Split::train;
      p.availability = MarkerSet::full(spec.K);
    }
    apply_scenario(patches, cfg.scenario);

    const std::uint64_t fold_seed =
        RngStream(cfg.master_seed, "fold_seed", static_cast<std::uint64_t>(fold)).next_u64();

    SegModel model = build_model(cfg.arch, cfg.variant, cfg.dropout_p, fold_seed,
                                 cfg.dropout_last_only);
    TrainConfig tc = cfg.train;
    tc.seed = fold_seed;
    const TrainStats train_stats = train_seg_model(model, patches, tc);

    QualityBuildOptions opts;
    opts.T = cfg.T_quality;
    opts.keep_maps = cfg.train_cnn;
    model.set_requires_grad(false);

    RngStream q_rng(cfg.master_seed, "quality_rng", static_cast<std::uint64_t>(fold));
    std::vector<QualityExample> val_examples =
        build_quality_dataset(model, patches, Split::val, opts, q_rng.substream("val"));
    std::vector<QualityExample> test_examples =
        build_quality_dataset(model, patches, Split::test, opts, q_rng.substream("test"));
    for (QualityExample& ex : val_examples) ex.fold = fold;
    for (QualityExample& ex : test_examples) ex.fold = fold;

    for (const QualityExample& ex : test_examples) {
      EvalRecord rec;
      rec.patch_id = ex.patch_id;
      rec.availability = ex.availability;
      rec.fold = fold;
      rec.model = variant_name(cfg.variant);
      rec.f1 = ex.q;
      result.records.push_back(rec);
    }

    FoldSummary summary;
    summary.fold = fold;
    summary.val_sample = val_sample;
    summary.final_train_loss = train_stats.epoch_loss.back();

    const FeatureMode modes[3] = {FeatureMode::e_only, FeatureMode::a_only, FeatureMode::both};
    const char* names[3] = {"rf_e", "rf_a", "rf_both"};
    double* slots[3] = {&summary.rmse_e, &summary.rmse_a, &summary.rmse_both};
    for (int m = 0; m < 3; ++m) {
      ForestParams fp = cfg.rf;
      fp.seed = RngStream(cfg.master_seed, "rf_seed", static_cast<std::uint64_t>(fold),
                          static_cast<std::uint64_t>(m))
                    .next_u64();
      const Forest forest = train_quality_rf(val_examples, modes[m], spec.K, fp);
      std::vector<double> pred, truth;
      for (const QualityExample& ex : test_examples) {
        PredictionRow row;
        row.patch_id = ex.patch_id;
        row.combo = ex.availability;
        row.fold = fold;
        row.q_true = ex.q;
        row.q_pred = predict_quality_rf(forest, ex, modes[m], spec.K);
        row.regressor = names[m];
        result.predictions.push_back(row);
        pred.push_back(row.q_pred);
        truth.push_back(row.q_true);
      }
      *slots[m] = rmse(pred, truth);
    }

    if (cfg.train_cnn) {
      QNet net = build_qnet(fold_seed, 64);
      QNetTrainConfig qc = cfg.qnet;
      qc.seed = fold_seed;
      train_quality_cnn(net, val_examples, qc);
      std::vector<double> pred, truth;
      for (const QualityExample& ex : test_examples) {
        PredictionRow row;
        row.patch_id = ex.patch_id;
        row.combo = ex.availability;
        row.fold = fold;
        row.q_true = ex.q;
        row.q_pred = predict_quality_cnn(net, ex.map_stack);
        row.regressor = "cnn";
        result.predictions.push_back(row);
        pred.push_back(row.q_pred);
        truth.push_back(row.q_true);
      }
      summary.rmse_cnn = rmse(pred, truth);
    } else {
      summary.rmse_cnn = std::nan("");
    }
    result.folds.push_back(summary);
  }

  auto rows_for = [&result](const std::string& name) {
    std::vector<PredictionRow> rows;
    for (const PredictionRow& r : result.predictions) {
      if (r.regressor == name) rows.push_back(r);
    }
    return rows;
  };
  result.eval_e = evaluate_quality(rows_for("rf_e"));
  result.eval_a = evaluate_quality(rows_for("rf_a"));
  result.eval_both = evaluate_quality(rows_for("rf_both"));
  if (cfg.train_cnn) result.eval_cnn = evaluate_quality(rows_for("cnn"));
  return result;
}

std::string crossval_summary_json(const CrossvalConfig& cfg, const CrossvalResult& result) {
  nlohmann::json j;
  j["scenario"] = cfg.scenario.name;
  j["variant"] = variant_name(cfg.variant);
  j["dropout_p"] = cfg.dropout_p;
  j["T_quality"] = cfg.T_quality;
  j["folds"] = cfg.folds;
  j["master_seed"] = cfg.master_seed;

  nlohmann::json folds = nlohmann::json::array();
  for (const FoldSummary& f : result.folds) {
    nlohmann::json e;
    e["fold"] = f.fold;
    e["val_sample"] = f.val_sample;
    e["rmse_rf_e"] = f.rmse_e;
    e["rmse_rf_a"] = f.rmse_a;
    e["rmse_rf_both"] = f.rmse_both;
    if (!std::isnan(f.rmse_cnn)) e["rmse_cnn"] = f.rmse_cnn;
    e["final_train_loss"] = f.final_train_loss;
    folds.push_back(e);
  }
  j["folds_detail"] = folds;

  auto eval_json = [](const QualityEval& ev) {
    nlohmann::json e;
    e["rmse_all"] = ev.rmse_all;
    e["r2_of_means"] = ev.r2_of_means;
    nlohmann::json combos = nlohmann::json::array();
    for (const ComboAggregate& c : ev.per_combination) {
      combos.push_back({{"combo", c.combo.name()},
                        {"mean_pred", c.mean_pred},
                        {"sd_pred", c.sd_pred},
                        {"mean_true", c.mean_true},
                        {"sd_true", c.sd_true},
                        {"n_folds", c.n_folds}});
    }
    e["per_combination"] = combos;
    return e;
  };
  j["rf_e"] = eval_json(result.eval_e);
  j["rf_a"] = eval_json(result.eval_a);
  j["rf_both"] = eval_json(result.eval_both);
  if (result.eval_cnn) j["cnn"] = eval_json(*result.eval_cnn);
  return j.dump(2);
}

namespace {

nlohmann::json arch_to_json(const ArchConfig& a) {
  return {{"depth", a.depth},
          {"base_width", a.base_width},
          {"patch_extent", a.patch_extent},
          {"K", a.K},
          {"me_reduction", a.me_reduction}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.depth = j.value("depth", a.depth);
  a.base_width = j.value("base_width", a.base_width);
  a.patch_extent = j.value("patch_extent", a.patch_extent);
  a.K = j.value("K", a.K);
  a.me_reduction = j.value("me_reduction", a.me_reduction);
  return a;
}

}  // namespace

CrossvalConfig crossval_config_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  CrossvalConfig cfg;
  if (j.contains("data_spec")) {
    const std::string tmp = j["data_spec"].dump();
    // reuse the dataset-spec parser via a round trip through its json form
    nlohmann::json ds = j["data_spec"];
    DatasetSpec spec;
    spec.K = ds.value("K", spec.K);
    spec.samples = ds.value("samples", spec.samples);
    spec.train_samples = ds.value("train_samples", spec.train_samples);
    spec.val_samples = ds.value("val_samples", spec.val_samples);
    if (ds.contains("patches_per_sample"))
      spec.patches_per_sample = ds["patches_per_sample"].get<std::vector<int>>();
    spec.patch_extent = ds.value("patch_extent", spec.patch_extent);
    spec.fg_target = ds.value("fg_target", spec.fg_target);
    spec.fg_accept_lo = ds.value("fg_accept_lo", spec.fg_accept_lo);
    spec.fg_accept_hi = ds.value("fg_accept_hi", spec.fg_accept_hi);
    if (ds.contains("noise_sigma"))
      spec.noise_sigma = ds["noise_sigma"].get<std::vector<double>>();
    if (ds.contains("visibility")) {
      spec.visibility.clear();
      for (const auto& e : ds["visibility"])
        spec.visibility.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    }
    spec.seed = ds.value("seed", spec.seed);
    cfg.data_spec = spec;
  }
  if (j.contains("scenario")) {
    if (j["scenario"].is_string()) {
      const std::string name = j["scenario"].get<std::string>();
      if (name == "case6")
        cfg.scenario = scenario_case6();
      else if (name == "full")
        cfg.scenario = scenario_full(cfg.data_spec.K, cfg.data_spec.train_samples);
      else
        throw ConfigError("unknown scenario name: " + name);
    } else {
      Scenario s;
      s.name = j["scenario"].at("name").get<std::string>();
      for (const auto& e : j["scenario"].at("train_availability"))
        s.train_availability.push_back(MarkerSet::parse(e.get<std::string>()));
      cfg.scenario = s;
    }
  }
  if (j.contains("arch")) cfg.arch = arch_from_json(j["arch"]);
  cfg.variant = variant_from_name(j.value("variant", std::string("combined")));
  cfg.dropout_p = j.value("dropout_p", cfg.dropout_p);
  cfg.dropout_last_only = j.value("dropout_last_only", cfg.dropout_last_only);
  if (j.contains("train")) {
    const auto& t = j["train"];
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.loss_T = t.value("loss_T", cfg.train.loss_T);
    cfg.train.class_weight_fg = t.value("class_weight_fg", cfg.train.class_weight_fg);
    cfg.train.marker_sampling = t.value("marker_sampling", cfg.train.marker_sampling);
  }
  cfg.T_quality = j.value("T_quality", cfg.T_quality);
  if (j.contains("rf")) {
    const auto& r = j["rf"];
    cfg.rf.n_trees = r.value("n_trees", cfg.rf.n_trees);
    cfg.rf.mtry = r.value("mtry", cfg.rf.mtry);
    cfg.rf.min_split = r.value("min_split", cfg.rf.min_split);
    cfg.rf.min_leaf = r.value("min_leaf", cfg.rf.min_leaf);
    cfg.rf.max_depth = r.value("max_depth", cfg.rf.max_depth);
    cfg.rf.bootstrap = r.value("bootstrap", cfg.rf.bootstrap);
  }
  cfg.train_cnn = j.value("train_cnn", cfg.train_cnn);
  if (j.contains("qnet")) {
    const auto& q = j["qnet"];
    cfg.qnet.epochs = q.value("epochs", cfg.qnet.epochs);
    cfg.qnet.batch = q.value("batch", cfg.qnet.batch);
    cfg.qnet.lr = q.value("lr", cfg.qnet.lr);
  }
  cfg.folds = j.value("folds", cfg.folds);
  cfg.master_seed = j.value("master_seed", cfg.master_seed);
  return cfg;
}

std::string crossval_config_to_json(const CrossvalConfig& cfg) {
  DatasetSpec spec = cfg.data_spec;
  spec.apply_defaults();
  nlohmann::json j;
  j["data_spec"] = nlohmann::json::parse(dataset_spec_to_json(spec));
  nlohmann::json sc;
  sc["name"] = cfg.scenario.name;
  nlohmann::json avail = nlohmann::json::array();
  for (const MarkerSet& m : cfg.scenario.train_availability) avail.push_back(m.name());
  sc["train_availability"] = avail;
  j["scenario"] = sc;
  j["arch"] = arch_to_json(cfg.arch);
  j["variant"] = variant_name(cfg.variant);
  j["dropout_p"] = cfg.dropout_p;
  j["dropout_last_only"] = cfg.dropout_last_only;
  j["train"] = {{"epochs", cfg.train.epochs},
                {"lr", cfg.train.lr},
                {"loss_T", cfg.train.loss_T},
                {"class_weight_fg", cfg.train.class_weight_fg},
                {"marker_sampling", cfg.train.marker_sampling}};
  j["T_quality"] = cfg.T_quality;
  j["rf"] = {{"n_trees", cfg.rf.n_trees},   {"mtry", cfg.rf.mtry},
             {"min_split", cfg.rf.min_split}, {"min_leaf", cfg.rf.min_leaf},
             {"max_depth", cfg.rf.max_depth}, {"bootstrap", cfg.rf.bootstrap}};
  j["train_cnn"] = cfg.train_cnn;
  j["qnet"] = {{"epochs", cfg.qnet.epochs}, {"batch", cfg.qnet.batch}, {"lr", cfg.qnet.lr}};
  j["folds"] = cfg.folds;
  j["master_seed"] = cfg.master_seed;
  return j.dump(2);
}

}  // namespace fmseg
