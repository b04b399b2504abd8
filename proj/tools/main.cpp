// fmseg command line: dataset generation, segmentation training, uncertainty
// inference, quality-regression training/evaluation, and report emission.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "fmseg/crossval.hpp"
#include "fmseg/io_util.hpp"
#include "fmseg/report.hpp"
#include "fmseg/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace fmseg;

namespace {

std::string resolve_out(const std::string& out) {
  const char* root = std::getenv("FMSEG_OUT_ROOT");
  if (root && *root && fs::path(out).is_relative()) return (fs::path(root) / out).string();
  return out;
}

void finalize_manifest(const std::string& dir, const std::string& command,
                       const std::string& config_json,
                       const std::vector<std::string>& input_paths,
                       const std::vector<std::string>& output_paths) {
  RunManifest m;
  m.command = command;
  m.config_json = config_json;
  for (const std::string& p : input_paths) {
    if (fs::is_directory(p)) {
      const fs::path mani = fs::path(p) / "manifest.json";
      if (fs::exists(mani)) m.inputs.emplace_back(mani.string(), hash_file_hex(mani.string()));
    } else if (fs::exists(p)) {
      m.inputs.emplace_back(p, hash_file_hex(p));
    }
  }
  for (const std::string& p : output_paths) {
    if (fs::exists(p)) m.outputs.emplace_back(p, hash_file_hex(p));
  }
  write_run_manifest(dir, m);
}

int cmd_gen_data(const std::string& spec_path, std::int64_t seed, const std::string& out_raw) {
  const std::string out = resolve_out(out_raw);
  DatasetSpec spec;
  if (!spec_path.empty()) spec = dataset_spec_from_json_file(spec_path);
  spec.apply_defaults();
  if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);

  const std::vector<MarkerPatch> patches = generate_dataset(spec);
  fs::create_directories(out);
  save_dataset(out, patches, spec);
  std::cout << "generated " << patches.size() << " patches ("
            << format_double(mean_foreground_fraction(patches) * 100.0)
            << "% foreground), dataset at " << out << "\n";
  finalize_manifest(out, "gen-data", dataset_spec_to_json(spec),
                    spec_path.empty() ? std::vector<std::string>{}
                                      : std::vector<std::string>{spec_path},
                    {(fs::path(out) / "manifest.json").string()});
  return 0;
}

Scenario resolve_scenario(const std::string& name, const DatasetSpec& spec) {
  if (name == "full") return scenario_full(spec.K, spec.train_samples);
  if (name == "case6") return scenario_case6();
  return scenario_from_json_file(name);
}

int cmd_train_seg(const std::string& data_dir, const std::string& scenario_name,
                  const std::string& variant_str, double p, bool last_only, int epochs,
                  double lr, int loss_T, double class_weight, std::int64_t seed, int val_sample,
                  int depth, int base_width, const std::string& out_raw) {
  const std::string out = resolve_out(out_raw);
  DatasetSpec spec = load_dataset_spec(data_dir);
  std::vector<MarkerPatch> patches = load_dataset(data_dir);
  if (val_sample >= 0) {
    const int non_test = spec.train_samples + spec.val_samples;
    if (val_sample >= non_test) throw ConfigError("val sample must be a non-test sample");
    for (MarkerPatch& mp : patches) {
      if (mp.sample_id >= non_test) continue;
      mp.split = mp.sample_id == val_sample ? Split::val : Split::train;
      mp.availability = MarkerSet::full(spec.K);
    }
  }
  const Scenario scenario = resolve_scenario(scenario_name, spec);
  apply_scenario(patches, scenario);

  ArchConfig arch;
  arch.depth = depth;
  arch.base_width = base_width;
  arch.patch_extent = spec.patch_extent;
  arch.K = spec.K;

  SegModel model = build_model(arch, variant_from_name(variant_str), p,
                               static_cast<std::uint64_t>(seed), last_only);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.lr = lr;
  tc.loss_T = loss_T;
  tc.class_weight_fg = class_weight;
  tc.seed = static_cast<std::uint64_t>(seed);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainStats stats = train_seg_model(model, patches, tc);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(out);
  const std::string ckpt = (fs::path(out) / "model.ckpt").string();
  save_seg_model(ckpt, model);
  std::string log = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < stats.epoch_loss.size(); ++e)
    log += std::to_string(e) + "," + format_double(stats.epoch_loss[e]) + "\n";
  const std::string log_path = (fs::path(out) / "train_log.csv").string();
  write_text_file(log_path, log);

  nlohmann::json cfg;
  cfg["scenario"] = scenario.name;
  cfg["variant"] = variant_str;
  cfg["dropout_p"] = p;
  cfg["dropout_last_only"] = last_only;
  cfg["epochs"] = epochs;
  cfg["lr"] = lr;
  cfg["loss_T"] = loss_T;
  cfg["class_weight_fg"] = class_weight;
  cfg["seed"] = seed;
  cfg["val_sample"] = val_sample;
  cfg["arch"] = {{"depth", depth}, {"base_width", base_width}};
  std::cout << "trained " << variant_str << " (" << model.param_count() << " params) in "
            << format_double(secs) << " s, final loss "
            << format_double(stats.epoch_loss.back()) << ", checkpoint " << ckpt << "\n";
  finalize_manifest(out, "train-seg", cfg.dump(), {data_dir}, {ckpt, log_path});
  return 0;
}

int cmd_infer(const std::string& model_path, const std::string& data_dir,
              const std::string& split_str, const std::string& combo_str,
              const std::string& mode, int T, std::int64_t seed, bool write_bundles,
              const std::string& out_raw) {
  const std::string out = resolve_out(out_raw);
  SegModel model = load_seg_model(model_path);
  model.set_requires_grad(false);
  const std::vector<MarkerPatch> patches = load_dataset(data_dir);
  const Split split = split_from_name(split_str);
  const int K = model.cfg.K;

  std::vector<MarkerSet> combos;
  if (combo_str == "all") {
    combos = enumerate_combinations(K);
  } else {
    const MarkerSet combo = MarkerSet::parse(combo_str);
    if (combo.canonical() > (1u << K) - 1u)
      throw ConfigError("combination " + combo.name() + " exceeds the model's K=" +
                        std::to_string(K));
    combos.push_back(combo);
  }

  fs::create_directories(out);
  RngStream rng(static_cast<std::uint64_t>(seed), "infer");
  std::vector<EvalRecord> records;
  std::vector<std::string> outputs;
  for (const MarkerPatch& patch : patches) {
    if (patch.split != split) continue;
    for (const MarkerSet& combo : combos) {
      const Tensor masked = mask_channels(patch.channels, combo);
      UncertaintyBundle bundle;
      if (mode == "det") {
        bundle = deterministic_predict(model, masked, combo);
      } else if (model.has_dropout() && model.has_variance_head()) {
        bundle = combined_predict(model, masked, combo, T,
                                  rng.substream("patch", patch.patch_id, combo.canonical()));
      } else if (model.has_dropout()) {
        bundle = mc_epistemic(model, masked, combo, T,
                              rng.substream("patch", patch.patch_id, combo.canonical()));
      } else if (model.has_variance_head()) {
        bundle = aleatoric_infer(model, masked, combo);
      } else {
        bundle = deterministic_predict(model, masked, combo);
      }
      bundle.patch_id = patch.patch_id;
      EvalRecord rec;
      rec.patch_id = patch.patch_id;
      rec.availability = combo;
      rec.fold = 0;
      rec.model = variant_name(model.variant) + std::string(mode == "det" ? "_det" : "");
      rec.f1 = f1_from_prob_plane(patch.mask, bundle.mean_prob);
      records.push_back(rec);
      if (write_bundles) {
        const std::string bp =
            (fs::path(out) / ("b" + std::to_string(patch.patch_id) + "_" + combo.name() +
                              ".bundle"))
                .string();
        save_bundle(bp, bundle);
      }
    }
  }
  const std::string rec_path = (fs::path(out) / "records.csv").string();
  write_text_file(rec_path, eval_records_to_csv(records));
  double mean_f1 = 0.0;
  for (const EvalRecord& r : records) mean_f1 += r.f1;
  mean_f1 /= static_cast<double>(records.size());
  std::cout << records.size() << " predictions, mean F1 " << format_double(mean_f1) << ", at "
            << out << "\n";
  nlohmann::json cfg;
  cfg["model"] = model_path;
  cfg["split"] = split_str;
  cfg["combo"] = combo_str;
  cfg["mode"] = mode;
  cfg["T"] = T;
  cfg["seed"] = seed;
  finalize_manifest(out, "infer", cfg.dump(), {model_path, data_dir}, {rec_path});
  return 0;
}

int cmd_build_quality_set(const std::string& model_path, const std::string& data_dir,
                          const std::string& split_str, int T, std::int64_t seed, int fold,
                          const std::string& out_raw) {
  const std::string out = resolve_out(out_raw);
  SegModel model = load_seg_model(model_path);
  model.set_requires_grad(false);
  const std::vector<MarkerPatch> patches = load_dataset(data_dir);

  QualityBuildOptions opts;
  opts.T = T;
  opts.keep_maps = true;
  std::vector<QualityExample> examples =
      build_quality_dataset(model, patches, split_from_name(split_str), opts,
                            RngStream(static_cast<std::uint64_t>(seed), "quality"));
  for (QualityExample& ex : examples) ex.fold = fold;

  fs::create_directories(out);
  const std::string feat_path = (fs::path(out) / "features.csv").string();
  write_text_file(feat_path, quality_examples_to_csv(examples, model.cfg.K));
  const fs::path stacks_dir = fs::path(out) / "map_stacks";
  fs::create_directories(stacks_dir);
  for (const QualityExample& ex : examples) {
    std::vector<float> raw;
    raw.reserve(ex.map_stack.size());
    for (double v : ex.map_stack.values()) raw.push_back(static_cast<float>(v));
    write_f32_file((stacks_dir / ("s" + std::to_string(ex.patch_id) + "_" +
                                  ex.availability.name() + ".raw"))
                       .string(),
                   raw);
  }
  std::cout << examples.size() << " quality examples -> " << feat_path << "\n";
  nlohmann::json cfg;
  cfg["model"] = model_path;
  cfg["split"] = split_str;
  cfg["T"] = T;
  cfg["seed"] = seed;
  cfg["fold"] = fold;
  finalize_manifest(out, "build-quality-set", cfg.dump(), {model_path, data_dir}, {feat_path});
  return 0;
}

int cmd_train_quality(const std::vector<std::string>& feature_csvs, const std::string& mode_str,
                      const std::string& regressor, int n_trees, std::int64_t seed, int K,
                      const std::string& stacks_dir, const std::string& out_raw) {
  const std::string out = resolve_out(out_raw);
  std::vector<QualityExample> examples;
  for (const std::string& path : feature_csvs) {
    std::vector<QualityExample> part = quality_examples_from_csv(read_text_file(path), K);
    examples.insert(examples.end(), part.begin(), part.end());
  }
  fs::create_directories(out);
  nlohmann::json cfg;
  cfg["mode"] = mode_str;
  cfg["regressor"] = regressor;
  cfg["seed"] = seed;
  std::vector<std::string> outs;
  if (regressor == "rf") {
    ForestParams params;
    params.n_trees = n_trees;
    params.seed = static_cast<std::uint64_t>(seed);
    const Forest forest =
        train_quality_rf(examples, feature_mode_from_name(mode_str), K, params);
    const std::string path = (fs::path(out) / "forest.json").string();
    save_forest(path, forest);
    outs.push_back(path);
    std::cout << "forest (" << forest.trees.size() << " trees) -> " << path << "\n";
  } else if (regressor == "cnn") {
    if (stacks_dir.empty()) throw ConfigError("cnn training needs --stacks");
    int extent = 0;
    for (QualityExample& ex : examples) {
      const std::string path = (fs::path(stacks_dir) / ("s" + std::to_string(ex.patch_id) +
                                                        "_" + ex.availability.name() + ".raw"))
                                   .string();
      const std::vector<float> raw = read_f32_file(path);
      const std::size_t e = static_cast<std::size_t>(std::sqrt(raw.size() / 2.0));
      if (2 * e * e != raw.size()) throw MissingInputError("bad map stack: " + path);
      extent = static_cast<int>(e);
      ex.map_stack = Tensor({2, e, e});
      for (std::size_t i = 0; i < raw.size(); ++i) ex.map_stack[i] = raw[i];
    }
    QNet net = build_qnet(static_cast<std::uint64_t>(seed), extent);
    QNetTrainConfig qc;
    qc.seed = static_cast<std::uint64_t>(seed);
    const QNetTrainStats stats = train_quality_cnn(net, examples, qc);
    const std::string path = (fs::path(out) / "qnet.ckpt").string();
    save_qnet(path, net);
    outs.push_back(path);
    std::cout << "qnet (" << net.param_count() << " params, final MSE "
              << format_double(stats.epoch_mse.back()) << ") -> " << path << "\n";
  } else {
    throw ConfigError("unknown regressor: " + regressor);
  }
  finalize_manifest(out, "train-quality", cfg.dump(),
                    std::vector<std::string>(feature_csvs.begin(), feature_csvs.end()), outs);
  return 0;
}

int cmd_evaluate_crossval(const std::string& config_path, const std::string& out_raw) {
  const std::string out = resolve_out(out_raw);
  const std::string cfg_text = read_text_file(config_path);
  const CrossvalConfig cfg = crossval_config_from_json(cfg_text);
  const auto t0 = std::chrono::steady_clock::now();
  const CrossvalResult result = run_crossval(cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(out);
  const std::string rec_path = (fs::path(out) / "records.csv").string();
  const std::string pred_path = (fs::path(out) / "predictions.csv").string();
  const std::string summary_path = (fs::path(out) / "summary.json").string();
  write_text_file(rec_path, eval_records_to_csv(result.records));
  write_text_file(pred_path, predictions_to_csv(result.predictions));
  write_text_file(summary_path, crossval_summary_json(cfg, result) + "\n");

  std::cout << "crossval (" << cfg.folds << " folds) in " << format_double(secs) << " s\n";
  std::cout << "  rmse rf_e=" << format_double(result.eval_e.rmse_all)
            << " rf_a=" << format_double(result.eval_a.rmse_all)
            << " rf_both=" << format_double(result.eval_both.rmse_all);
  if (result.eval_cnn) std::cout << " cnn=" << format_double(result.eval_cnn->rmse_all);
  std::cout << "\n  r2 of per-combination means (rf_both): "
            << format_double(result.eval_both.r2_of_means) << "\n";
  finalize_manifest(out, "evaluate-crossval", crossval_config_to_json(cfg), {config_path},
                    {rec_path, pred_path, summary_path});
  return 0;
}

int cmd_evaluate_predictions(const std::string& pred_path, const std::string& out_raw) {
  const std::string out = resolve_out(out_raw);
  const std::vector<PredictionRow> rows = predictions_from_csv(read_text_file(pred_path));
  std::map<std::string, std::vector<PredictionRow>> by_regressor;
  for (const PredictionRow& r : rows) by_regressor[r.regressor].push_back(r);

  nlohmann::json j;
  for (const auto& [name, group] : by_regressor) {
    const QualityEval eval = evaluate_quality(group);
    j[name] = {{"rmse_all", eval.rmse_all}, {"r2_of_means", eval.r2_of_means}};
    std::cout << name << ": rmse " << format_double(eval.rmse_all) << ", r2 of means "
              << format_double(eval.r2_of_means) << "\n";
  }
  fs::create_directories(out);
  const std::string path = (fs::path(out) / "metrics.json").string();
  write_text_file(path, j.dump(2) + "\n");
  finalize_manifest(out, "evaluate", "{}", {pred_path}, {path});
  return 0;
}

int cmd_report(const std::string& fig, const std::string& in_dir, const std::string& regressor,
               const std::string& records_path, const std::string& reference_path,
               const std::string& bundle_path, const std::string& data_dir,
               const std::string& out_path_raw) {
  const std::string out_path = resolve_out(out_path_raw);
  std::string svg;
  if (fig == "quality-scatter") {
    const std::vector<PredictionRow> rows = predictions_from_csv(
        read_text_file((fs::path(in_dir) / "predictions.csv").string()));
    std::vector<PredictionRow> selected;
    for (const PredictionRow& r : rows) {
      if (r.regressor == regressor) selected.push_back(r);
    }
    if (selected.empty()) throw ConfigError("no predictions for regressor " + regressor);
    svg = fig_quality_scatter(evaluate_quality(selected), regressor);
  } else if (fig == "rmse-bars") {
    const std::vector<PredictionRow> rows = predictions_from_csv(
        read_text_file((fs::path(in_dir) / "predictions.csv").string()));
    std::map<std::string, std::map<int, std::vector<PredictionRow>>> groups;
    for (const PredictionRow& r : rows) groups[r.regressor][r.fold].push_back(r);
    std::vector<std::pair<std::string, std::vector<double>>> fold_rmses;
    for (const auto& [name, folds] : groups) {
      std::vector<double> values;
      for (const auto& [fold, rs] : folds) {
        std::vector<double> pred, truth;
        for (const PredictionRow& r : rs) {
          pred.push_back(r.q_pred);
          truth.push_back(r.q_true);
        }
        values.push_back(rmse(pred, truth));
      }
      fold_rmses.emplace_back(name, values);
    }
    svg = fig_rmse_bars(fold_rmses);
  } else if (fig == "delta-f1") {
    const std::vector<EvalRecord> model = eval_records_from_csv(read_text_file(records_path));
    const std::vector<EvalRecord> reference =
        eval_records_from_csv(read_text_file(reference_path));
    const RelativeF1 rel = relative_f1(model, reference);
    std::vector<double> deltas;
    for (const auto& [k, v] : rel.deltas) deltas.push_back(v);
    const std::string label =
        model.empty() ? "model" : model.front().model + " - " + reference.front().model;
    svg = fig_delta_f1({{label, deltas}});
  } else if (fig == "uncertainty-maps") {
    const UncertaintyBundle bundle = load_bundle(bundle_path);
    const std::vector<MarkerPatch> patches = load_dataset(data_dir);
    const MarkerPatch* found = nullptr;
    for (const MarkerPatch& p : patches) {
      if (p.patch_id == bundle.patch_id) found = &p;
    }
    if (!found) throw MissingInputError("bundle patch id not present in dataset");
    svg = fig_uncertainty_maps(bundle, found->mask);
  } else {
    throw ConfigError("unknown figure: " + fig);
  }
  fs::create_directories(fs::path(out_path).parent_path().empty()
                             ? "."
                             : fs::path(out_path).parent_path().string());
  write_text_file(out_path, svg);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_selfcheck() {
  bool ok = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (const CheckResult& r : run_gradient_checks()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (worst rel err "
              << format_double(r.worst) << ")\n";
    ok = ok && r.passed;
  }
  for (const CheckResult& r : run_oracle_checks()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) std::cout << " [" << r.detail << "]";
    std::cout << "\n";
    ok = ok && r.passed;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << (ok ? "selfcheck passed" : "selfcheck FAILED") << " in " << format_double(secs)
            << " s\n";
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segmentation quality estimation for multi-channel microscopy"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "cap worker threads (0 = hardware)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  std::string gen_spec, gen_out = "out/dataset";
  std::int64_t gen_seed = -1;
  gen->add_option("--spec", gen_spec, "dataset spec JSON");
  gen->add_option("--seed", gen_seed, "override the dataset spec seed");
  gen->add_option("--out", gen_out, "output directory");

  // train-seg
  auto* tr = app.add_subcommand("train-seg", "train a segmentation model");
  std::string tr_data, tr_scenario = "case6", tr_variant = "combined", tr_out = "out/seg";
  double tr_p = 0.2, tr_lr = 1e-3, tr_weight = 1.0;
  bool tr_last_only = false;
  int tr_epochs = 4, tr_lossT = 50, tr_val_sample = -1, tr_depth = 3, tr_base = 16;
  std::int64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--scenario", tr_scenario, "full | case6 | scenario JSON path");
  tr->add_option("--variant", tr_variant, "plain | epistemic | aleatoric | combined");
  tr->add_option("--p", tr_p, "dropout probability");
  tr->add_flag("--last-only", tr_last_only, "dropout only before the final layer");
  tr->add_option("--epochs", tr_epochs);
  tr->add_option("--lr", tr_lr);
  tr->add_option("--T", tr_lossT, "noise samples in the variance-head loss");
  tr->add_option("--class-weight", tr_weight, "foreground class weight");
  tr->add_option("--seed", tr_seed);
  tr->add_option("--val-sample", tr_val_sample, "override validation sample id");
  tr->add_option("--depth", tr_depth);
  tr->add_option("--base-width", tr_base);
  tr->add_option("--out", tr_out, "output directory");

  // infer
  auto* inf = app.add_subcommand("infer", "run inference and write bundles");
  std::string inf_model, inf_data, inf_split = "test", inf_combo = "all", inf_mode = "mc",
              inf_out = "out/infer";
  int inf_T = 50;
  std::int64_t inf_seed = 0;
  bool inf_bundles = false;
  inf->add_option("--model", inf_model)->required();
  inf->add_option("--data", inf_data)->required();
  inf->add_option("--split", inf_split, "train | val | test");
  inf->add_option("--combo", inf_combo, "marker combination (e.g. m135) or 'all'");
  inf->add_option("--mode", inf_mode, "mc | det");
  inf->add_option("--T", inf_T);
  inf->add_option("--seed", inf_seed);
  inf->add_flag("--bundles", inf_bundles, "write one bundle file per prediction");
  inf->add_option("--out", inf_out);

  // build-quality-set
  auto* bq = app.add_subcommand("build-quality-set", "build quality-regression examples");
  std::string bq_model, bq_data, bq_split = "val", bq_out = "out/quality_set";
  int bq_T = 50, bq_fold = 0;
  std::int64_t bq_seed = 0;
  bq->add_option("--model", bq_model)->required();
  bq->add_option("--data", bq_data)->required();
  bq->add_option("--split", bq_split);
  bq->add_option("--T", bq_T);
  bq->add_option("--seed", bq_seed);
  bq->add_option("--fold", bq_fold);
  bq->add_option("--out", bq_out);

  // train-quality
  auto* tq = app.add_subcommand("train-quality", "train a quality regressor");
  std::vector<std::string> tq_features;
  std::string tq_mode = "both", tq_regressor = "rf", tq_stacks, tq_out = "out/quality";
  int tq_trees = 128, tq_K = 5;
  std::int64_t tq_seed = 0;
  tq->add_option("--features", tq_features, "feature CSV(s)")->required();
  tq->add_option("--mode", tq_mode, "e_only | a_only | both");
  tq->add_option("--regressor", tq_regressor, "rf | cnn");
  tq->add_option("--trees", tq_trees);
  tq->add_option("--K", tq_K, "marker count of the feature table");
  tq->add_option("--stacks", tq_stacks, "map-stack dir (cnn only)");
  tq->add_option("--seed", tq_seed);
  tq->add_option("--out", tq_out);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "run the cross-validated experiment or score CSVs");
  std::string ev_config, ev_pred, ev_out = "out/eval";
  ev->add_option("--config", ev_config, "crossval config JSON (runs the full experiment)");
  ev->add_option("--pred", ev_pred, "existing predictions CSV to score");
  ev->add_option("--out", ev_out);

  // report
  auto* rp = app.add_subcommand("report", "emit SVG figures");
  std::string rp_fig, rp_in, rp_regressor = "rf_both", rp_records, rp_reference, rp_bundle,
              rp_data, rp_out = "out/fig.svg";
  rp->add_option("--fig", rp_fig,
                 "quality-scatter | rmse-bars | delta-f1 | uncertainty-maps")
      ->required();
  rp->add_option("--in", rp_in, "crossval output directory");
  rp->add_option("--regressor", rp_regressor);
  rp->add_option("--records", rp_records, "model records CSV (delta-f1)");
  rp->add_option("--reference", rp_reference, "reference records CSV (delta-f1)");
  rp->add_option("--bundle", rp_bundle, "bundle file (uncertainty-maps)");
  rp->add_option("--data", rp_data, "dataset dir (uncertainty-maps)");
  rp->add_option("--out", rp_out, "output SVG path");

  auto* sc = app.add_subcommand("selfcheck", "run gradient and oracle suites");

  CLI11_PARSE(app, argc, argv);
  set_thread_count(threads);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_spec, gen_seed, gen_out);
    if (tr->parsed())
      return cmd_train_seg(tr_data, tr_scenario, tr_variant, tr_p, tr_last_only, tr_epochs,
                           tr_lr, tr_lossT, tr_weight, tr_seed, tr_val_sample, tr_depth,
                           tr_base, tr_out);
    if (inf->parsed())
      return cmd_infer(inf_model, inf_data, inf_split, inf_combo, inf_mode, inf_T, inf_seed,
                       inf_bundles, inf_out);
    if (bq->parsed())
      return cmd_build_quality_set(bq_model, bq_data, bq_split, bq_T, bq_seed, bq_fold, bq_out);
    if (tq->parsed())
      return cmd_train_quality(tq_features, tq_mode, tq_regressor, tq_trees, tq_seed, tq_K,
                               tq_stacks, tq_out);
    if (ev->parsed()) {
      if (!ev_config.empty()) return cmd_evaluate_crossval(ev_config, ev_out);
      if (!ev_pred.empty()) return cmd_evaluate_predictions(ev_pred, ev_out);
      throw ConfigError("evaluate needs --config or --pred");
    }
    if (rp->parsed())
      return cmd_report(rp_fig, rp_in, rp_regressor, rp_records, rp_reference, rp_bundle,
                        rp_data, rp_out);
    if (sc->parsed()) return cmd_selfcheck();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
