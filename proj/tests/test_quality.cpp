#include <doctest.h>

#include <cmath>
#include <set>

#include "fmseg/crossval.hpp"
#include "fmseg/quality.hpp"
#include "fmseg/report.hpp"

using namespace fmseg;

namespace {

// a small end-to-end fixture shared by the pipeline tests
struct TinyPipeline {
  DatasetSpec spec;
  ArchConfig arch;
  SegModel model;
  std::vector<MarkerPatch> patches;

  TinyPipeline() : model(make_model()) {
    spec = make_spec();
    patches = generate_dataset(spec);
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 3;
    tc.loss_T = 8;
    train_seg_model(model, patches, tc);
    model.set_requires_grad(false);
  }

  static DatasetSpec make_spec() {
    DatasetSpec spec;
    spec.patches_per_sample.assign(8, 2);
    spec.patch_extent = 16;
    spec.seed = 21;
    spec.apply_defaults();
    return spec;
  }

  static SegModel make_model() {
    ArchConfig arch;
    arch.depth = 2;
    arch.base_width = 4;
    arch.patch_extent = 16;
    arch.K = 5;
    return build_model(arch, Variant::combined, 0.2, 7);
  }
};

}  // namespace

TEST_CASE("quality dataset covers every patch x combination") {
  TinyPipeline tp;
  QualityBuildOptions opts;
  opts.T = 3;
  const auto val = build_quality_dataset(tp.model, tp.patches, Split::val, opts,
                                         RngStream(5, "q"));
  // 1 val sample x 2 patches x 31 combinations
  CHECK(val.size() == 2 * 31);
  std::set<std::pair<int, std::uint32_t>> keys;
  for (const QualityExample& ex : val) {
    keys.insert({ex.patch_id, ex.availability.canonical()});
    CHECK(ex.q >= 0.0);
    CHECK(ex.q <= 1.0);
    CHECK(ex.features.size() == 263);
  }
  CHECK(keys.size() == val.size());
}

TEST_CASE("quality dataset refuses patches without the full channel set") {
  TinyPipeline tp;
  QualityBuildOptions opts;
  opts.T = 2;
  std::vector<MarkerPatch> broken = tp.patches;
  for (MarkerPatch& p : broken) {
    if (p.split == Split::val) p.availability = MarkerSet::parse("m12");
  }
  CHECK_THROWS_AS(
      build_quality_dataset(tp.model, broken, Split::val, opts, RngStream(1, "q")),
      ConfigError);
}

TEST_CASE("quality dataset is deterministic given the stream") {
  TinyPipeline tp;
  QualityBuildOptions opts;
  opts.T = 3;
  const auto a = build_quality_dataset(tp.model, tp.patches, Split::val, opts, RngStream(5, "q"));
  const auto b = build_quality_dataset(tp.model, tp.patches, Split::val, opts, RngStream(5, "q"));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].q == b[i].q);
    CHECK(a[i].features == b[i].features);
  }
}

TEST_CASE("the default sampling count follows the working configuration") {
  CHECK(QualityBuildOptions().T == 50);
}

TEST_CASE("mode selection slices the stored layout") {
  std::vector<double> both(263, 0.0);
  for (std::size_t i = 0; i < both.size(); ++i) both[i] = static_cast<double>(i);
  const auto e = select_mode_features(both, FeatureMode::e_only, 5);
  REQUIRE(e.size() == 147);
  CHECK(e[0] == 0.0);
  CHECK(e[115] == 115.0);
  CHECK(e[116] == 232.0);  // one-hot block follows the map block
  const auto a = select_mode_features(both, FeatureMode::a_only, 5);
  CHECK(a[0] == 116.0);
  CHECK(a[146] == 262.0);
  CHECK(select_mode_features(both, FeatureMode::both, 5) == both);
}

TEST_CASE("constant targets give a constant forest") {
  TinyPipeline tp;
  QualityBuildOptions opts;
  opts.T = 2;
  auto examples = build_quality_dataset(tp.model, tp.patches, Split::val, opts,
                                        RngStream(6, "q2"));
  for (QualityExample& ex : examples) ex.q = 0.5;  // representable: mean of leaves is exact
  ForestParams params;
  params.n_trees = 8;
  params.seed = 2;
  const Forest f = train_quality_rf(examples, FeatureMode::both, 5, params);
  for (const QualityExample& ex : examples)
    CHECK(predict_quality_rf(f, ex, FeatureMode::both, 5) == 0.5);

  for (QualityExample& ex : examples) ex.q = 0.4;
  const Forest g = train_quality_rf(examples, FeatureMode::both, 5, params);
  for (const QualityExample& ex : examples)
    CHECK(predict_quality_rf(g, ex, FeatureMode::both, 5) ==
          doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("refitting with the same seed reproduces the forest") {
  TinyPipeline tp;
  QualityBuildOptions opts;
  opts.T = 2;
  const auto examples = build_quality_dataset(tp.model, tp.patches, Split::val, opts,
                                              RngStream(7, "q3"));
  ForestParams params;
  params.n_trees = 16;
  params.seed = 11;
  const Forest a = train_quality_rf(examples, FeatureMode::e_only, 5, params);
  const Forest b = train_quality_rf(examples, FeatureMode::e_only, 5, params);
  CHECK(forest_to_json(a) == forest_to_json(b));
}

TEST_CASE("the quality CNN fits a constant target through its biases") {
  RngStream rng(9, "qnet_const");
  std::vector<QualityExample> examples(6);
  for (QualityExample& ex : examples) {
    ex.map_stack = Tensor({2, 64, 64});
    for (double& v : ex.map_stack.values()) v = rng.uniform(0.0, 0.4);
    ex.q = 0.5;
  }
  QNet net = build_qnet(3, 64);
  QNetTrainConfig cfg;
  cfg.epochs = 60;
  cfg.seed = 4;
  const QNetTrainStats stats = train_quality_cnn(net, examples, cfg);
  CHECK(stats.epoch_mse.back() < 0.01);
  // output is a single scalar
  CHECK(std::isfinite(predict_quality_cnn(net, examples[0].map_stack)));
}

TEST_CASE("the quality CNN is reproducible given its seed") {
  RngStream rng(10, "qnet_repro");
  std::vector<QualityExample> examples(4);
  for (QualityExample& ex : examples) {
    ex.map_stack = Tensor({2, 64, 64});
    for (double& v : ex.map_stack.values()) v = rng.uniform(0.0, 0.4);
    ex.q = rng.uniform();
  }
  QNetTrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 8;
  QNet a = build_qnet(5, 64);
  QNet b = build_qnet(5, 64);
  const double la = train_quality_cnn(a, examples, cfg).epoch_mse.back();
  const double lb = train_quality_cnn(b, examples, cfg).epoch_mse.back();
  CHECK(la == lb);
}

TEST_CASE("qnet parameter count stays small") {
  const QNet net = build_qnet(1, 64);
  CHECK(net.param_count() > 10000);
  CHECK(net.param_count() < 100000);
}

TEST_CASE("map stacks resize up and crop down to the CNN extent") {
  UncertaintyBundle b;
  b.u_e = Tensor({16, 16});
  b.u_a = Tensor({16, 16});
  for (std::size_t i = 0; i < b.u_e.size(); ++i) b.u_e[i] = static_cast<double>(i);
  b.has_u_a = true;
  const Tensor up = stack_maps_for_cnn(b, 32);
  CHECK(up.shape() == std::vector<std::size_t>{2, 32, 32});
  CHECK(up.at(0, 0, 0) == b.u_e.at2(0, 0));
  CHECK(up.at(0, 31, 31) == b.u_e.at2(15, 15));
  CHECK(up.at(0, 1, 0) == b.u_e.at2(0, 0));  // nearest neighbor duplicates

  UncertaintyBundle big;
  big.u_e = Tensor({64, 64});
  big.u_a = Tensor({64, 64});
  for (std::size_t i = 0; i < big.u_e.size(); ++i) big.u_e[i] = static_cast<double>(i);
  big.has_u_a = true;
  const Tensor crop = stack_maps_for_cnn(big, 32);
  CHECK(crop.shape() == std::vector<std::size_t>{2, 32, 32});
  CHECK(crop.at(0, 0, 0) == big.u_e.at2(16, 16));  // centered window
}

TEST_CASE("evaluate_quality aggregates folds per combination") {
  std::vector<PredictionRow> rows;
  auto push = [&rows](int patch, const char* combo, int fold, double q_true, double q_pred) {
    PredictionRow r;
    r.patch_id = patch;
    r.combo = MarkerSet::parse(combo);
    r.fold = fold;
    r.q_true = q_true;
    r.q_pred = q_pred;
    r.regressor = "rf_both";
    rows.push_back(r);
  };
  // perfect predictor
  push(0, "m1", 0, 0.2, 0.2);
  push(0, "m1", 1, 0.4, 0.4);
  push(0, "m2", 0, 0.6, 0.6);
  push(0, "m2", 1, 0.8, 0.8);
  QualityEval eval = evaluate_quality(rows);
  CHECK(eval.rmse_all == 0.0);
  CHECK(eval.r2_of_means == 1.0);
  REQUIRE(eval.per_combination.size() == 2);
  CHECK(eval.per_combination[0].mean_true == doctest::Approx(0.3));
  CHECK(eval.per_combination[0].n_folds == 2);

  // constant predictor at the global mean: r2 of means collapses to zero
  rows.clear();
  push(0, "m1", 0, 0.2, 0.5);
  push(0, "m2", 0, 0.8, 0.5);
  eval = evaluate_quality(rows);
  CHECK(eval.r2_of_means == doctest::Approx(0.0).epsilon(1e-12));

  // the hand-computable four-point case
  rows.clear();
  push(0, "m1", 0, 0.2, 0.3);
  push(1, "m1", 0, 0.4, 0.3);
  push(0, "m2", 0, 0.6, 0.7);
  push(1, "m2", 0, 0.8, 0.7);
  eval = evaluate_quality(rows);
  CHECK(eval.rmse_all == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("prediction tables round-trip through CSV") {
  std::vector<PredictionRow> rows;
  RngStream rng(13, "pred_csv");
  for (int i = 0; i < 10; ++i) {
    PredictionRow r;
    r.patch_id = i;
    r.combo = MarkerSet::from_bits(static_cast<std::uint32_t>(1 + rng.uniform_int(31)));
    r.fold = static_cast<int>(rng.uniform_int(4));
    r.q_true = rng.uniform();
    r.q_pred = rng.uniform();
    r.regressor = i % 2 ? "rf_e" : "cnn";
    rows.push_back(r);
  }
  const auto back = predictions_from_csv(predictions_to_csv(rows));
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].patch_id == rows[i].patch_id);
    CHECK(back[i].combo == rows[i].combo);
    CHECK(back[i].q_true == rows[i].q_true);
    CHECK(back[i].q_pred == rows[i].q_pred);
    CHECK(back[i].regressor == rows[i].regressor);
  }
}

TEST_CASE("feature tables round-trip through CSV") {
  TinyPipeline tp;
  QualityBuildOptions opts;
  opts.T = 2;
  auto examples = build_quality_dataset(tp.model, tp.patches, Split::val, opts,
                                        RngStream(15, "q4"));
  for (std::size_t i = 0; i < examples.size(); ++i) examples[i].fold = static_cast<int>(i % 4);
  const std::string csv = quality_examples_to_csv(examples, 5);
  const auto back = quality_examples_from_csv(csv, 5);
  REQUIRE(back.size() == examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    CHECK(back[i].q == examples[i].q);
    CHECK(back[i].patch_id == examples[i].patch_id);
    CHECK(back[i].fold == examples[i].fold);
    CHECK(back[i].availability == examples[i].availability);
    CHECK(back[i].features == examples[i].features);
  }
}

TEST_CASE("a small cross-validated run keeps test data out of training") {
  CrossvalConfig cfg;
  cfg.data_spec = TinyPipeline::make_spec();
  cfg.arch.depth = 2;
  cfg.arch.base_width = 4;
  cfg.arch.patch_extent = 16;
  cfg.arch.K = 5;
  cfg.train.epochs = 1;
  cfg.train.loss_T = 4;
  cfg.T_quality = 2;
  cfg.rf.n_trees = 8;
  cfg.folds = 2;
  cfg.master_seed = 31;

  const CrossvalResult result = run_crossval(cfg);

  // record count = test patches x combinations x folds
  CHECK(result.records.size() == 4 * 31 * 2);

  // test patches come from the fixed test samples, never from training
  const std::vector<int> vals = fold_val_samples(cfg.data_spec, cfg.folds, cfg.master_seed);
  std::set<int> val_set(vals.begin(), vals.end());
  for (const PredictionRow& r : result.predictions) {
    const int sample = r.patch_id / 2;  // 2 patches per sample in this spec
    CHECK(sample >= 6);                 // samples 6 and 7 are the test split
    CHECK(val_set.count(sample) == 0);
  }

  // determinism: the same config reproduces every output byte
  const CrossvalResult again = run_crossval(cfg);
  CHECK(predictions_to_csv(result.predictions) == predictions_to_csv(again.predictions));
  CHECK(eval_records_to_csv(result.records) == eval_records_to_csv(again.records));

  // report figures render from the result and are reproducible
  const std::string svg = fig_quality_scatter(result.eval_both, "rf_both");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg == fig_quality_scatter(result.eval_both, "rf_both"));
}
