// Acceptance suite: one pass/fail line per criterion, covering the exact
// property suites and the statistical end-to-end checks on the synthetic
// dataset. Master seed for the end-to-end runs: 20260808.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <vector>

#include "fmseg/crossval.hpp"
#include "fmseg/io_util.hpp"
#include "fmseg/metrics.hpp"
#include "fmseg/naive_ref.hpp"
#include "fmseg/report.hpp"
#include "fmseg/selfcheck.hpp"

using namespace fmseg;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kMasterSeed = 20260808;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double elapsed(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- criterion 1: gradient suite -------------------------------------------
Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradient_checks(20, 1e-4);
  double worst = 0.0;
  bool ok = true;
  for (const CheckResult& r : results) {
    worst = std::max(worst, r.worst);
    ok = ok && r.passed;
  }
  const double secs = elapsed(t0);
  ok = ok && secs < 60.0;
  return {ok, "worst rel err " + format_double(worst) + " over " +
                  std::to_string(results.size()) + " kinds x 20 seeds, " +
                  format_double(secs) + " s"};
}

// ---- criterion 2: degenerate and symmetric variance-head loss --------------
Outcome criterion_aleatoric_cases() {
  RngStream rng(kMasterSeed, "acc_aleatoric");
  Tensor z({2, 4, 4});
  for (double& v : z.values()) v = rng.uniform(-1.5, 1.5);
  Tensor labels({2, 4, 4});
  for (std::size_t p = 0; p < 16; ++p) labels[(rng.uniform_int(2)) * 16 + p] = 1.0;

  const double ce = cross_entropy(softmax_axis0(constant(z)), labels)->value[0];
  const double al =
      aleatoric_loss(constant(z), constant(Tensor({16}, -1e9)), labels, 64,
                     rng.substream("noise"))
          ->value[0];
  const double degenerate_gap = std::abs(al - ce);

  Tensor z0({2, 1, 1});
  Tensor onehot({2, 1, 1});
  onehot[0] = 1.0;
  const double sym = aleatoric_loss(constant(z0), constant(Tensor({1}, 0.0)), onehot, 10000,
                                    rng.substream("sym"))
                         ->value[0];
  const double sym_gap = std::abs(sym - std::log(2.0));

  const bool ok = degenerate_gap < 1e-6 && sym_gap < 0.01;
  return {ok, "degenerate gap " + format_double(degenerate_gap) + ", ln2 gap " +
                  format_double(sym_gap)};
}

// ---- criterion 3: epistemic statistics --------------------------------------
Outcome criterion_epistemic() {
  ArchConfig cfg;
  cfg.depth = 2;
  cfg.base_width = 4;
  cfg.patch_extent = 16;
  cfg.K = 3;
  SegModel model = build_model(cfg, Variant::combined, 0.0, 3);
  RngStream prng(kMasterSeed, "acc_epistemic");
  Tensor patch({3, 16, 16});
  for (double& v : patch.values()) v = prng.uniform();
  const UncertaintyBundle b =
      combined_predict(model, patch, MarkerSet::full(3), 5, prng.substream("mc"));
  bool zero_ue = true;
  for (std::size_t i = 0; i < b.u_e.size(); ++i) zero_ue = zero_ue && b.u_e[i] == 0.0;

  // single linear unit with dropout: two-point distribution of the sigmoid
  const double p = 0.25, w = 1.1, a = 1.0;
  const double hi = 1.0 / (1.0 + std::exp(-w * a / (1.0 - p)));
  const double lo = 0.5;
  const double mean = (1.0 - p) * hi + p * lo;
  const double closed =
      std::sqrt((1.0 - p) * (hi - mean) * (hi - mean) + p * (lo - mean) * (lo - mean));
  double sum = 0.0, sum2 = 0.0;
  const int T = 10000;
  NoGradGuard ng;
  for (int t = 0; t < T; ++t) {
    RngStream sub = prng.substream("unit", static_cast<std::uint64_t>(t));
    const double v = sigmoid(dropout(constant(Tensor({1}, w * a)), p, true, sub))->value[0];
    sum += v;
    sum2 += v * v;
  }
  const double m = sum / T;
  const double sd = std::sqrt(std::max(0.0, sum2 / T - m * m));
  const double rel = std::abs(sd - closed) / closed;

  const bool ok = zero_ue && rel < 0.03;
  return {ok, std::string("p=0 u_e ") + (zero_ue ? "all zero" : "NONZERO") +
                  ", Bernoulli SD rel err " + format_double(rel)};
}

// ---- criterion 4: feature oracle --------------------------------------------
Outcome criterion_features() {
  RngStream rng(kMasterSeed, "acc_features");
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 32 + rng.uniform_int(500);
    Tensor map({n});
    for (double& v : map.values()) v = rng.uniform(0.0, 1.0);
    const auto p1 = percentiles(map);
    const auto p2 = naive::percentiles(map.values());
    for (std::size_t i = 0; i < 99; ++i) worst = std::max(worst, std::abs(p1[i] - p2[i]));
    const auto h1 = cumulative_hist(map);
    const auto h2 = naive::cumulative_hist(map.values());
    for (std::size_t i = 0; i < 13; ++i) worst = std::max(worst, std::abs(h1[i] - h2[i]));
    const auto m1 = moments(map);
    const auto m2 = naive::moments(map.values());
    for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(m1[i] - m2[i]));
  }
  bool const_ok = true;
  const Tensor cmap({64}, 0.3125);
  for (double v : percentiles(cmap)) const_ok = const_ok && v == 0.3125;
  const auto cm = moments(cmap);
  const_ok = const_ok && cm[0] == 0.3125 && cm[1] == 0.0 && cm[2] == 0.0 && cm[3] == 0.0;

  const bool ok = worst < 1e-12 && const_ok;
  return {ok, "worst brute-force gap " + format_double(worst) + ", constant map " +
                  (const_ok ? "exact" : "WRONG")};
}

// ---- criterion 5: random-forest oracle --------------------------------------
Outcome criterion_forest() {
  RngStream rng(kMasterSeed, "acc_forest");
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + rng.uniform_int(6);
    DataMatrix X;
    X.rows = n;
    X.cols = 3;
    std::vector<double> y;
    const bool integer_instance = trial % 2 == 0;
    for (std::size_t i = 0; i < n * 3; ++i)
      X.values.push_back(integer_instance ? static_cast<double>(rng.uniform_int(4))
                                          : rng.uniform());
    for (std::size_t i = 0; i < n; ++i)
      y.push_back(integer_instance ? static_cast<double>(rng.uniform_int(5)) : rng.uniform());
    std::vector<std::uint32_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint32_t>(i);
    const SplitChoice got = best_split(X, y, rows, {0, 1, 2});
    const SplitChoice want = naive::best_split(X, y, rows);
    if (got.found != want.found ||
        (got.found && (got.feature != want.feature || got.threshold != want.threshold)))
      ++mismatches;
  }

  DataMatrix X;
  X.rows = 40;
  X.cols = 5;
  X.values.resize(200);
  for (double& v : X.values) v = rng.uniform();
  std::vector<double> y(40);
  for (double& v : y) v = rng.uniform();
  ForestParams params;
  params.seed = 77;
  params.n_trees = 32;
  const Forest f = fit_forest(X, y, params);
  bool mean_exact = true;
  for (std::size_t r = 0; r < X.rows; ++r) {
    double sum = 0.0;
    for (const Tree& t : f.trees) sum += t.predict(X.row(r));
    mean_exact = mean_exact && f.predict(X.row(r), 5) == sum / 32.0;
  }

  set_thread_count(1);
  const std::string j1 = forest_to_json(fit_forest(X, y, params));
  set_thread_count(2);
  const std::string j2 = forest_to_json(fit_forest(X, y, params));
  set_thread_count(4);
  const std::string j4 = forest_to_json(fit_forest(X, y, params));
  set_thread_count(0);
  const bool thread_stable = j1 == j2 && j1 == j4;

  const bool ok = mismatches == 0 && mean_exact && thread_stable;
  return {ok, std::to_string(mismatches) + "/1000 split mismatches, mean-of-trees " +
                  (mean_exact ? "bit-exact" : "WRONG") + ", thread-stable " +
                  (thread_stable ? "yes" : "NO")};
}

// ---- criterion 6: F1 oracle --------------------------------------------------
Outcome criterion_f1() {
  RngStream rng(kMasterSeed, "acc_f1");
  int mismatches = 0;
  const std::size_t e = 16;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> mask(e * e), pred(e * e);
    const double pm = rng.uniform(0.0, 0.5);
    const double pp = rng.uniform(0.0, 0.5);
    Tensor mask_t({e, e});
    Tensor prob_t({2, e, e});
    for (std::size_t i = 0; i < e * e; ++i) {
      mask[i] = rng.bernoulli(pm) ? 1 : 0;
      pred[i] = rng.bernoulli(pp) ? 1 : 0;
      mask_t[i] = mask[i];
      prob_t[i] = pred[i] ? 0.3 : 0.7;
      prob_t[e * e + i] = pred[i] ? 0.7 : 0.3;
    }
    if (f1_score(mask_t, prob_t) != naive::f1_score(mask, pred)) ++mismatches;
  }

  // the worked 6/9 example
  Tensor mask_t({2, 5});
  Tensor prob_t({2, 2, 5});
  const int mask_bits[10] = {1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  const int pred_bits[10] = {0, 1, 1, 1, 1, 1, 0, 0, 0, 0};
  for (std::size_t i = 0; i < 10; ++i) {
    mask_t[i] = mask_bits[i];
    prob_t[i] = pred_bits[i] ? 0.0 : 1.0;
    prob_t[10 + i] = pred_bits[i] ? 1.0 : 0.0;
  }
  const double worked = f1_score(mask_t, prob_t);
  const bool worked_ok = std::abs(worked - 6.0 / 9.0) < 1e-15;

  const bool ok = mismatches == 0 && worked_ok;
  return {ok, std::to_string(mismatches) + "/1000 mismatches, 6/9 example -> " +
                  format_double(worked)};
}

// ---- criteria 7 and 9: end-to-end pipeline ----------------------------------
CrossvalConfig acceptance_pipeline_config() {
  CrossvalConfig cfg;
  cfg.data_spec.patch_extent = 32;
  cfg.data_spec.patches_per_sample.assign(8, 12);
  cfg.data_spec.seed = kMasterSeed;
  cfg.arch.depth = 3;
  cfg.arch.base_width = 8;
  cfg.arch.patch_extent = 32;
  cfg.arch.K = 5;
  cfg.variant = Variant::combined;
  cfg.dropout_p = 0.2;
  cfg.train.epochs = 16;
  cfg.train.loss_T = 50;
  cfg.T_quality = 16;
  cfg.folds = 4;
  cfg.master_seed = kMasterSeed;
  return cfg;
}

struct PipelineRun {
  CrossvalResult result;
  std::string records_csv;
  std::string predictions_csv;
  double seconds = 0.0;
};

PipelineRun run_pipeline() {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineRun run;
  run.result = run_crossval(acceptance_pipeline_config());
  run.records_csv = eval_records_to_csv(run.result.records);
  run.predictions_csv = predictions_to_csv(run.result.predictions);
  run.seconds = elapsed(t0);
  return run;
}

Outcome criterion_end_to_end(const PipelineRun& run, const fs::path& outdir) {
  const CrossvalResult& r = run.result;
  int both_wins = 0;
  for (const FoldSummary& f : r.folds) {
    if (f.rmse_both <= f.rmse_e && f.rmse_both <= f.rmse_a) ++both_wins;
  }
  const double r2m = r.eval_both.r2_of_means;

  write_text_file((outdir / "records.csv").string(), run.records_csv);
  write_text_file((outdir / "predictions.csv").string(), run.predictions_csv);
  write_text_file((outdir / "summary.json").string(),
                  crossval_summary_json(acceptance_pipeline_config(), r) + "\n");
  write_text_file((outdir / "quality_scatter.svg").string(),
                  fig_quality_scatter(r.eval_both, "rf_both"));

  const bool ok = r2m >= 0.7 && both_wins >= 3 && run.seconds <= 1800.0;
  std::string detail = "r2 of means " + format_double(r2m) + ", rmse(both)<=rmse(e),rmse(a) on " +
                       std::to_string(both_wins) + "/4 folds, " + format_double(run.seconds) +
                       " s";
  detail += " [rmse e/a/both:";
  for (const FoldSummary& f : r.folds)
    detail += " " + format_double(f.rmse_e) + "/" + format_double(f.rmse_a) + "/" +
              format_double(f.rmse_both);
  detail += "]";
  return {ok, detail};
}

// ---- criterion 8: segmentation sanity on the default dataset ----------------
Outcome criterion_seg_sanity(const fs::path& outdir) {
  DatasetSpec spec;
  spec.seed = kMasterSeed;
  spec.apply_defaults();
  std::vector<MarkerPatch> patches = generate_dataset(spec);
  apply_scenario(patches, scenario_case6());

  ArchConfig arch;  // working default: depth 3, base width 16, 64x64
  SegModel model = build_model(arch, Variant::combined, 0.2, kMasterSeed);
  TrainConfig tc;
  tc.epochs = 4;
  tc.seed = kMasterSeed;
  train_seg_model(model, patches, tc);
  model.set_requires_grad(false);

  // mean F1 over the full-marker combination on the test samples
  const MarkerSet full = MarkerSet::full(5);
  std::vector<const MarkerPatch*> test_patches;
  for (const MarkerPatch& p : patches) {
    if (p.split == Split::test) test_patches.push_back(&p);
  }
  RngStream rng(kMasterSeed, "acc_seg");
  std::vector<double> full_f1(test_patches.size());
  parallel_for_each(test_patches.size(), [&](std::size_t i) {
    const UncertaintyBundle b = combined_predict(model, test_patches[i]->channels, full, 8,
                                                 rng.substream("full", i));
    full_f1[i] = f1_from_prob_plane(test_patches[i]->mask, b.mean_prob);
  });
  double mean_f1 = 0.0;
  for (double v : full_f1) mean_f1 += v;
  mean_f1 /= static_cast<double>(full_f1.size());

  // paired delta F1 report: dropout at training only (deterministic inference)
  // versus MC sampling at inference, per (patch, combination)
  const std::vector<MarkerSet> combos = enumerate_combinations(5);
  const int report_T = 6;
  std::vector<EvalRecord> std_records(test_patches.size() * combos.size());
  std::vector<EvalRecord> mc_records(test_patches.size() * combos.size());
  parallel_for_each(std_records.size(), [&](std::size_t idx) {
    const std::size_t pi = idx / combos.size();
    const std::size_t ci = idx % combos.size();
    const MarkerPatch& patch = *test_patches[pi];
    const MarkerSet combo = combos[ci];
    const Tensor masked = mask_channels(patch.channels, combo);

    EvalRecord rec;
    rec.patch_id = patch.patch_id;
    rec.availability = combo;
    rec.fold = 0;

    const UncertaintyBundle det = deterministic_predict(model, masked, combo);
    rec.model = "standard_dropout";
    rec.f1 = f1_from_prob_plane(patch.mask, det.mean_prob);
    std_records[idx] = rec;

    const UncertaintyBundle mc =
        combined_predict(model, masked, combo, report_T,
                         rng.substream("mc", patch.patch_id, combo.canonical()));
    rec.model = "mc_dropout";
    rec.f1 = f1_from_prob_plane(patch.mask, mc.mean_prob);
    mc_records[idx] = rec;
  });

  const RelativeF1 rel = relative_f1(std_records, mc_records);
  write_text_file((outdir / "delta_f1_std_records.csv").string(),
                  eval_records_to_csv(std_records));
  write_text_file((outdir / "delta_f1_mc_records.csv").string(),
                  eval_records_to_csv(mc_records));
  std::string delta_csv = "patch_id,combo,fold,delta_f1\n";
  for (const auto& [key, d] : rel.deltas) {
    delta_csv += std::to_string(std::get<0>(key)) + "," +
                 MarkerSet::from_bits(std::get<1>(key)).name() + "," +
                 std::to_string(std::get<2>(key)) + "," + format_double(d) + "\n";
  }
  write_text_file((outdir / "delta_f1_pairs.csv").string(), delta_csv);
  std::vector<double> deltas;
  for (const auto& [key, d] : rel.deltas) deltas.push_back(d);
  write_text_file((outdir / "delta_f1.svg").string(),
                  fig_delta_f1({{"standard vs mc", deltas}}));

  const bool ok = mean_f1 >= 0.7;
  return {ok, "full-combination mean F1 " + format_double(mean_f1) + " over " +
                  std::to_string(full_f1.size()) + " test patches; delta-F1 report: median " +
                  format_double(rel.median) + ", mean " + format_double(rel.mean) +
                  ", frac>0 " + format_double(rel.fraction_positive) + " (sign recorded)"};
}

Outcome criterion_determinism(const PipelineRun& first) {
  const PipelineRun second = run_pipeline();
  const bool records_same = second.records_csv == first.records_csv;
  const bool preds_same = second.predictions_csv == first.predictions_csv;
  const bool ok = records_same && preds_same;
  return {ok, std::string("records ") + (records_same ? "identical" : "DIFFER") +
                  ", predictions " + (preds_same ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  const fs::path outdir = fs::temp_directory_path() / "fmseg_acceptance";
  fs::create_directories(outdir);
  std::cout << "acceptance outputs: " << outdir.string() << "\n";
  std::cout << "master seed: " << kMasterSeed << "\n";

  int failures = 0;
  PipelineRun pipeline;

  auto report = [&failures](int id, const char* name, const Outcome& o) {
    std::cout << "CRITERION " << id << " [" << (o.passed ? "PASS" : "FAIL") << "] " << name
              << " -- " << o.detail << "\n"
              << std::flush;
    if (!o.passed) ++failures;
  };

  auto guard = [](const std::function<Outcome()>& fn) -> Outcome {
    try {
      return fn();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "gradient suite", guard(criterion_gradients));
  report(2, "variance-head loss limits", guard(criterion_aleatoric_cases));
  report(3, "epistemic statistics", guard(criterion_epistemic));
  report(4, "feature oracle", guard(criterion_features));
  report(5, "forest oracle", guard(criterion_forest));
  report(6, "F1 oracle", guard(criterion_f1));
  report(7, "end-to-end quality pipeline", guard([&] {
           pipeline = run_pipeline();
           return criterion_end_to_end(pipeline, outdir);
         }));
  report(8, "segmentation sanity + dropout comparison", guard([&] {
           return criterion_seg_sanity(outdir);
         }));
  report(9, "pipeline determinism", guard([&] {
           if (pipeline.records_csv.empty())
             return Outcome{false, "criterion 7 did not produce output"};
           return criterion_determinism(pipeline);
         }));

  std::cout << (failures == 0 ? "ACCEPTANCE: all criteria passed"
                              : "ACCEPTANCE: " + std::to_string(failures) + " criteria FAILED")
            << "\n";
  return failures == 0 ? 0 : 1;
}
