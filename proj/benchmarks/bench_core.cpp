#include <benchmark/benchmark.h>

#include "fmseg/crossval.hpp"
#include "fmseg/features.hpp"
#include "fmseg/forest.hpp"
#include "fmseg/train.hpp"
#include "fmseg/uncertainty.hpp"

using namespace fmseg;

namespace {

Tensor random_patch(int K, int extent, std::uint64_t seed) {
  RngStream rng(seed, "bench_patch");
  Tensor t({static_cast<std::size_t>(K), static_cast<std::size_t>(extent),
            static_cast<std::size_t>(extent)});
  for (double& v : t.values()) v = rng.uniform();
  return t;
}

void BM_conv2d_forward(benchmark::State& state) {
  const std::size_t C = static_cast<std::size_t>(state.range(0));
  const std::size_t E = static_cast<std::size_t>(state.range(1));
  RngStream rng(1, "bench_conv");
  Tensor x({C, E, E});
  for (double& v : x.values()) v = rng.uniform();
  Tensor w({C, C, 3, 3});
  for (double& v : w.values()) v = rng.uniform(-0.1, 0.1);
  Var xv = constant(x), wv = constant(w), bv = constant(Tensor({C}));
  NoGradGuard ng;
  for (auto _ : state) {
    Var out = conv2d(xv, wv, bv);
    benchmark::DoNotOptimize(out->value.data());
  }
  state.SetItemsProcessed(state.iterations());
  state.counters["GFLOP"] = static_cast<double>(2 * C * C * 9 * E * E) * 1e-9;
}
BENCHMARK(BM_conv2d_forward)->Args({16, 64})->Args({32, 32})->Args({64, 16});

void BM_unet_forward(benchmark::State& state) {
  ArchConfig cfg;
  cfg.depth = 3;
  cfg.base_width = static_cast<int>(state.range(0));
  cfg.patch_extent = static_cast<int>(state.range(1));
  SegModel model = build_model(cfg, Variant::combined, 0.2, 1);
  model.set_requires_grad(false);
  const Tensor patch = random_patch(cfg.K, cfg.patch_extent, 2);
  RngStream rng(3, "bench_fwd");
  NoGradGuard ng;
  for (auto _ : state) {
    SegOutput out = seg_forward(model, patch, MarkerSet::full(cfg.K), RunMode::mc_infer, &rng);
    benchmark::DoNotOptimize(out.logits->value.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_unet_forward)->Args({16, 64})->Args({8, 64})->Args({8, 32})->Unit(benchmark::kMillisecond);

void BM_unet_train_step(benchmark::State& state) {
  ArchConfig cfg;
  cfg.depth = 3;
  cfg.base_width = static_cast<int>(state.range(0));
  cfg.patch_extent = static_cast<int>(state.range(1));
  SegModel model = build_model(cfg, Variant::combined, 0.2, 1);
  const Tensor patch = random_patch(cfg.K, cfg.patch_extent, 2);
  Tensor mask({static_cast<std::size_t>(cfg.patch_extent),
               static_cast<std::size_t>(cfg.patch_extent)});
  RngStream mrng(9, "bench_mask");
  for (double& v : mask.values()) v = mrng.bernoulli(0.11) ? 1.0 : 0.0;
  const Tensor labels = onehot_labels(mask);
  std::vector<Var> params = model.params();
  AdamState adam;
  RngStream rng(3, "bench_train");
  std::uint64_t step = 0;
  for (auto _ : state) {
    SegOutput out = seg_forward(model, patch, MarkerSet::full(cfg.K), RunMode::train, &rng);
    Var loss = aleatoric_loss(out.logits, flatten(out.log_variance), labels, 50,
                              rng.substream("noise", step++));
    zero_grad(params);
    backward(loss);
    adam_step(adam, params);
    benchmark::DoNotOptimize(loss->value[0]);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_unet_train_step)->Args({16, 64})->Args({8, 32})->Unit(benchmark::kMillisecond);

void BM_feature_extraction(benchmark::State& state) {
  RngStream rng(5, "bench_feat");
  UncertaintyBundle b;
  b.mean_prob = Tensor({64, 64});
  b.u_e = Tensor({64, 64});
  b.u_a = Tensor({64, 64});
  for (double& v : b.u_e.values()) v = rng.uniform(0.0, 0.5);
  for (double& v : b.u_a.values()) v = rng.uniform(0.0, 1.0);
  b.has_u_a = true;
  b.availability = MarkerSet::parse("m135");
  for (auto _ : state) {
    auto f = assemble_features(b, FeatureMode::both, 5);
    benchmark::DoNotOptimize(f.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_feature_extraction);

void BM_forest_fit(benchmark::State& state) {
  const std::size_t n = 250, p = 263;
  RngStream rng(6, "bench_rf");
  DataMatrix X;
  X.rows = n;
  X.cols = p;
  X.values.resize(n * p);
  for (double& v : X.values) v = rng.uniform();
  std::vector<double> y(n);
  for (double& v : y) v = rng.uniform();
  ForestParams params;
  params.seed = 3;
  for (auto _ : state) {
    Forest f = fit_forest(X, y, params);
    benchmark::DoNotOptimize(f.trees.size());
  }
  state.SetItemsProcessed(state.iterations());
  state.SetLabel("128 trees, 250x263");
}
BENCHMARK(BM_forest_fit)->Unit(benchmark::kMillisecond);

void BM_dataset_generation(benchmark::State& state) {
  DatasetSpec spec;
  spec.patches_per_sample.assign(8, 4);
  spec.seed = 11;
  for (auto _ : state) {
    auto d = generate_dataset(spec);
    benchmark::DoNotOptimize(d.size());
  }
  state.SetItemsProcessed(state.iterations() * 32);
  state.SetLabel("32 patches, 64x64");
}
BENCHMARK(BM_dataset_generation)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
