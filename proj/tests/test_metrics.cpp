#include <doctest.h>

#include <cmath>
#include <set>

#include "fmseg/crossval.hpp"
#include "fmseg/metrics.hpp"
#include "fmseg/naive_ref.hpp"
#include "fmseg/rng.hpp"

using namespace fmseg;

namespace {

Tensor prob_from_binary(const std::vector<int>& pred, std::size_t e) {
  Tensor prob({2, e, e});
  const std::size_t P = e * e;
  for (std::size_t i = 0; i < P; ++i) {
    prob[i] = pred[i] ? 0.1 : 0.9;
    prob[P + i] = pred[i] ? 0.9 : 0.1;
  }
  return prob;
}

Tensor mask_from_binary(const std::vector<int>& mask, std::size_t e) {
  Tensor m({e, e});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = mask[i];
  return m;
}

}  // namespace

TEST_CASE("f1 worked examples") {
  const std::size_t e = 4;
  std::vector<int> mask(16, 0), pred(16, 0);
  // |mask| = 4, |pred| = 5, overlap 3 -> 6/9
  for (int i : {0, 1, 2, 3}) mask[i] = 1;
  for (int i : {1, 2, 3, 8, 9}) pred[i] = 1;
  CHECK(f1_score(mask_from_binary(mask, e), prob_from_binary(pred, e)) ==
        doctest::Approx(6.0 / 9.0).epsilon(1e-15));

  // perfect agreement
  CHECK(f1_score(mask_from_binary(mask, e), prob_from_binary(mask, e)) == 1.0);

  // disjoint nonempty sets
  std::vector<int> disjoint(16, 0);
  for (int i : {10, 11}) disjoint[i] = 1;
  CHECK(f1_score(mask_from_binary(mask, e), prob_from_binary(disjoint, e)) == 0.0);
}

TEST_CASE("f1 empty-set conventions are symmetric") {
  const std::size_t e = 4;
  const std::vector<int> empty(16, 0);
  std::vector<int> nonempty(16, 0);
  nonempty[3] = 1;
  CHECK(f1_score(mask_from_binary(empty, e), prob_from_binary(empty, e)) == 1.0);
  CHECK(f1_score(mask_from_binary(empty, e), prob_from_binary(nonempty, e)) == 0.0);
  CHECK(f1_score(mask_from_binary(nonempty, e), prob_from_binary(empty, e)) == 0.0);
}

TEST_CASE("f1 matches brute-force pixel counting") {
  RngStream rng(3, "f1_oracle");
  const std::size_t e = 16;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> mask(e * e), pred(e * e);
    const double pm = rng.uniform(0.0, 0.4);
    const double pp = rng.uniform(0.0, 0.4);
    for (std::size_t i = 0; i < e * e; ++i) {
      mask[i] = rng.bernoulli(pm) ? 1 : 0;
      pred[i] = rng.bernoulli(pp) ? 1 : 0;
    }
    CHECK(f1_score(mask_from_binary(mask, e), prob_from_binary(pred, e)) ==
          naive::f1_score(mask, pred));
  }
}

TEST_CASE("f1 rejects shape mismatches") {
  CHECK_THROWS_AS(f1_score(Tensor({4, 4}), Tensor({2, 5, 5})), ShapeError);
  CHECK_THROWS_AS(f1_score(Tensor({4, 4}), Tensor({3, 4, 4})), ShapeError);
}

TEST_CASE("relative F1 of a model against itself is identically zero") {
  std::vector<EvalRecord> records;
  RngStream rng(5, "rel");
  for (int p = 0; p < 10; ++p) {
    EvalRecord r;
    r.patch_id = p;
    r.availability = MarkerSet::parse("m12");
    r.fold = p % 2;
    r.model = "x";
    r.f1 = rng.uniform();
    records.push_back(r);
  }
  const RelativeF1 rel = relative_f1(records, records);
  for (const auto& [k, d] : rel.deltas) CHECK(d == 0.0);
  CHECK(rel.median == 0.0);
  CHECK(rel.mean == 0.0);
  CHECK(rel.fraction_positive == 0.0);
}

TEST_CASE("relative F1 computes paired differences") {
  std::vector<EvalRecord> ref, model;
  for (int p = 0; p < 6; ++p) {
    EvalRecord r;
    r.patch_id = p;
    r.availability = MarkerSet::parse("m3");
    r.fold = 0;
    r.model = "ref";
    r.f1 = 0.5;
    ref.push_back(r);
    r.model = "new";
    r.f1 = 0.6;
    model.push_back(r);
  }
  const RelativeF1 rel = relative_f1(model, ref);
  for (const auto& [k, d] : rel.deltas) CHECK(d == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(rel.fraction_positive == 1.0);
  CHECK(rel.mean == doctest::Approx(0.1).epsilon(1e-12));

  // mismatched keys are an error
  model.pop_back();
  CHECK_THROWS_AS(relative_f1(model, ref), ConfigError);
}

TEST_CASE("rmse and r2 worked examples") {
  CHECK(rmse({1.0, 2.0}, {1.0, 2.0}) == 0.0);
  CHECK(r2({1.0, 2.0}, {1.0, 2.0}) == 1.0);

  // constant prediction at the mean has zero explanatory power
  CHECK(r2({0.5, 0.5}, {0.0, 1.0}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(rmse({0.5, 0.5}, {0.0, 1.0}) == doctest::Approx(0.5).epsilon(1e-15));

  // the hand-computable four-point case
  CHECK(rmse({0.3, 0.3, 0.7, 0.7}, {0.2, 0.4, 0.6, 0.8}) ==
        doctest::Approx(0.1).epsilon(1e-12));

  // degenerate SS_tot conventions
  CHECK(r2({1.0, 1.0}, {1.0, 1.0}) == 1.0);
  CHECK(r2({1.0, 2.0}, {1.5, 1.5}) == 0.0);

  CHECK_THROWS_AS(rmse({}, {}), ConfigError);
  CHECK_THROWS_AS(r2({1.0}, {}), ConfigError);
}

TEST_CASE("r2 never exceeds one and rmse is nonnegative") {
  RngStream rng(7, "bounds");
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> pred(10), truth(10);
    for (double& v : pred) v = rng.uniform(-2.0, 2.0);
    for (double& v : truth) v = rng.uniform(-2.0, 2.0);
    CHECK(r2(pred, truth) <= 1.0);
    CHECK(rmse(pred, truth) >= 0.0);
  }
}

TEST_CASE("fold rotation picks distinct non-test validation samples") {
  DatasetSpec spec;
  spec.apply_defaults();
  const std::vector<int> vals = fold_val_samples(spec, 4, 99);
  CHECK(vals.size() == 4);
  std::set<int> unique(vals.begin(), vals.end());
  CHECK(unique.size() == 4);
  for (int v : vals) {
    CHECK(v >= 0);
    CHECK(v < spec.train_samples + spec.val_samples);  // never a test sample
  }
  // seeded: same seed same rotation, different seed may differ
  CHECK(fold_val_samples(spec, 4, 99) == vals);
}

TEST_CASE("eval records round-trip through CSV") {
  std::vector<EvalRecord> records;
  RngStream rng(11, "csv");
  for (int i = 0; i < 8; ++i) {
    EvalRecord r;
    r.patch_id = i;
    r.availability = MarkerSet::from_bits(static_cast<std::uint32_t>(1 + rng.uniform_int(31)));
    r.fold = static_cast<int>(rng.uniform_int(4));
    r.model = "combined";
    r.f1 = rng.uniform();
    records.push_back(r);
  }
  const std::string csv = eval_records_to_csv(records);
  const std::vector<EvalRecord> back = eval_records_from_csv(csv);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].patch_id == records[i].patch_id);
    CHECK(back[i].availability == records[i].availability);
    CHECK(back[i].fold == records[i].fold);
    CHECK(back[i].f1 == records[i].f1);
  }
}
