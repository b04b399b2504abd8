#include <doctest.h>

#include <cmath>

#include "fmseg/common.hpp"
#include "fmseg/forest.hpp"
#include "fmseg/naive_ref.hpp"
#include "fmseg/rng.hpp"

using namespace fmseg;

namespace {

DataMatrix matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  DataMatrix X;
  X.rows = rows;
  X.cols = cols;
  X.values = std::move(values);
  return X;
}

DataMatrix random_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
  DataMatrix X;
  X.rows = rows;
  X.cols = cols;
  X.values.resize(rows * cols);
  for (double& v : X.values) v = rng.uniform();
  return X;
}

}  // namespace

TEST_CASE("constant targets collapse every tree to one leaf") {
  RngStream rng(3, "rf_const");
  const DataMatrix X = random_matrix(20, 4, rng);
  const std::vector<double> y(20, 0.75);
  ForestParams params;
  params.n_trees = 16;
  params.seed = 5;
  const Forest f = fit_forest(X, y, params);
  for (const Tree& t : f.trees) {
    REQUIRE(t.nodes.size() == 1);
    CHECK(t.nodes[0].is_leaf());
    CHECK(t.nodes[0].value == 0.75);
  }
  CHECK(f.predict(X.row(0), 4) == 0.75);
}

TEST_CASE("a single binary feature splits at one half") {
  const DataMatrix X = matrix(6, 1, {0, 0, 0, 1, 1, 1});
  const std::vector<double> y = {0, 0, 0, 1, 1, 1};
  ForestParams params;
  params.n_trees = 1;
  params.bootstrap = false;
  params.mtry = 1;
  const Forest f = fit_forest(X, y, params);
  REQUIRE(!f.trees[0].nodes.empty());
  const TreeNode& root = f.trees[0].nodes[0];
  CHECK(root.feature == 0);
  CHECK(root.threshold == 0.5);
  double mse = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    const double d = f.predict(X.row(i), 1) - y[i];
    mse += d * d;
  }
  CHECK(mse == 0.0);
}

TEST_CASE("split search matches the exhaustive oracle") {
  RngStream rng(7, "rf_oracle");
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
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
    CHECK(got.found == want.found);
    if (got.found && want.found) {
      CHECK(got.feature == want.feature);
      CHECK(got.threshold == want.threshold);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("ties break toward the lowest feature then the lowest threshold") {
  // two identical features: both give the same reduction; feature 0 must win
  const DataMatrix X = matrix(4, 2, {0, 0, 0, 0, 1, 1, 1, 1});
  const std::vector<double> y = {0, 0, 1, 1};
  std::vector<std::uint32_t> rows = {0, 1, 2, 3};
  const SplitChoice s = best_split(X, y, rows, {0, 1});
  CHECK(s.found);
  CHECK(s.feature == 0);
  CHECK(s.threshold == 0.5);
}

TEST_CASE("forest prediction is the exact mean of its trees") {
  RngStream rng(9, "rf_mean");
  const DataMatrix X = random_matrix(30, 5, rng);
  std::vector<double> y(30);
  for (double& v : y) v = rng.uniform();
  ForestParams params;
  params.n_trees = 7;
  params.seed = 2;
  const Forest f = fit_forest(X, y, params);
  for (std::size_t r = 0; r < X.rows; ++r) {
    double sum = 0.0;
    for (const Tree& t : f.trees) sum += t.predict(X.row(r));
    CHECK(f.predict(X.row(r), 5) == sum / static_cast<double>(f.trees.size()));
  }
}

TEST_CASE("an unbootstrapped unlimited tree memorizes unique training rows") {
  RngStream rng(11, "rf_memorize");
  const DataMatrix X = random_matrix(12, 3, rng);  // continuous, rows unique
  std::vector<double> y(12);
  for (double& v : y) v = rng.uniform();
  ForestParams params;
  params.n_trees = 1;
  params.bootstrap = false;
  params.mtry = 3;
  const Forest f = fit_forest(X, y, params);
  for (std::size_t r = 0; r < X.rows; ++r)
    CHECK(f.predict(X.row(r), 3) == doctest::Approx(y[r]).epsilon(1e-14));
}

TEST_CASE("predictions never leave the training target range") {
  RngStream rng(13, "rf_range");
  const DataMatrix X = random_matrix(40, 6, rng);
  std::vector<double> y(40);
  for (double& v : y) v = rng.uniform(0.2, 0.9);
  ForestParams params;
  params.seed = 4;
  const Forest f = fit_forest(X, y, params);
  const double lo = *std::min_element(y.begin(), y.end());
  const double hi = *std::max_element(y.begin(), y.end());
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> probe(6);
    for (double& v : probe) v = rng.uniform(-1.0, 2.0);
    const double pred = f.predict(probe);
    CHECK(pred >= lo);
    CHECK(pred <= hi);
  }
}

TEST_CASE("training error improves from one tree to the full forest") {
  RngStream rng(15, "rf_mono");
  const DataMatrix X = random_matrix(60, 8, rng);
  std::vector<double> y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = X.at(i, 0) + 0.2 * rng.uniform();
  ForestParams params;
  params.seed = 6;
  params.n_trees = 128;
  const Forest full = fit_forest(X, y, params);

  auto training_rmse = [&](int n_trees) {
    double acc = 0.0;
    for (std::size_t r = 0; r < X.rows; ++r) {
      double sum = 0.0;
      for (int t = 0; t < n_trees; ++t) sum += full.trees[static_cast<std::size_t>(t)].predict(X.row(r));
      const double d = sum / n_trees - y[r];
      acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(X.rows));
  };
  // per-tree streams are keyed by index, so the prefix of the forest is the
  // smaller forest; error must not grow with more trees (statistically)
  const double rmse1 = training_rmse(1);
  const double rmse8 = training_rmse(8);
  const double rmse128 = training_rmse(128);
  CHECK(rmse128 <= rmse8 * 1.05);
  CHECK(rmse128 < rmse1);
}

TEST_CASE("forests persist through JSON bit-exactly") {
  RngStream rng(17, "rf_json");
  const DataMatrix X = random_matrix(25, 4, rng);
  std::vector<double> y(25);
  for (double& v : y) v = rng.uniform();
  ForestParams params;
  params.n_trees = 12;
  params.seed = 8;
  const Forest f = fit_forest(X, y, params);
  const Forest g = forest_from_json(forest_to_json(f));
  for (std::size_t r = 0; r < X.rows; ++r) CHECK(f.predict(X.row(r), 4) == g.predict(X.row(r), 4));
  CHECK(forest_to_json(f) == forest_to_json(g));
}

TEST_CASE("fitting is reproducible under any thread count") {
  RngStream rng(19, "rf_threads");
  const DataMatrix X = random_matrix(50, 6, rng);
  std::vector<double> y(50);
  for (double& v : y) v = rng.uniform();
  ForestParams params;
  params.n_trees = 32;
  params.seed = 10;

  set_thread_count(1);
  const std::string serial = forest_to_json(fit_forest(X, y, params));
  set_thread_count(2);
  const std::string threaded = forest_to_json(fit_forest(X, y, params));
  set_thread_count(4);
  const std::string more = forest_to_json(fit_forest(X, y, params));
  set_thread_count(0);
  CHECK(serial == threaded);
  CHECK(serial == more);
}

TEST_CASE("degenerate inputs are rejected") {
  ForestParams params;
  const DataMatrix tiny = matrix(1, 2, {0.0, 1.0});
  CHECK_THROWS_AS(fit_forest(tiny, {1.0}, params), ConfigError);
  DataMatrix bad = matrix(2, 1, {0.0, HUGE_VAL});
  CHECK_THROWS_AS(fit_forest(bad, {0.0, 1.0}, params), NumericError);
  const DataMatrix ok = matrix(2, 1, {0.0, 1.0});
  const Forest f = fit_forest(ok, {0.0, 1.0}, params);
  std::vector<double> wrong_width = {0.0, 1.0};
  CHECK_THROWS_AS(f.predict(wrong_width), ShapeError);
}
