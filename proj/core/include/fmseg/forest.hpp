#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmseg/common.hpp"

namespace fmseg {

/// Row-major feature matrix.
struct DataMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  const double* row(std::size_t r) const { return values.data() + r * cols; }
};

struct ForestParams {
  int n_trees = 128;
  int mtry = -1;       // -1: max(1, floor(n_features / 3))
  int min_split = 2;   // smallest node eligible for splitting
  int min_leaf = 1;
  int max_depth = -1;  // -1: unlimited
  bool bootstrap = true;  // test hook: false trains each tree on all rows
  std::uint64_t seed = 0;

  int resolved_mtry(std::size_t n_features) const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf: mean of training targets reaching it

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(const double* x) const;
};

struct Forest {
  std::vector<Tree> trees;
  std::size_t n_features = 0;

  double predict(const double* x, std::size_t n) const;
  double predict(const std::vector<double>& x) const { return predict(x.data(), x.size()); }
};

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double reduction = 0.0;  // decrease in sum of squared deviations
};

/// Best (feature, threshold) over the given rows and candidate features.
/// Candidate thresholds are midpoints between consecutive distinct sorted
/// values; the winner maximizes the squared-deviation reduction with ties
/// broken by lowest feature index, then lowest threshold.
SplitChoice best_split(const DataMatrix& X, const std::vector<double>& y,
                       const std::vector<std::uint32_t>& rows,
                       const std::vector<int>& features);

Forest fit_forest(const DataMatrix& X, const std::vector<double>& y, const ForestParams& params);

/// JSON persistence; reloading preserves predictions bit-exactly.
std::string forest_to_json(const Forest& forest);
Forest forest_from_json(const std::string& json_text);
void save_forest(const std::string& path, const Forest& forest);
Forest load_forest(const std::string& path);

}  // namespace fmseg
