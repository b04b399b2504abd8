#include "fmseg/forest.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "fmseg/io_util.hpp"
#include "fmseg/rng.hpp"

namespace fmseg {

int ForestParams::resolved_mtry(std::size_t n_features) const {
  if (mtry > 0) return std::min<int>(mtry, static_cast<int>(n_features));
  return std::max(1, static_cast<int>(n_features) / 3);
}

double Tree::predict(const double* x) const {
  int idx = 0;
  while (!nodes[static_cast<std::size_t>(idx)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<std::size_t>(idx)];
    idx = (x[n.feature] <= n.threshold) ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(idx)].value;
}

double Forest::predict(const double* x, std::size_t n) const {
  if (n != n_features) throw ShapeError("forest predict: feature count mismatch");
  double sum = 0.0;
  for (const Tree& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

// Candidate reductions follow one canonical arithmetic so an exhaustive
// re-computation lands on bitwise-identical values: node totals accumulate in
// the rows' given order, per-feature sums accumulate in (value, row)-sorted
// order, and the right side is always derived from the totals.
SplitChoice best_split(const DataMatrix& X, const std::vector<double>& y,
                       const std::vector<std::uint32_t>& rows,
                       const std::vector<int>& features) {
  SplitChoice best;
  const std::size_t n = rows.size();
  if (n < 2) return best;

  double sum_y = 0.0, sum_y2 = 0.0;
  for (std::uint32_t r : rows) {
    sum_y += y[r];
    sum_y2 += y[r] * y[r];
  }
  const double ss_total = sum_y2 - sum_y * sum_y / static_cast<double>(n);

  std::vector<std::pair<double, std::uint32_t>> order(n);  // (x value, row)
  for (int f : features) {
    for (std::size_t i = 0; i < n; ++i)
      order[i] = {X.at(rows[i], static_cast<std::size_t>(f)), rows[i]};
    std::sort(order.begin(), order.end());
    double left_sum = 0.0, left_sum2 = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double yi = y[order[i].second];
      left_sum += yi;
      left_sum2 += yi * yi;
      if (order[i].first == order[i + 1].first) continue;  // no boundary inside equal values
      const double nl = static_cast<double>(i + 1);
      const double nr = static_cast<double>(n - i - 1);
      const double right_sum = sum_y - left_sum;
      const double right_sum2 = sum_y2 - left_sum2;
      const double ss_left = left_sum2 - left_sum * left_sum / nl;
      const double ss_right = right_sum2 - right_sum * right_sum / nr;
      const double reduction = ss_total - ss_left - ss_right;
      if (reduction > best.reduction) {  // strict: keeps lowest index/threshold on ties
        best.found = true;
        best.feature = f;
        best.threshold = (order[i].first + order[i + 1].first) / 2.0;
        best.reduction = reduction;
      }
    }
  }
  return best;
}

namespace {

struct TreeBuilder {
  const DataMatrix& X;
  const std::vector<double>& y;
  const ForestParams& params;
  int mtry;
  RngStream rng;
  Tree tree;
  std::vector<int> feature_pool;

  TreeBuilder(const DataMatrix& X_, const std::vector<double>& y_, const ForestParams& p_,
              RngStream rng_)
      : X(X_), y(y_), params(p_), mtry(p_.resolved_mtry(X_.cols)), rng(rng_) {
    feature_pool.resize(X.cols);
    for (std::size_t i = 0; i < X.cols; ++i) feature_pool[i] = static_cast<int>(i);
  }

  double mean_of(const std::vector<std::uint32_t>& rows) const {
    double s = 0.0;
    for (std::uint32_t r : rows) s += y[r];
    return s / static_cast<double>(rows.size());
  }

  bool pure(const std::vector<std::uint32_t>& rows) const {
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (y[rows[i]] != y[rows[0]]) return false;
    }
    return true;
  }

  int build(std::vector<std::uint32_t>& rows, int depth) {
    const int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const bool depth_capped = params.max_depth >= 0 && depth >= params.max_depth;
    if (rows.size() < static_cast<std::size_t>(params.min_split) || depth_capped || pure(rows)) {
      tree.nodes[static_cast<std::size_t>(idx)].value = mean_of(rows);
      return idx;
    }
    // draw mtry features without replacement, evaluated in ascending order
    for (int i = 0; i < mtry; ++i) {
      const std::size_t j =
          static_cast<std::size_t>(i) +
          static_cast<std::size_t>(rng.uniform_int(feature_pool.size() - static_cast<std::size_t>(i)));
      std::swap(feature_pool[static_cast<std::size_t>(i)], feature_pool[j]);
    }
    std::vector<int> candidates(feature_pool.begin(), feature_pool.begin() + mtry);
    std::sort(candidates.begin(), candidates.end());

    const SplitChoice split = best_split(X, y, rows, candidates);
    if (!split.found) {
      tree.nodes[static_cast<std::size_t>(idx)].value = mean_of(rows);
      return idx;
    }
    std::vector<std::uint32_t> left, right;
    for (std::uint32_t r : rows) {
      if (X.at(r, static_cast<std::size_t>(split.feature)) <= split.threshold)
        left.push_back(r);
      else
        right.push_back(r);
    }
    if (left.size() < static_cast<std::size_t>(params.min_leaf) ||
        right.size() < static_cast<std::size_t>(params.min_leaf)) {
      tree.nodes[static_cast<std::size_t>(idx)].value = mean_of(rows);
      return idx;
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return idx;
  }
};

}  // namespace

Forest fit_forest(const DataMatrix& X, const std::vector<double>& y, const ForestParams& params) {
  if (X.rows < 2) throw ConfigError("fit_forest: need at least 2 rows");
  if (X.rows != y.size()) throw ShapeError("fit_forest: X/y row mismatch");
  if (params.n_trees < 1) throw ConfigError("fit_forest: need at least one tree");
  for (double v : X.values) {
    if (!std::isfinite(v)) throw NumericError("fit_forest: non-finite feature");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw NumericError("fit_forest: non-finite target");
  }

  Forest forest;
  forest.n_features = X.cols;
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));
  RngStream base(params.seed, "forest");
  parallel_for_each(static_cast<std::size_t>(params.n_trees), [&](std::size_t t) {
    RngStream tree_rng = base.substream("tree", t);
    std::vector<std::uint32_t> rows(X.rows);
    if (params.bootstrap) {
      for (std::size_t i = 0; i < X.rows; ++i)
        rows[i] = static_cast<std::uint32_t>(tree_rng.uniform_int(X.rows));
    } else {
      for (std::size_t i = 0; i < X.rows; ++i) rows[i] = static_cast<std::uint32_t>(i);
    }
    TreeBuilder builder(X, y, params, tree_rng);
    builder.build(rows, 0);
    forest.trees[t] = std::move(builder.tree);
  });
  return forest;
}

std::string forest_to_json(const Forest& forest) {
  nlohmann::json j;
  j["kind"] = "regression_forest";
  j["n_features"] = forest.n_features;
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : forest.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& n : t.nodes)
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    trees.push_back(nodes);
  }
  j["trees"] = trees;
  return j.dump();
}

Forest forest_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  if (j.value("kind", "") != "regression_forest")
    throw MissingInputError("not a forest file");
  Forest forest;
  forest.n_features = j.at("n_features").get<std::size_t>();
  for (const auto& tj : j.at("trees")) {
    Tree t;
    for (const auto& nj : tj) {
      TreeNode n;
      n.feature = nj.at(0).get<int>();
      n.threshold = nj.at(1).get<double>();
      n.left = nj.at(2).get<int>();
      n.right = nj.at(3).get<int>();
      n.value = nj.at(4).get<double>();
      t.nodes.push_back(n);
    }
    forest.trees.push_back(std::move(t));
  }
  return forest;
}

void save_forest(const std::string& path, const Forest& forest) {
  write_text_file(path, forest_to_json(forest) + "\n");
}

Forest load_forest(const std::string& path) {
  return forest_from_json(read_text_file(path));
}

}  // namespace fmseg
