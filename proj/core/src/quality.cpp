#include "fmseg/quality.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fmseg/checkpoint.hpp"

namespace fmseg {

std::vector<QualityExample> build_quality_dataset(const SegModel& model,
                                                  const std::vector<MarkerPatch>& patches,
                                                  Split split, const QualityBuildOptions& opts,
                                                  const RngStream& rng) {
  std::vector<const MarkerPatch*> selected;
  for (const MarkerPatch& p : patches) {
    if (p.split == split) selected.push_back(&p);
  }
  if (selected.empty()) throw ConfigError("build_quality_dataset: split is empty");
  const int K = model.cfg.K;
  const MarkerSet full = MarkerSet::full(K);
  for (const MarkerPatch* p : selected) {
    if (p->availability != full)
      throw ConfigError("build_quality_dataset: patch lacks the full channel set");
  }
  const std::vector<MarkerSet> combos = enumerate_combinations(K);

  std::vector<QualityExample> out(selected.size() * combos.size());
  parallel_for_each(out.size(), [&](std::size_t idx) {
    const std::size_t pi = idx / combos.size();
    const std::size_t ci = idx % combos.size();
    const MarkerPatch& patch = *selected[pi];
    const MarkerSet combo = combos[ci];

    const Tensor masked = mask_channels(patch.channels, combo);
    RngStream stream = rng.substream("quality", static_cast<std::uint64_t>(patch.patch_id),
                                     combo.canonical());
    UncertaintyBundle bundle = combined_predict(model, masked, combo, opts.T, stream);
    bundle.patch_id = patch.patch_id;

    QualityExample ex;
    ex.patch_id = patch.patch_id;
    ex.availability = combo;
    ex.q = f1_from_prob_plane(patch.mask, bundle.mean_prob);
    ex.features = assemble_features(bundle, FeatureMode::both, K);
    if (opts.keep_maps) ex.map_stack = stack_maps_for_cnn(bundle, opts.map_extent);
    out[idx] = std::move(ex);
  });
  return out;
}

std::vector<double> select_mode_features(const std::vector<double>& both_features,
                                         FeatureMode mode, int K) {
  const std::size_t block = 99 + 13 + 4;
  const std::size_t n_combos = (1u << K) - 1u;
  if (both_features.size() != 2 * block + n_combos)
    throw ShapeError("select_mode_features: unexpected layout");
  if (mode == FeatureMode::both) return both_features;
  std::vector<double> out;
  out.reserve(block + n_combos);
  const std::size_t offset = (mode == FeatureMode::e_only) ? 0 : block;
  out.insert(out.end(), both_features.begin() + offset, both_features.begin() + offset + block);
  out.insert(out.end(), both_features.end() - static_cast<std::ptrdiff_t>(n_combos),
             both_features.end());
  return out;
}

Forest train_quality_rf(const std::vector<QualityExample>& examples, FeatureMode mode, int K,
                        const ForestParams& params) {
  if (examples.size() < 2) throw ConfigError("train_quality_rf: need at least 2 examples");
  DataMatrix X;
  X.rows = examples.size();
  X.cols = feature_length(mode, K);
  X.values.reserve(X.rows * X.cols);
  std::vector<double> y;
  y.reserve(examples.size());
  for (const QualityExample& ex : examples) {
    const std::vector<double> f = select_mode_features(ex.features, mode, K);
    X.values.insert(X.values.end(), f.begin(), f.end());
    y.push_back(ex.q);
  }
  return fit_forest(X, y, params);
}

double predict_quality_rf(const Forest& forest, const QualityExample& example, FeatureMode mode,
                          int K) {
  return forest.predict(select_mode_features(example.features, mode, K));
}

// ---- CNN regressor ---------------------------------------------------------

namespace {

struct QnetDims {
  static constexpr int channels[5] = {4, 8, 16, 32, 64};
};

std::pair<Var, Var> find_param(const QNet& net, const std::string& name) {
  Var w, b;
  for (const auto& [n, v] : net.named) {
    if (n == name + ".w") w = v;
    if (n == name + ".b") b = v;
  }
  if (!w || !b) throw ConfigError("qnet: missing parameter " + name);
  return {w, b};
}

Var qnet_forward(const QNet& net, const Tensor& stack) {
  if (stack.rank() != 3 || stack.extent(0) != 2)
    throw ShapeError("qnet: input must be 2 x E x E");
  if (stack.extent(1) != static_cast<std::size_t>(net.input_extent))
    throw ShapeError("qnet: input extent mismatch");
  Var x = constant(stack);
  for (int i = 0; i < 5; ++i) {
    auto [w, b] = find_param(net, "conv" + std::to_string(i + 1));
    x = relu(conv2d(x, w, b));
    if (i < 4) x = maxpool2d(x, 3);
  }
  x = flatten(x);
  auto [w1, b1] = find_param(net, "fc1");
  x = relu(dense(x, w1, b1));
  auto [w2, b2] = find_param(net, "fc2");
  return dense(x, w2, b2);
}

}  // namespace

std::vector<Var> QNet::params() const {
  std::vector<Var> out;
  for (const auto& [n, v] : named) out.push_back(v);
  return out;
}

std::size_t QNet::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : named) n += v->value.size();
  return n;
}

QNet build_qnet(std::uint64_t seed, int input_extent) {
  QNet net;
  net.input_extent = input_extent;
  RngStream rng(seed, "qnet_init");
  int ci = 2;
  int extent = input_extent;
  for (int i = 0; i < 5; ++i) {
    const int co = QnetDims::channels[i];
    Tensor w({static_cast<std::size_t>(co), static_cast<std::size_t>(ci), 3, 3});
    kaiming_uniform(w, static_cast<std::size_t>(ci) * 9, rng);
    net.named.emplace_back("conv" + std::to_string(i + 1) + ".w", make_var(std::move(w), true));
    net.named.emplace_back("conv" + std::to_string(i + 1) + ".b",
                           make_var(Tensor({static_cast<std::size_t>(co)}), true));
    ci = co;
    if (i < 4) extent = (extent + 2) / 3;  // ceil-mode 3x3 stride-3 pooling
  }
  const std::size_t flat = static_cast<std::size_t>(64) * extent * extent;
  Tensor w1({128, flat});
  kaiming_uniform(w1, flat, rng);
  net.named.emplace_back("fc1.w", make_var(std::move(w1), true));
  net.named.emplace_back("fc1.b", make_var(Tensor({128}), true));
  Tensor w2({1, 128});
  kaiming_uniform(w2, 128, rng);
  net.named.emplace_back("fc2.w", make_var(std::move(w2), true));
  net.named.emplace_back("fc2.b", make_var(Tensor({1}), true));
  return net;
}

QNetTrainStats train_quality_cnn(QNet& net, const std::vector<QualityExample>& examples,
                                 const QNetTrainConfig& cfg) {
  for (const QualityExample& ex : examples) {
    if (ex.map_stack.empty())
      throw ConfigError("train_quality_cnn: examples built without keep_maps");
  }
  if (examples.empty()) throw ConfigError("train_quality_cnn: no examples");
  std::vector<Var> params = net.params();
  for (const Var& p : params) p->requires_grad = true;
  AdamState adam;
  adam.lr = cfg.lr;

  QNetTrainStats stats;
  RngStream shuffle_rng(cfg.seed, "qnet_shuffle");
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double epoch_mse = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      zero_grad(params);
      double batch_mse = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const QualityExample& ex = examples[order[i]];
        Var pred = qnet_forward(net, ex.map_stack);
        Var loss = squared_error(pred, ex.q);
        backward(loss);
        batch_mse += loss->value[0];
      }
      // mean gradient over the batch
      const double inv = 1.0 / static_cast<double>(end - start);
      for (const Var& p : params) {
        if (p->grad_allocated) {
          for (double& g : p->grad.values()) g *= inv;
        }
      }
      adam_step(adam, params);
      epoch_mse += batch_mse;
    }
    const double mse = epoch_mse / static_cast<double>(order.size());
    if (!std::isfinite(mse)) throw NumericError("train_quality_cnn: loss diverged");
    stats.epoch_mse.push_back(mse);
  }
  return stats;
}

double predict_quality_cnn(const QNet& net, const Tensor& map_stack) {
  NoGradGuard ng;
  return qnet_forward(net, map_stack)->value[0];
}

Tensor stack_maps_for_cnn(const UncertaintyBundle& bundle, int extent) {
  const std::size_t E = static_cast<std::size_t>(extent);
  Tensor out({2, E, E});
  const Tensor* maps[2] = {&bundle.u_e, &bundle.u_a};
  for (int m = 0; m < 2; ++m) {
    const Tensor& src = *maps[m];
    const std::size_t H = src.extent(0), W = src.extent(1);
    if (H >= E && W >= E) {
      // center crop
      const std::size_t oy = (H - E) / 2, ox = (W - E) / 2;
      for (std::size_t y = 0; y < E; ++y) {
        for (std::size_t x = 0; x < E; ++x)
          out[(static_cast<std::size_t>(m) * E + y) * E + x] = src.at2(y + oy, x + ox);
      }
    } else {
      // nearest-neighbor resize
      for (std::size_t y = 0; y < E; ++y) {
        const std::size_t sy = std::min(H - 1, y * H / E);
        for (std::size_t x = 0; x < E; ++x) {
          const std::size_t sx = std::min(W - 1, x * W / E);
          out[(static_cast<std::size_t>(m) * E + y) * E + x] = src.at2(sy, sx);
        }
      }
    }
  }
  return out;
}

void save_qnet(const std::string& path, const QNet& net) {
  nlohmann::json meta;
  meta["kind"] = "qnet";
  meta["input_extent"] = net.input_extent;
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& [name, v] : net.named) tensors.emplace_back(name, &v->value);
  save_checkpoint(path, meta.dump(), tensors);
}

QNet load_qnet(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  nlohmann::json meta = nlohmann::json::parse(ck.meta_json);
  if (meta.value("kind", "") != "qnet") throw MissingInputError("not a qnet checkpoint: " + path);
  QNet net = build_qnet(0, meta.at("input_extent").get<int>());
  for (auto& [name, v] : net.named) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw MissingInputError("qnet checkpoint missing: " + name);
    check_same_shape(v->value, it->second, "load_qnet");
    v->value = it->second;
  }
  return net;
}

// ---- evaluation ------------------------------------------------------------

QualityEval evaluate_quality(const std::vector<PredictionRow>& rows) {
  if (rows.empty()) throw ConfigError("evaluate_quality: no predictions");
  QualityEval eval;
  std::vector<double> pred, truth;
  pred.reserve(rows.size());
  truth.reserve(rows.size());
  for (const PredictionRow& r : rows) {
    pred.push_back(r.q_pred);
    truth.push_back(r.q_true);
  }
  eval.rmse_all = rmse(pred, truth);

  // combo -> fold -> (sum_pred, sum_true, n)
  std::map<std::uint32_t, std::map<int, std::array<double, 3>>> groups;
  for (const PredictionRow& r : rows) {
    auto& cell = groups[r.combo.canonical()][r.fold];
    cell[0] += r.q_pred;
    cell[1] += r.q_true;
    cell[2] += 1.0;
  }
  std::vector<double> mean_preds, mean_trues;
  for (const auto& [combo_bits, folds] : groups) {
    ComboAggregate agg;
    agg.combo = MarkerSet::from_bits(combo_bits);
    agg.n_folds = static_cast<int>(folds.size());
    std::vector<double> fold_pred, fold_true;
    for (const auto& [fold, cell] : folds) {
      fold_pred.push_back(cell[0] / cell[2]);
      fold_true.push_back(cell[1] / cell[2]);
    }
    auto mean_sd = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      double s = 0.0;
      for (double x : v) s += (x - m) * (x - m);
      return std::pair<double, double>(m, std::sqrt(s / static_cast<double>(v.size())));
    };
    std::tie(agg.mean_pred, agg.sd_pred) = mean_sd(fold_pred);
    std::tie(agg.mean_true, agg.sd_true) = mean_sd(fold_true);
    eval.per_combination.push_back(agg);
    mean_preds.push_back(agg.mean_pred);
    mean_trues.push_back(agg.mean_true);
  }
  eval.r2_of_means = r2(mean_preds, mean_trues);
  return eval;
}

std::string predictions_to_csv(const std::vector<PredictionRow>& rows) {
  std::string out = "patch_id,combo_mask,fold,q_true,q_pred,regressor_name\n";
  for (const PredictionRow& r : rows) {
    out += std::to_string(r.patch_id);
    out += ",";
    out += r.combo.name();
    out += ",";
    out += std::to_string(r.fold);
    out += ",";
    out += format_double(r.q_true);
    out += ",";
    out += format_double(r.q_pred);
    out += ",";
    out += r.regressor;
    out += "\n";
  }
  return out;
}

std::vector<PredictionRow> predictions_from_csv(const std::string& csv) {
  std::vector<PredictionRow> out;
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    PredictionRow r;
    std::getline(ls, field, ',');
    r.patch_id = std::stoi(field);
    std::getline(ls, field, ',');
    r.combo = MarkerSet::parse(field);
    std::getline(ls, field, ',');
    r.fold = std::stoi(field);
    std::getline(ls, field, ',');
    r.q_true = std::stod(field);
    std::getline(ls, field, ',');
    r.q_pred = std::stod(field);
    std::getline(ls, r.regressor, ',');
    out.push_back(r);
  }
  return out;
}

std::string quality_examples_to_csv(const std::vector<QualityExample>& examples, int K) {
  const std::vector<std::string> names = feature_names(FeatureMode::both, K);
  std::string out;
  for (const std::string& n : names) {
    out += n;
    out += ",";
  }
  out += "target_f1,patch_id,fold\n";
  for (const QualityExample& ex : examples) {
    for (double v : ex.features) {
      out += format_double(v);
      out += ",";
    }
    out += format_double(ex.q);
    out += ",";
    out += std::to_string(ex.patch_id);
    out += ",";
    out += std::to_string(ex.fold);
    out += "\n";
  }
  return out;
}

std::vector<QualityExample> quality_examples_from_csv(const std::string& csv, int K) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line)) throw MissingInputError("empty feature table");
  const std::size_t n_features = feature_length(FeatureMode::both, K);
  const std::size_t n_combos = (1u << K) - 1u;
  std::vector<QualityExample> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    QualityExample ex;
    ex.features.reserve(n_features);
    for (std::size_t i = 0; i < n_features; ++i) {
      std::getline(ls, field, ',');
      ex.features.push_back(std::stod(field));
    }
    std::getline(ls, field, ',');
    ex.q = std::stod(field);
    std::getline(ls, field, ',');
    ex.patch_id = std::stoi(field);
    std::getline(ls, field, ',');
    ex.fold = std::stoi(field);
    // recover the combination from the one-hot block
    for (std::size_t i = 0; i < n_combos; ++i) {
      if (ex.features[n_features - n_combos + i] != 0.0)
        ex.availability = MarkerSet::from_bits(static_cast<std::uint32_t>(i + 1));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace fmseg
