#include "fmseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fmseg {

double f1_score(const Tensor& mask, const Tensor& prob) {
  if (prob.rank() != 3 || prob.extent(0) != 2) throw ShapeError("f1_score: prob must be 2xHxW");
  if (mask.rank() != 2 || mask.extent(0) != prob.extent(1) || mask.extent(1) != prob.extent(2))
    throw ShapeError("f1_score: mask/prob shape mismatch");
  const std::size_t P = mask.size();
  std::size_t n_mask = 0, n_pred = 0, n_overlap = 0;
  for (std::size_t i = 0; i < P; ++i) {
    const bool m = mask[i] != 0.0;
    const bool p = prob[P + i] > prob[i];  // argmax over the two classes
    n_mask += m;
    n_pred += p;
    n_overlap += (m && p);
  }
  if (n_mask == 0 && n_pred == 0) return 1.0;
  if (n_mask == 0 || n_pred == 0) return 0.0;
  return 2.0 * static_cast<double>(n_overlap) / static_cast<double>(n_mask + n_pred);
}

double f1_from_prob_plane(const Tensor& mask, const Tensor& fg_prob) {
  check_same_shape(mask, fg_prob, "f1_from_prob_plane");
  const std::size_t P = mask.size();
  std::size_t n_mask = 0, n_pred = 0, n_overlap = 0;
  for (std::size_t i = 0; i < P; ++i) {
    const bool m = mask[i] != 0.0;
    const bool p = fg_prob[i] > 0.5;
    n_mask += m;
    n_pred += p;
    n_overlap += (m && p);
  }
  if (n_mask == 0 && n_pred == 0) return 1.0;
  if (n_mask == 0 || n_pred == 0) return 0.0;
  return 2.0 * static_cast<double>(n_overlap) / static_cast<double>(n_mask + n_pred);
}

RelativeF1 relative_f1(const std::vector<EvalRecord>& model,
                       const std::vector<EvalRecord>& reference) {
  std::map<PairKey, double> ref;
  for (const EvalRecord& r : reference)
    ref[{r.patch_id, r.availability.canonical(), r.fold}] = r.f1;
  if (ref.size() != reference.size()) throw ConfigError("relative_f1: duplicate reference keys");

  RelativeF1 out;
  for (const EvalRecord& r : model) {
    const PairKey key{r.patch_id, r.availability.canonical(), r.fold};
    const auto it = ref.find(key);
    if (it == ref.end()) throw ConfigError("relative_f1: key missing from reference");
    out.deltas.emplace_back(key, r.f1 - it->second);
  }
  if (out.deltas.size() != ref.size()) throw ConfigError("relative_f1: key sets differ");
  if (out.deltas.empty()) throw ConfigError("relative_f1: empty input");

  std::vector<double> d;
  d.reserve(out.deltas.size());
  std::size_t positive = 0;
  double sum = 0.0;
  for (const auto& [k, v] : out.deltas) {
    d.push_back(v);
    sum += v;
    positive += v > 0.0;
  }
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  out.median = (n % 2 == 1) ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  out.mean = sum / static_cast<double>(n);
  out.fraction_positive = static_cast<double>(positive) / static_cast<double>(n);
  return out;
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw ConfigError("rmse: need equal nonempty inputs");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double r2(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw ConfigError("r2: need equal nonempty inputs");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

std::string eval_records_to_csv(const std::vector<EvalRecord>& records) {
  std::string out = "patch_id,combo,fold,model,f1\n";
  for (const EvalRecord& r : records) {
    out += std::to_string(r.patch_id);
    out += ",";
    out += r.availability.name();
    out += ",";
    out += std::to_string(r.fold);
    out += ",";
    out += r.model;
    out += ",";
    out += format_double(r.f1);
    out += "\n";
  }
  return out;
}

std::vector<EvalRecord> eval_records_from_csv(const std::string& csv) {
  std::vector<EvalRecord> out;
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    EvalRecord r;
    std::getline(ls, field, ',');
    r.patch_id = std::stoi(field);
    std::getline(ls, field, ',');
    r.availability = MarkerSet::parse(field);
    std::getline(ls, field, ',');
    r.fold = std::stoi(field);
    std::getline(ls, r.model, ',');
    std::getline(ls, field, ',');
    r.f1 = std::stod(field);
    out.push_back(r);
  }
  return out;
}

}  // namespace fmseg
