#include "fmseg/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace fmseg {

std::string feature_mode_name(FeatureMode m) {
  switch (m) {
    case FeatureMode::e_only: return "e_only";
    case FeatureMode::a_only: return "a_only";
    case FeatureMode::both: return "both";
  }
  return "?";
}

FeatureMode feature_mode_from_name(const std::string& s) {
  if (s == "e_only" || s == "e") return FeatureMode::e_only;
  if (s == "a_only" || s == "a") return FeatureMode::a_only;
  if (s == "both" || s == "ea") return FeatureMode::both;
  throw ConfigError("unknown feature mode: " + s);
}

std::vector<double> percentiles(const Tensor& map) {
  if (map.empty()) throw ConfigError("percentiles: empty map");
  check_finite(map, "percentiles");
  std::vector<double> sorted(map.values());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::vector<double> out(99);
  for (int p = 1; p <= 99; ++p) {
    const double rank = (p / 100.0) * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const double frac = rank - static_cast<double>(lo);
    const std::size_t hi = std::min(lo + 1, n - 1);
    out[p - 1] = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  }
  return out;
}

std::vector<double> cumulative_hist(const Tensor& map) {
  if (map.empty()) throw ConfigError("cumulative_hist: empty map");
  std::vector<double> out(13, 0.0);
  const double n = static_cast<double>(map.size());
  for (int i = 1; i <= 13; ++i) {
    const double threshold = 0.05 * i;
    std::size_t count = 0;
    for (std::size_t j = 0; j < map.size(); ++j) {
      if (map[j] <= threshold) ++count;
    }
    out[i - 1] = static_cast<double>(count) / n;
  }
  return out;
}

std::vector<double> moments(const Tensor& map) {
  if (map.empty()) throw ConfigError("moments: empty map");
  const double n = static_cast<double>(map.size());
  // deviations are taken against the first value so constant maps come out
  // with exactly zero central moments
  const double shift = map[0];
  double dmean = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) dmean += map[i] - shift;
  dmean /= n;
  const double mean = shift + dmean;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double d = (map[i] - shift) - dmean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  double skew = 0.0, kurt = 0.0;
  if (m2 >= 1e-24) {
    skew = m3 / std::pow(m2, 1.5);
    kurt = m4 / (m2 * m2);
  }
  return {mean, m2, skew, kurt};
}

namespace {

void append_map_block(std::vector<double>& out, const Tensor& map) {
  const std::vector<double> p = percentiles(map);
  out.insert(out.end(), p.begin(), p.end());
  const std::vector<double> h = cumulative_hist(map);
  out.insert(out.end(), h.begin(), h.end());
  const std::vector<double> m = moments(map);
  out.insert(out.end(), m.begin(), m.end());
}

void append_map_names(std::vector<std::string>& out, const std::string& prefix) {
  char buf[32];
  for (int i = 1; i <= 99; ++i) {
    std::snprintf(buf, sizeof(buf), "%s_p%02d", prefix.c_str(), i);
    out.push_back(buf);
  }
  for (int i = 1; i <= 13; ++i) {
    std::snprintf(buf, sizeof(buf), "%s_ch%02d", prefix.c_str(), i);
    out.push_back(buf);
  }
  for (int i = 1; i <= 4; ++i) {
    std::snprintf(buf, sizeof(buf), "%s_m%d", prefix.c_str(), i);
    out.push_back(buf);
  }
}

}  // namespace

std::vector<double> assemble_features(const UncertaintyBundle& bundle, FeatureMode mode, int K) {
  if ((mode == FeatureMode::a_only || mode == FeatureMode::both) && !bundle.has_u_a)
    throw ConfigError("assemble_features: bundle has no aleatoric map");
  std::vector<double> out;
  out.reserve(feature_length(mode, K));
  if (mode == FeatureMode::e_only || mode == FeatureMode::both)
    append_map_block(out, bundle.u_e);
  if (mode == FeatureMode::a_only || mode == FeatureMode::both)
    append_map_block(out, bundle.u_a);
  const std::size_t n_combos = (1u << K) - 1u;
  std::vector<double> onehot(n_combos, 0.0);
  onehot[combination_index(bundle.availability, K)] = 1.0;
  out.insert(out.end(), onehot.begin(), onehot.end());
  return out;
}

std::vector<std::string> feature_names(FeatureMode mode, int K) {
  std::vector<std::string> out;
  if (mode == FeatureMode::e_only || mode == FeatureMode::both) append_map_names(out, "u_e");
  if (mode == FeatureMode::a_only || mode == FeatureMode::both) append_map_names(out, "u_a");
  char buf[24];
  for (std::uint32_t i = 0; i < (1u << K) - 1u; ++i) {
    std::snprintf(buf, sizeof(buf), "combo_%02u", i);
    out.push_back(buf);
  }
  return out;
}

std::size_t feature_length(FeatureMode mode, int K) {
  const std::size_t block = 99 + 13 + 4;
  const std::size_t maps = (mode == FeatureMode::both) ? 2 : 1;
  return maps * block + ((1u << K) - 1u);
}

}  // namespace fmseg
