#include "fmseg/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fmseg/io_util.hpp"

namespace fmseg {

namespace {

// foreground probability plane (class 1) of a softmax over 2 logits
Tensor foreground_prob(const Tensor& logits) {
  const std::size_t H = logits.extent(1), W = logits.extent(2);
  const std::size_t P = H * W;
  Tensor prob({H, W});
  for (std::size_t i = 0; i < P; ++i) {
    const double z0 = logits[i], z1 = logits[P + i];
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    prob[i] = e1 / (e0 + e1);
  }
  return prob;
}

Tensor variance_scale(const Tensor& log_variance) {
  Tensor u({log_variance.extent(1), log_variance.extent(2)});
  for (std::size_t i = 0; i < u.size(); ++i)
    u[i] = std::exp(0.5 * std::clamp(log_variance[i], -20.0, 20.0));
  return u;
}

UncertaintyBundle sample_passes(const SegModel& model, const Tensor& patch,
                                MarkerSet availability, int T, const RngStream& rng,
                                bool want_ua) {
  if (T < 1) throw ConfigError("uncertainty: T must be >= 1");
  const std::size_t H = patch.extent(1), W = patch.extent(2);
  const std::size_t P = H * W;

  std::vector<Tensor> probs(static_cast<std::size_t>(T));
  std::vector<Tensor> uas(want_ua ? static_cast<std::size_t>(T) : 0);
  parallel_for_each(static_cast<std::size_t>(T), [&](std::size_t t) {
    NoGradGuard ng;
    RngStream sample_rng = rng.substream("mc_sample", t);
    SegOutput out = seg_forward(model, patch, availability, RunMode::mc_infer, &sample_rng);
    probs[t] = foreground_prob(out.logits->value);
    if (want_ua) uas[t] = variance_scale(out.log_variance->value);
  });

  UncertaintyBundle b;
  b.availability = availability;
  b.T_used = T;
  b.mean_prob = Tensor({H, W});
  b.u_e = Tensor({H, W});
  for (int t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < P; ++i) b.mean_prob[i] += probs[static_cast<std::size_t>(t)][i];
  }
  for (std::size_t i = 0; i < P; ++i) b.mean_prob[i] /= T;
  // population SD (divide by T), well defined at T=1. Deviations are taken
  // against the first sample so identical samples give exactly zero.
  Tensor dmean({H, W});
  for (int t = 1; t < T; ++t) {
    for (std::size_t i = 0; i < P; ++i)
      dmean[i] += probs[static_cast<std::size_t>(t)][i] - probs[0][i];
  }
  for (std::size_t i = 0; i < P; ++i) dmean[i] /= T;
  for (int t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < P; ++i) {
      const double d = (probs[static_cast<std::size_t>(t)][i] - probs[0][i]) - dmean[i];
      b.u_e[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < P; ++i) b.u_e[i] = std::sqrt(b.u_e[i] / T);
  if (want_ua) {
    b.u_a = Tensor({H, W});
    for (int t = 0; t < T; ++t) {
      for (std::size_t i = 0; i < P; ++i) b.u_a[i] += uas[static_cast<std::size_t>(t)][i];
    }
    for (std::size_t i = 0; i < P; ++i) b.u_a[i] /= T;
    b.has_u_a = true;
  } else {
    b.u_a = Tensor({H, W});
  }
  check_finite(b.mean_prob, "uncertainty mean");
  check_finite(b.u_e, "u_e");
  check_finite(b.u_a, "u_a");
  return b;
}

}  // namespace

UncertaintyBundle mc_epistemic(const SegModel& model, const Tensor& patch,
                               MarkerSet availability, int T, const RngStream& rng) {
  if (!model.has_dropout()) throw ConfigError("mc_epistemic: variant has no dropout");
  return sample_passes(model, patch, availability, T, rng, false);
}

UncertaintyBundle aleatoric_infer(const SegModel& model, const Tensor& patch,
                                  MarkerSet availability) {
  if (!model.has_variance_head()) throw ConfigError("aleatoric_infer: no variance head");
  return deterministic_predict(model, patch, availability);
}

UncertaintyBundle combined_predict(const SegModel& model, const Tensor& patch,
                                   MarkerSet availability, int T, const RngStream& rng) {
  if (!model.has_dropout() || !model.has_variance_head())
    throw ConfigError("combined_predict: needs the combined variant");
  return sample_passes(model, patch, availability, T, rng, true);
}

UncertaintyBundle deterministic_predict(const SegModel& model, const Tensor& patch,
                                        MarkerSet availability) {
  NoGradGuard ng;
  SegOutput out = seg_forward(model, patch, availability, RunMode::det_infer, nullptr);
  UncertaintyBundle b;
  b.availability = availability;
  b.T_used = 1;
  b.mean_prob = foreground_prob(out.logits->value);
  b.u_e = Tensor({patch.extent(1), patch.extent(2)});
  if (model.has_variance_head()) {
    b.u_a = variance_scale(out.log_variance->value);
    b.has_u_a = true;
  } else {
    b.u_a = Tensor({patch.extent(1), patch.extent(2)});
  }
  return b;
}

void save_bundle(const std::string& path, const UncertaintyBundle& bundle) {
  nlohmann::json header;
  header["patch_id"] = bundle.patch_id;
  header["availability"] = bundle.availability.canonical();
  header["T_used"] = bundle.T_used;
  header["H"] = bundle.mean_prob.extent(0);
  header["W"] = bundle.mean_prob.extent(1);
  header["has_u_a"] = bundle.has_u_a;
  header["planes"] = {"mean_prob", "u_e", "u_a"};
  const std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw MissingInputError("cannot open bundle for writing: " + path);
  const std::uint64_t len = hs.size();
  unsigned char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
  os.write("FMSGUB01", 8);
  os.write(reinterpret_cast<const char*>(lenbuf), 8);
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  auto write_plane = [&os](const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float f = static_cast<float>(t[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      unsigned char buf[4];
      for (int b = 0; b < 4; ++b) buf[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
      os.write(reinterpret_cast<const char*>(buf), 4);
    }
  };
  write_plane(bundle.mean_prob);
  write_plane(bundle.u_e);
  write_plane(bundle.u_a);
  if (!os) throw MissingInputError("bundle write failed: " + path);
}

UncertaintyBundle load_bundle(const std::string& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < 16 || bytes.compare(0, 8, "FMSGUB01") != 0)
    throw MissingInputError("not a bundle file: " + path);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i)
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  nlohmann::json header = nlohmann::json::parse(bytes.substr(16, len));
  UncertaintyBundle b;
  b.patch_id = header.at("patch_id").get<int>();
  b.availability = MarkerSet::from_bits(header.at("availability").get<std::uint32_t>());
  b.T_used = header.at("T_used").get<int>();
  b.has_u_a = header.at("has_u_a").get<bool>();
  const std::size_t H = header.at("H").get<std::size_t>();
  const std::size_t W = header.at("W").get<std::size_t>();
  const std::size_t P = H * W;
  const std::size_t payload = 16 + len;
  if (bytes.size() < payload + 3 * P * 4) throw MissingInputError("bundle truncated: " + path);
  auto read_plane = [&](std::size_t plane_idx) {
    Tensor t({H, W});
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + payload +
                                                           plane_idx * P * 4);
    for (std::size_t i = 0; i < P; ++i) {
      std::uint32_t bits = 0;
      for (int bb = 0; bb < 4; ++bb)
        bits |= static_cast<std::uint32_t>(p[i * 4 + bb]) << (8 * bb);
      float f;
      std::memcpy(&f, &bits, 4);
      t[i] = f;
    }
    return t;
  };
  b.mean_prob = read_plane(0);
  b.u_e = read_plane(1);
  b.u_a = read_plane(2);
  return b;
}

}  // namespace fmseg
