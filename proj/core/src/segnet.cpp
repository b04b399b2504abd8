#include "fmseg/segnet.hpp"

#include <cmath>

#include <json.hpp>

#include "fmseg/checkpoint.hpp"

namespace fmseg {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::plain: return "plain";
    case Variant::epistemic: return "epistemic";
    case Variant::aleatoric: return "aleatoric";
    case Variant::combined: return "combined";
  }
  return "?";
}

Variant variant_from_name(const std::string& s) {
  if (s == "plain") return Variant::plain;
  if (s == "epistemic") return Variant::epistemic;
  if (s == "aleatoric") return Variant::aleatoric;
  if (s == "combined") return Variant::combined;
  throw ConfigError("unknown variant: " + s);
}

void ArchConfig::validate() const {
  if (depth < 1 || depth > 6) throw ConfigError("arch: depth out of range");
  if (base_width < 4) throw ConfigError("arch: base width must be >= 4");
  if (K < 1 || K > 16) throw ConfigError("arch: K out of range");
  if (me_reduction < 1) throw ConfigError("arch: reduction must be >= 1");
  const int div = 1 << depth;
  if (patch_extent % div != 0)
    throw ConfigError("arch: patch extent must be divisible by 2^depth");
}

namespace {

int stage_width(const ArchConfig& cfg, int level) { return cfg.base_width << level; }

ConvBlock make_conv(int co, int ci, int k, RngStream& rng) {
  ConvBlock blk;
  Tensor w({static_cast<std::size_t>(co), static_cast<std::size_t>(ci),
            static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
  kaiming_uniform(w, static_cast<std::size_t>(ci) * k * k, rng);
  blk.w = make_var(std::move(w), true);
  blk.b = make_var(Tensor({static_cast<std::size_t>(co)}), true);
  return blk;
}

ExciteGate make_gate(int channels, const ArchConfig& cfg, RngStream& rng) {
  ExciteGate g;
  const int hidden = std::max(1, channels / cfg.me_reduction);
  Tensor w1({static_cast<std::size_t>(hidden), static_cast<std::size_t>(cfg.K)});
  kaiming_uniform(w1, static_cast<std::size_t>(cfg.K), rng);
  g.w1 = make_var(std::move(w1), true);
  g.b1 = make_var(Tensor({static_cast<std::size_t>(hidden)}), true);
  Tensor w2({static_cast<std::size_t>(channels), static_cast<std::size_t>(hidden)});
  kaiming_uniform(w2, static_cast<std::size_t>(hidden), rng);
  g.w2 = make_var(std::move(w2), true);
  g.b2 = make_var(Tensor({static_cast<std::size_t>(channels)}), true);
  return g;
}

void push_block(std::vector<std::pair<std::string, Var>>& out, const std::string& name,
                const ConvBlock& blk) {
  out.emplace_back(name + ".w", blk.w);
  out.emplace_back(name + ".b", blk.b);
}

void push_gate(std::vector<std::pair<std::string, Var>>& out, const std::string& name,
               const ExciteGate& g) {
  out.emplace_back(name + ".fc1.w", g.w1);
  out.emplace_back(name + ".fc1.b", g.b1);
  out.emplace_back(name + ".fc2.w", g.w2);
  out.emplace_back(name + ".fc2.b", g.b2);
}

}  // namespace

std::vector<std::pair<std::string, Var>> SegModel::named_params() const {
  std::vector<std::pair<std::string, Var>> out;
  for (std::size_t d = 0; d < enc1.size(); ++d) {
    const std::string p = "enc" + std::to_string(d);
    push_block(out, p + ".conv1", enc1[d]);
    push_block(out, p + ".conv2", enc2[d]);
    push_gate(out, p + ".gate", enc_gates[d]);
  }
  push_block(out, "bottleneck.conv1", bottleneck1);
  push_block(out, "bottleneck.conv2", bottleneck2);
  for (std::size_t d = 0; d < dec1.size(); ++d) {
    const std::string p = "dec" + std::to_string(d);
    push_block(out, p + ".up", up[d]);
    push_block(out, p + ".conv1", dec1[d]);
    push_block(out, p + ".conv2", dec2[d]);
    push_gate(out, p + ".gate", dec_gates[d]);
  }
  push_block(out, "head", head);
  if (has_variance_head()) push_block(out, "var_head", var_head);
  return out;
}

std::vector<Var> SegModel::params() const {
  std::vector<Var> out;
  for (auto& [name, v] : named_params()) out.push_back(v);
  return out;
}

std::size_t SegModel::param_count() const {
  std::size_t n = 0;
  for (const Var& p : params()) n += p->value.size();
  return n;
}

void SegModel::set_requires_grad(bool on) const {
  for (const Var& p : params()) p->requires_grad = on;
}

SegModel build_model(const ArchConfig& cfg, Variant variant, double dropout_p,
                     std::uint64_t seed, bool dropout_last_only) {
  cfg.validate();
  if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout p must be in [0, 1)");
  SegModel m;
  m.cfg = cfg;
  m.variant = variant;
  m.dropout_p = dropout_p;
  m.dropout_last_only = dropout_last_only;

  RngStream rng(seed, "init");
  for (int d = 0; d < cfg.depth; ++d) {
    const int ci = d == 0 ? cfg.K : stage_width(cfg, d - 1);
    const int co = stage_width(cfg, d);
    m.enc1.push_back(make_conv(co, ci, 3, rng));
    m.enc2.push_back(make_conv(co, co, 3, rng));
    m.enc_gates.push_back(make_gate(co, cfg, rng));
  }
  const int cb = stage_width(cfg, cfg.depth);
  m.bottleneck1 = make_conv(cb, stage_width(cfg, cfg.depth - 1), 3, rng);
  m.bottleneck2 = make_conv(cb, cb, 3, rng);
  for (int d = cfg.depth - 1; d >= 0; --d) {
    const int cs = stage_width(cfg, d);       // skip / stage channels
    const int cc = stage_width(cfg, d + 1);   // coarser channels
    m.up.push_back(make_conv(cs, cc, 3, rng));
    m.dec1.push_back(make_conv(cs, 2 * cs, 3, rng));
    m.dec2.push_back(make_conv(cs, cs, 3, rng));
    m.dec_gates.push_back(make_gate(cs, cfg, rng));
  }
  m.head = make_conv(2, cfg.base_width, 1, rng);
  if (m.has_variance_head()) {
    // zero init: the head starts out predicting unit variance, keeping the
    // loss noise moderate until the logits have taken shape
    m.var_head = make_conv(1, cfg.base_width, 1, rng);
    m.var_head.w->value.fill(0.0);
  }
  return m;
}

Var marker_excite(const Var& features, MarkerSet availability, int K, const ExciteGate& gate) {
  Var onehot = constant(Tensor::from_values({static_cast<std::size_t>(K)},
                                            availability.onehot(K)));
  Var h = relu(dense(onehot, gate.w1, gate.b1));
  Var g = sigmoid(dense(h, gate.w2, gate.b2));
  return scale_channels(features, g);
}

MarkerSet sample_marker_subset(MarkerSet available, RngStream& rng) {
  if (available.empty()) throw ConfigError("sample_marker_subset: empty availability");
  const std::vector<int> members = available.members();
  const std::uint64_t n_subsets = (1ull << members.size()) - 1ull;
  const std::uint64_t pick = 1ull + rng.uniform_int(n_subsets);  // in [1, 2^n - 1]
  MarkerSet out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if ((pick >> i) & 1ull) out.add(members[i]);
  }
  return out;
}

Tensor mask_channels(const Tensor& patch, MarkerSet keep) {
  if (patch.rank() != 3) throw ShapeError("mask_channels: need K x H x W");
  Tensor out = patch;
  const std::size_t plane = patch.extent(1) * patch.extent(2);
  for (std::size_t c = 0; c < patch.extent(0); ++c) {
    if (!keep.contains(static_cast<int>(c) + 1)) {
      double* p = out.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = 0.0;
    }
  }
  return out;
}

SegOutput seg_forward(const SegModel& model, const Tensor& patch, MarkerSet availability,
                      RunMode mode, RngStream* rng) {
  const ArchConfig& cfg = model.cfg;
  if (patch.rank() != 3 || patch.extent(0) != static_cast<std::size_t>(cfg.K))
    throw ShapeError("seg_forward: patch must be K x H x W");
  if (patch.extent(1) % (1u << cfg.depth) != 0 || patch.extent(2) % (1u << cfg.depth) != 0)
    throw ShapeError("seg_forward: patch extent incompatible with depth");
  if (availability.empty()) throw ConfigError("seg_forward: empty availability");

  const bool stochastic = model.has_dropout() && mode != RunMode::det_infer;
  const bool drop_everywhere = stochastic && !model.dropout_last_only;
  const bool drop_last = stochastic && model.dropout_last_only;
  if (stochastic && rng == nullptr) throw ConfigError("seg_forward: stochastic mode needs rng");
  RngStream dummy(0);
  RngStream& rs = rng ? *rng : dummy;

  auto maybe_drop = [&](const Var& v) {
    return drop_everywhere ? dropout(v, model.dropout_p, true, rs) : v;
  };

  Var x = constant(patch);
  std::vector<Var> skips;
  for (int d = 0; d < cfg.depth; ++d) {
    x = maybe_drop(relu(conv2d(x, model.enc1[d].w, model.enc1[d].b)));
    x = maybe_drop(relu(conv2d(x, model.enc2[d].w, model.enc2[d].b)));
    x = marker_excite(x, availability, cfg.K, model.enc_gates[d]);
    skips.push_back(x);
    x = maxpool2d(x, 2);
  }
  x = maybe_drop(relu(conv2d(x, model.bottleneck1.w, model.bottleneck1.b)));
  x = maybe_drop(relu(conv2d(x, model.bottleneck2.w, model.bottleneck2.b)));
  for (int i = 0; i < cfg.depth; ++i) {
    const int level = cfg.depth - 1 - i;
    // halve channels at the coarse resolution, then upsample and merge skip
    x = maybe_drop(relu(conv2d(x, model.up[i].w, model.up[i].b)));
    x = upsample_nearest(x, 2);
    x = concat_channels(skips[level], x);
    x = maybe_drop(relu(conv2d(x, model.dec1[i].w, model.dec1[i].b)));
    x = maybe_drop(relu(conv2d(x, model.dec2[i].w, model.dec2[i].b)));
    x = marker_excite(x, availability, cfg.K, model.dec_gates[i]);
  }
  if (drop_last) x = dropout(x, model.dropout_p, true, rs);

  SegOutput out;
  out.logits = conv2d(x, model.head.w, model.head.b);
  if (model.has_variance_head())
    out.log_variance = conv2d(x, model.var_head.w, model.var_head.b);
  return out;
}

void save_seg_model(const std::string& path, const SegModel& model) {
  nlohmann::json meta;
  meta["kind"] = "seg_model";
  meta["variant"] = variant_name(model.variant);
  meta["dropout_p"] = model.dropout_p;
  meta["dropout_last_only"] = model.dropout_last_only;
  meta["arch"] = {{"depth", model.cfg.depth},
                  {"base_width", model.cfg.base_width},
                  {"patch_extent", model.cfg.patch_extent},
                  {"K", model.cfg.K},
                  {"me_reduction", model.cfg.me_reduction}};
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& [name, v] : model.named_params()) tensors.emplace_back(name, &v->value);
  save_checkpoint(path, meta.dump(), tensors);
}

SegModel load_seg_model(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  nlohmann::json meta = nlohmann::json::parse(ck.meta_json);
  if (meta.value("kind", "") != "seg_model")
    throw MissingInputError("not a segmentation checkpoint: " + path);
  ArchConfig cfg;
  cfg.depth = meta["arch"]["depth"].get<int>();
  cfg.base_width = meta["arch"]["base_width"].get<int>();
  cfg.patch_extent = meta["arch"]["patch_extent"].get<int>();
  cfg.K = meta["arch"]["K"].get<int>();
  cfg.me_reduction = meta["arch"]["me_reduction"].get<int>();
  SegModel model = build_model(cfg, variant_from_name(meta["variant"].get<std::string>()),
                               meta["dropout_p"].get<double>(), 0,
                               meta["dropout_last_only"].get<bool>());
  for (auto& [name, v] : model.named_params()) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw MissingInputError("checkpoint missing tensor: " + name);
    check_same_shape(v->value, it->second, "load_seg_model");
    v->value = it->second;
  }
  return model;
}

}  // namespace fmseg
