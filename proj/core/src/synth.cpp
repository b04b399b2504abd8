#include "fmseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fmseg/io_util.hpp"
#include "fmseg/rng.hpp"
#include "fmseg/segnet.hpp"

namespace fs = std::filesystem;

namespace fmseg {

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split: " + s);
}

void DatasetSpec::apply_defaults() {
  if (patches_per_sample.empty()) {
    patches_per_sample.assign(static_cast<std::size_t>(samples), 29);
    // trim the tail so the default total lands on 230
    for (std::size_t i = patches_per_sample.size(); i-- > 0 && total_patches() > 230;)
      patches_per_sample[i] -= 1;
  }
  if (noise_sigma.empty()) {
    noise_sigma = {0.05, 0.10, 0.08, 0.10, 0.22};
    noise_sigma.resize(static_cast<std::size_t>(K), 0.10);
  }
  if (visibility.empty()) {
    visibility = {{1.0, 0.0}, {0.75, 0.0}, {0.9, 0.25}, {0.35, 1.0}, {0.45, 0.0}};
    visibility.resize(static_cast<std::size_t>(K), MarkerVisibility{0.6, 0.0});
  }
}

void DatasetSpec::validate() const {
  if (K < 1 || K > 9) throw ConfigError("dataset: K out of range");
  if (samples < 3) throw ConfigError("dataset: need at least 3 samples");
  if (train_samples + val_samples >= samples)
    throw ConfigError("dataset: split leaves no test samples");
  if (patches_per_sample.size() != static_cast<std::size_t>(samples))
    throw ConfigError("dataset: patches_per_sample size mismatch");
  if (patch_extent < 16) throw ConfigError("dataset: patch extent too small");
  if (noise_sigma.size() != static_cast<std::size_t>(K))
    throw ConfigError("dataset: noise_sigma size mismatch");
  if (visibility.size() != static_cast<std::size_t>(K))
    throw ConfigError("dataset: visibility size mismatch");
  if (fg_accept_lo >= fg_accept_hi) throw ConfigError("dataset: bad acceptance band");
}

int DatasetSpec::total_patches() const {
  int n = 0;
  for (int c : patches_per_sample) n += c;
  return n;
}

namespace {

struct PlanarMap {
  int extent;
  std::vector<double> v;
  explicit PlanarMap(int e) : extent(e), v(static_cast<std::size_t>(e) * e, 0.0) {}
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * extent + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * extent + x]; }
};

// stamps a filled disc, max-blending intensity, marking coverage
void stamp_disc(PlanarMap& intensity, std::vector<char>& covered, double cx, double cy,
                double radius, double value) {
  const int e = intensity.extent;
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(e - 1, static_cast<int>(std::ceil(cy + radius)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(e - 1, static_cast<int>(std::ceil(cx + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        intensity.at(y, x) = std::max(intensity.at(y, x), value);
        covered[static_cast<std::size_t>(y) * e + x] = 1;
      }
    }
  }
}

// one meandering ribbon: a random walk dilated to a 2-5 px wide tube
void draw_tube(PlanarMap& intensity, std::vector<char>& covered, int extent, RngStream& rng) {
  double x = rng.uniform(0.0, extent);
  double y = rng.uniform(0.0, extent);
  double theta = rng.uniform(0.0, 6.283185307179586);
  const int length = extent / 2 + static_cast<int>(rng.uniform_int(extent / 2 + 1));
  const double width = 2.0 + rng.uniform(0.0, 3.0);  // ribbon width 2-5 px
  const double radius = width / 2.0;
  const double brightness = rng.uniform(0.7, 1.0);
  for (int s = 0; s < length; ++s) {
    stamp_disc(intensity, covered, x, y, radius, brightness);
    theta += 0.3 * rng.normal();
    x += std::cos(theta);
    y += std::sin(theta);
    if (x < -radius || x > extent + radius || y < -radius || y > extent + radius) break;
  }
}

// separable gaussian, sigma = 1 px, kernel truncated at 3 sigma, boundary
// renormalized
void gaussian_blur_sigma1(PlanarMap& img) {
  static const double k[7] = {0.00443184841193801, 0.05399096651318806, 0.24197072451914337,
                              0.3989422804014327,  0.24197072451914337, 0.05399096651318806,
                              0.00443184841193801};
  const int e = img.extent;
  PlanarMap tmp(e);
  for (int y = 0; y < e; ++y) {
    for (int x = 0; x < e; ++x) {
      double acc = 0.0, wsum = 0.0;
      for (int d = -3; d <= 3; ++d) {
        const int xx = x + d;
        if (xx < 0 || xx >= e) continue;
        acc += k[d + 3] * img.at(y, xx);
        wsum += k[d + 3];
      }
      tmp.at(y, x) = acc / wsum;
    }
  }
  for (int x = 0; x < e; ++x) {
    for (int y = 0; y < e; ++y) {
      double acc = 0.0, wsum = 0.0;
      for (int d = -3; d <= 3; ++d) {
        const int yy = y + d;
        if (yy < 0 || yy >= e) continue;
        acc += k[d + 3] * tmp.at(yy, x);
        wsum += k[d + 3];
      }
      img.at(y, x) = acc / wsum;
    }
  }
}

MarkerPatch generate_patch(const DatasetSpec& spec, int sample_id, int index, int patch_id) {
  const int e = spec.patch_extent;
  const std::size_t area = static_cast<std::size_t>(e) * e;
  RngStream rng(spec.seed, "patch", static_cast<std::uint64_t>(sample_id),
                static_cast<std::uint64_t>(index));

  PlanarMap fg(e);
  std::vector<char> fg_cover;
  // area-scaled tube budget targeting the foreground fraction
  const double area_scale = static_cast<double>(area) / 4096.0;
  const int base_tubes = std::max(2, static_cast<int>(std::lround(3.6 * area_scale)));
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 100) throw NumericError("generate_dataset: foreground fraction infeasible");
    fg = PlanarMap(e);
    fg_cover.assign(area, 0);
    const int n_tubes = base_tubes + static_cast<int>(rng.uniform_int(3)) - 1;
    for (int t = 0; t < std::max(1, n_tubes); ++t) draw_tube(fg, fg_cover, e, rng);
    std::size_t on = 0;
    for (char c : fg_cover) on += c;
    const double frac = static_cast<double>(on) / static_cast<double>(area);
    if (frac >= spec.fg_accept_lo && frac <= spec.fg_accept_hi) break;
  }

  PlanarMap conf(e);
  std::vector<char> conf_cover(area, 0);
  const int n_conf = 1 + static_cast<int>(rng.uniform_int(3));
  for (int t = 0; t < n_conf; ++t) draw_tube(conf, conf_cover, e, rng);

  MarkerPatch patch;
  patch.sample_id = sample_id;
  patch.index_in_sample = index;
  patch.patch_id = patch_id;
  patch.availability = MarkerSet::full(spec.K);
  patch.channels = Tensor({static_cast<std::size_t>(spec.K), static_cast<std::size_t>(e),
                           static_cast<std::size_t>(e)});
  patch.mask = Tensor({static_cast<std::size_t>(e), static_cast<std::size_t>(e)});
  for (std::size_t i = 0; i < area; ++i) patch.mask[i] = fg_cover[i] ? 1.0 : 0.0;

  for (int c = 0; c < spec.K; ++c) {
    PlanarMap img(e);
    const MarkerVisibility& vis = spec.visibility[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < area; ++i)
      img.v[i] = vis.foreground * fg.v[i] + vis.confounder * conf.v[i];
    gaussian_blur_sigma1(img);
    const double sigma = spec.noise_sigma[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < area; ++i) {
      const double noisy = img.v[i] + sigma * rng.normal();
      patch.channels[static_cast<std::size_t>(c) * area + i] = std::clamp(noisy, 0.0, 1.0);
    }
  }
  return patch;
}

}  // namespace

std::vector<MarkerPatch> generate_dataset(const DatasetSpec& spec_in) {
  DatasetSpec spec = spec_in;
  spec.apply_defaults();
  spec.validate();

  struct Slot {
    int sample;
    int index;
    int patch_id;
  };
  std::vector<Slot> slots;
  int pid = 0;
  for (int s = 0; s < spec.samples; ++s) {
    for (int i = 0; i < spec.patches_per_sample[static_cast<std::size_t>(s)]; ++i)
      slots.push_back({s, i, pid++});
  }
  std::vector<MarkerPatch> patches(slots.size());
  parallel_for_each(slots.size(), [&](std::size_t i) {
    patches[i] = generate_patch(spec, slots[i].sample, slots[i].index, slots[i].patch_id);
  });
  for (MarkerPatch& p : patches) {
    if (p.sample_id < spec.train_samples)
      p.split = Split::train;
    else if (p.sample_id < spec.train_samples + spec.val_samples)
      p.split = Split::val;
    else
      p.split = Split::test;
  }
  return patches;
}

Scenario scenario_full(int K, int train_samples) {
  Scenario s;
  s.name = "full";
  s.train_availability.assign(static_cast<std::size_t>(train_samples), MarkerSet::full(K));
  return s;
}

Scenario scenario_case6() {
  Scenario s;
  s.name = "case6";
  s.train_availability = {MarkerSet::parse("m135"), MarkerSet::parse("m124"),
                          MarkerSet::parse("m35"), MarkerSet::parse("m23"),
                          MarkerSet::parse("m45")};
  return s;
}

Scenario scenario_from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingInputError("cannot open scenario: " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  Scenario s;
  s.name = j.at("name").get<std::string>();
  for (const auto& e : j.at("train_availability"))
    s.train_availability.push_back(MarkerSet::parse(e.get<std::string>()));
  return s;
}

void apply_scenario(std::vector<MarkerPatch>& patches, const Scenario& scenario) {
  // collect train samples in ascending id order
  std::vector<int> train_ids;
  for (const MarkerPatch& p : patches) {
    if (p.split == Split::train &&
        std::find(train_ids.begin(), train_ids.end(), p.sample_id) == train_ids.end())
      train_ids.push_back(p.sample_id);
  }
  std::sort(train_ids.begin(), train_ids.end());
  if (train_ids.size() != scenario.train_availability.size())
    throw ConfigError("scenario does not name every training sample");
  for (const MarkerSet& a : scenario.train_availability) {
    if (a.empty()) throw ConfigError("scenario has an empty availability set");
  }
  for (MarkerPatch& p : patches) {
    if (p.split != Split::train) continue;
    const auto it = std::find(train_ids.begin(), train_ids.end(), p.sample_id);
    const std::size_t rank = static_cast<std::size_t>(it - train_ids.begin());
    p.availability = scenario.train_availability[rank];
    p.channels = mask_channels(p.channels, p.availability);
  }
}

double mean_foreground_fraction(const std::vector<MarkerPatch>& patches) {
  double acc = 0.0;
  for (const MarkerPatch& p : patches) acc += p.mask.sum() / static_cast<double>(p.mask.size());
  return acc / static_cast<double>(patches.size());
}

// ---- disk format -----------------------------------------------------------

namespace {

nlohmann::json spec_to_json(const DatasetSpec& spec) {
  nlohmann::json j;
  j["K"] = spec.K;
  j["samples"] = spec.samples;
  j["train_samples"] = spec.train_samples;
  j["val_samples"] = spec.val_samples;
  j["patches_per_sample"] = spec.patches_per_sample;
  j["patch_extent"] = spec.patch_extent;
  j["fg_target"] = spec.fg_target;
  j["fg_accept_lo"] = spec.fg_accept_lo;
  j["fg_accept_hi"] = spec.fg_accept_hi;
  j["noise_sigma"] = spec.noise_sigma;
  nlohmann::json vis = nlohmann::json::array();
  for (const auto& v : spec.visibility) vis.push_back({v.foreground, v.confounder});
  j["visibility"] = vis;
  j["seed"] = spec.seed;
  return j;
}

DatasetSpec spec_from_json(const nlohmann::json& j) {
  DatasetSpec spec;
  spec.K = j.value("K", spec.K);
  spec.samples = j.value("samples", spec.samples);
  spec.train_samples = j.value("train_samples", spec.train_samples);
  spec.val_samples = j.value("val_samples", spec.val_samples);
  if (j.contains("patches_per_sample"))
    spec.patches_per_sample = j["patches_per_sample"].get<std::vector<int>>();
  spec.patch_extent = j.value("patch_extent", spec.patch_extent);
  spec.fg_target = j.value("fg_target", spec.fg_target);
  spec.fg_accept_lo = j.value("fg_accept_lo", spec.fg_accept_lo);
  spec.fg_accept_hi = j.value("fg_accept_hi", spec.fg_accept_hi);
  if (j.contains("noise_sigma")) spec.noise_sigma = j["noise_sigma"].get<std::vector<double>>();
  if (j.contains("visibility")) {
    spec.visibility.clear();
    for (const auto& e : j["visibility"])
      spec.visibility.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
  }
  spec.seed = j.value("seed", spec.seed);
  spec.apply_defaults();
  return spec;
}

std::string patch_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%03d", index);
  return buf;
}

}  // namespace

std::string dataset_spec_to_json(const DatasetSpec& spec_in) {
  DatasetSpec spec = spec_in;
  spec.apply_defaults();
  return spec_to_json(spec).dump(2);
}

DatasetSpec dataset_spec_from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingInputError("cannot open dataset spec: " + path);
  return spec_from_json(nlohmann::json::parse(is));
}

void save_dataset(const std::string& dir, const std::vector<MarkerPatch>& patches,
                  const DatasetSpec& spec_in) {
  DatasetSpec spec = spec_in;
  spec.apply_defaults();
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["spec"] = spec_to_json(spec);
  nlohmann::json entries = nlohmann::json::array();
  for (const MarkerPatch& p : patches) {
    const fs::path sdir = fs::path(dir) / ("sample_" + std::to_string(p.sample_id));
    fs::create_directories(sdir);
    const std::string stem = patch_stem(p.index_in_sample);

    nlohmann::json side;
    side["patch_id"] = p.patch_id;
    side["sample_id"] = p.sample_id;
    side["index_in_sample"] = p.index_in_sample;
    side["split"] = split_name(p.split);
    side["availability"] = p.availability.canonical();
    side["K"] = p.channels.extent(0);
    side["extent"] = p.channels.extent(1);
    write_text_file((sdir / (stem + ".json")).string(), side.dump(2) + "\n");

    std::vector<float> raw;
    raw.reserve(p.channels.size() + p.mask.size());
    for (double v : p.channels.values()) raw.push_back(static_cast<float>(v));
    for (double v : p.mask.values()) raw.push_back(static_cast<float>(v));
    write_f32_file((sdir / (stem + ".raw")).string(), raw);

    nlohmann::json e;
    const std::string rel =
        "sample_" + std::to_string(p.sample_id) + "/" + stem + ".raw";
    e["path"] = rel;
    e["patch_id"] = p.patch_id;
    e["hash"] = hash_file_hex((fs::path(dir) / rel).string());
    entries.push_back(e);
  }
  manifest["patches"] = entries;
  write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

DatasetSpec load_dataset_spec(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw MissingInputError("dataset manifest not found in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(is);
  return spec_from_json(manifest.at("spec"));
}

std::vector<MarkerPatch> load_dataset(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw MissingInputError("dataset manifest not found in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(is);

  std::vector<MarkerPatch> patches;
  for (const auto& e : manifest.at("patches")) {
    const std::string rel = e.at("path").get<std::string>();
    const fs::path raw_path = fs::path(dir) / rel;
    fs::path side_path = raw_path;
    side_path.replace_extension(".json");
    std::ifstream sis(side_path);
    if (!sis) throw MissingInputError("patch sidecar missing: " + side_path.string());
    nlohmann::json side = nlohmann::json::parse(sis);

    MarkerPatch p;
    p.patch_id = side.at("patch_id").get<int>();
    p.sample_id = side.at("sample_id").get<int>();
    p.index_in_sample = side.at("index_in_sample").get<int>();
    p.split = split_from_name(side.at("split").get<std::string>());
    p.availability = MarkerSet::from_bits(side.at("availability").get<std::uint32_t>());
    const std::size_t K = side.at("K").get<std::size_t>();
    const std::size_t e2 = side.at("extent").get<std::size_t>();

    const std::vector<float> raw = read_f32_file(raw_path.string());
    if (raw.size() != (K + 1) * e2 * e2)
      throw MissingInputError("patch payload truncated: " + raw_path.string());
    p.channels = Tensor({K, e2, e2});
    p.mask = Tensor({e2, e2});
    for (std::size_t i = 0; i < K * e2 * e2; ++i) p.channels[i] = raw[i];
    for (std::size_t i = 0; i < e2 * e2; ++i) p.mask[i] = raw[K * e2 * e2 + i];
    patches.push_back(std::move(p));
  }
  std::sort(patches.begin(), patches.end(),
            [](const MarkerPatch& a, const MarkerPatch& b) { return a.patch_id < b.patch_id; });
  return patches;
}

}  // namespace fmseg
