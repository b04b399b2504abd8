#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fmseg/io_util.hpp"
#include "fmseg/synth.hpp"

using namespace fmseg;

namespace {

DatasetSpec small_spec(std::uint64_t seed) {
  DatasetSpec spec;
  spec.patches_per_sample.assign(8, 3);
  spec.patch_extent = 32;
  spec.seed = seed;
  spec.apply_defaults();
  return spec;
}

}  // namespace

TEST_CASE("generation is a pure function of the dataset spec") {
  const auto a = generate_dataset(small_spec(5));
  const auto b = generate_dataset(small_spec(5));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].patch_id == b[i].patch_id);
    for (std::size_t j = 0; j < a[i].channels.size(); ++j)
      CHECK(a[i].channels[j] == b[i].channels[j]);
    for (std::size_t j = 0; j < a[i].mask.size(); ++j) CHECK(a[i].mask[j] == b[i].mask[j]);
  }
  const auto c = generate_dataset(small_spec(6));
  bool differ = false;
  for (std::size_t j = 0; j < a[0].channels.size(); ++j) {
    if (a[0].channels[j] != c[0].channels[j]) differ = true;
  }
  CHECK(differ);
}

TEST_CASE("the default spec hits the target foreground fraction and the 5/1/2 split") {
  DatasetSpec spec;
  spec.seed = 7;
  spec.apply_defaults();
  CHECK(spec.total_patches() == 230);
  const auto patches = generate_dataset(spec);
  CHECK(patches.size() == 230);

  const double frac = mean_foreground_fraction(patches);
  CHECK(frac >= 0.08);
  CHECK(frac <= 0.15);

  int split_samples[3][8] = {};
  for (const MarkerPatch& p : patches)
    split_samples[static_cast<int>(p.split)][p.sample_id] = 1;
  int train = 0, val = 0, test = 0;
  for (int s = 0; s < 8; ++s) {
    train += split_samples[0][s];
    val += split_samples[1][s];
    test += split_samples[2][s];
    // a sample never spans two splits
    CHECK(split_samples[0][s] + split_samples[1][s] + split_samples[2][s] == 1);
  }
  CHECK(train == 5);
  CHECK(val == 1);
  CHECK(test == 2);
}

TEST_CASE("an all-zero visibility row yields a pure-noise channel") {
  DatasetSpec spec = small_spec(11);
  spec.visibility[2] = {0.0, 0.0};
  const auto patches = generate_dataset(spec);
  // correlation between channel 3 and the mask should vanish
  double acc = 0.0;
  for (const MarkerPatch& p : patches) {
    const std::size_t plane = p.mask.size();
    double mean_c = 0.0, mean_m = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      mean_c += p.channels[2 * plane + i];
      mean_m += p.mask[i];
    }
    mean_c /= plane;
    mean_m /= plane;
    double cov = 0.0, var_c = 0.0, var_m = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double dc = p.channels[2 * plane + i] - mean_c;
      const double dm = p.mask[i] - mean_m;
      cov += dc * dm;
      var_c += dc * dc;
      var_m += dm * dm;
    }
    acc += cov / std::sqrt(var_c * var_m + 1e-30);
  }
  CHECK(std::abs(acc / static_cast<double>(patches.size())) < 0.05);
}

TEST_CASE("the full scenario leaves the dataset untouched") {
  auto patches = generate_dataset(small_spec(3));
  const auto before = patches;
  apply_scenario(patches, scenario_full(5, 5));
  for (std::size_t i = 0; i < patches.size(); ++i) {
    CHECK(patches[i].availability == before[i].availability);
    for (std::size_t j = 0; j < patches[i].channels.size(); ++j)
      CHECK(patches[i].channels[j] == before[i].channels[j]);
  }
}

TEST_CASE("the five-sample ablation scenario assigns availability positionally") {
  auto patches = generate_dataset(small_spec(4));
  apply_scenario(patches, scenario_case6());
  const MarkerSet expected[5] = {MarkerSet::parse("m135"), MarkerSet::parse("m124"),
                                 MarkerSet::parse("m35"), MarkerSet::parse("m23"),
                                 MarkerSet::parse("m45")};
  for (const MarkerPatch& p : patches) {
    if (p.split == Split::train) {
      CHECK(p.availability == expected[p.sample_id]);
    } else {
      CHECK(p.availability == MarkerSet::full(5));
    }
  }
}

TEST_CASE("masked channels carry exact zeros") {
  auto patches = generate_dataset(small_spec(9));
  Scenario sc;
  sc.name = "m24_everywhere";
  sc.train_availability.assign(5, MarkerSet::parse("m24"));
  apply_scenario(patches, sc);
  for (const MarkerPatch& p : patches) {
    if (p.split != Split::train) continue;
    const std::size_t plane = p.mask.size();
    for (int c : {0, 2, 4}) {  // markers 1, 3, 5
      for (std::size_t i = 0; i < plane; ++i)
        CHECK(p.channels[static_cast<std::size_t>(c) * plane + i] == 0.0);
    }
  }
}

TEST_CASE("scenario validation rejects bad inputs") {
  auto patches = generate_dataset(small_spec(2));
  Scenario wrong_size;
  wrong_size.train_availability.assign(3, MarkerSet::full(5));
  CHECK_THROWS_AS(apply_scenario(patches, wrong_size), ConfigError);
  Scenario with_empty;
  with_empty.train_availability.assign(5, MarkerSet::full(5));
  with_empty.train_availability[2] = MarkerSet{};
  CHECK_THROWS_AS(apply_scenario(patches, with_empty), ConfigError);
}

TEST_CASE("an unreachable foreground band fails after bounded retries") {
  DatasetSpec spec = small_spec(1);
  spec.fg_accept_lo = 0.90;  // tubes cannot cover 90% of the patch
  spec.fg_accept_hi = 0.95;
  CHECK_THROWS_AS(generate_dataset(spec), NumericError);
}

TEST_CASE("combination enumeration is canonical") {
  CHECK(enumerate_combinations(5).size() == 31);
  const auto k1 = enumerate_combinations(1);
  REQUIRE(k1.size() == 1);
  CHECK(k1[0] == MarkerSet::parse("m1"));
  const auto k3 = enumerate_combinations(3);
  REQUIRE(k3.size() == 7);
  CHECK(k3.front() == MarkerSet::parse("m1"));
  CHECK(k3.back() == MarkerSet::parse("m123"));
  for (std::size_t i = 0; i + 1 < k3.size(); ++i)
    CHECK(k3[i].canonical() < k3[i + 1].canonical());
  CHECK_THROWS_AS(enumerate_combinations(0), ConfigError);
  CHECK(combination_index(MarkerSet::parse("m1"), 5) == 0);
  CHECK(combination_index(MarkerSet::parse("m12345"), 5) == 30);
}

TEST_CASE("datasets round-trip through disk with a stable manifest") {
  namespace fs = std::filesystem;
  const DatasetSpec spec = small_spec(13);
  const auto patches = generate_dataset(spec);
  const std::string dir = (fs::temp_directory_path() / "fmseg_ds_test").string();
  fs::remove_all(dir);
  save_dataset(dir, patches, spec);

  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    CHECK(loaded[i].patch_id == patches[i].patch_id);
    CHECK(loaded[i].sample_id == patches[i].sample_id);
    CHECK(loaded[i].split == patches[i].split);
    CHECK(loaded[i].availability == patches[i].availability);
    for (std::size_t j = 0; j < patches[i].channels.size(); ++j)
      CHECK(loaded[i].channels[j] ==
            doctest::Approx(patches[i].channels[j]).epsilon(1e-6));
    for (std::size_t j = 0; j < patches[i].mask.size(); ++j)
      CHECK(loaded[i].mask[j] == patches[i].mask[j]);
  }
  const DatasetSpec loaded_spec = load_dataset_spec(dir);
  CHECK(loaded_spec.K == spec.K);
  CHECK(loaded_spec.seed == spec.seed);

  // manifest bytes are reproducible
  const std::string manifest1 =
      read_text_file((fs::path(dir) / "manifest.json").string());
  fs::remove_all(dir);
  save_dataset(dir, patches, spec);
  const std::string manifest2 =
      read_text_file((fs::path(dir) / "manifest.json").string());
  CHECK(manifest1 == manifest2);
  fs::remove_all(dir);
}
