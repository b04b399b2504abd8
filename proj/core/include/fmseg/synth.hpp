#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fmseg/marker.hpp"
#include "fmseg/tensor.hpp"

namespace fmseg {

enum class Split { train, val, test };

std::string split_name(Split s);
Split split_from_name(const std::string& s);

/// Per-marker rendering weights: how strongly the foreground tubes and the
/// confounder tubes show up in that channel.
struct MarkerVisibility {
  double foreground = 1.0;
  double confounder = 0.0;
};

/// Generator settings. Defaults reproduce the working scale: 5 markers,
/// 8 samples split 5/1/2, 230 patches of 64x64, foreground close to 11.4% of
/// pixels. Channels differ in informativeness: some show the target tubes
/// clearly, one mostly shows confounder vessels, one is noisy, which spreads
/// segmentation quality across marker combinations.
struct DatasetSpec {
  int K = 5;
  int samples = 8;
  int train_samples = 5;
  int val_samples = 1;
  std::vector<int> patches_per_sample;  // defaulted to total 230 when empty
  int patch_extent = 64;
  double fg_target = 0.114;
  double fg_accept_lo = 0.07;
  double fg_accept_hi = 0.17;
  std::vector<double> noise_sigma;            // per marker; defaulted when empty
  std::vector<MarkerVisibility> visibility;   // per marker; defaulted when empty
  std::uint64_t seed = 0;

  void apply_defaults();
  void validate() const;
  int total_patches() const;
};

struct MarkerPatch {
  Tensor channels;  // K x H x W in [0,1]; unavailable channels are exactly 0
  Tensor mask;      // H x W binary
  int sample_id = 0;
  int index_in_sample = 0;
  int patch_id = 0;  // global, sequential
  Split split = Split::train;
  MarkerSet availability;
};

/// Name plus the availability assigned to each training sample, positionally:
/// entry i applies to the i-th training sample in ascending sample id.
struct Scenario {
  std::string name;
  std::vector<MarkerSet> train_availability;
};

Scenario scenario_full(int K, int train_samples);
/// The five-sample ablation pattern m135 / m124 / m35 / m23 / m45.
Scenario scenario_case6();
Scenario scenario_from_json_file(const std::string& path);

/// Deterministic pure function of the dataset spec.
std::vector<MarkerPatch> generate_dataset(const DatasetSpec& spec);

/// Applies the scenario's per-sample availability to training patches
/// (masking channels to zero); validation and test patches are untouched.
void apply_scenario(std::vector<MarkerPatch>& patches, const Scenario& scenario);

double mean_foreground_fraction(const std::vector<MarkerPatch>& patches);

// ---- on-disk dataset -------------------------------------------------------
// Layout: <dir>/sample_<s>/p<idx>.json + p<idx>.raw (float32 LE planes:
// K channels then the mask), plus <dir>/manifest.json listing every patch
// with an FNV-1a content hash.
void save_dataset(const std::string& dir, const std::vector<MarkerPatch>& patches,
                  const DatasetSpec& spec);
std::vector<MarkerPatch> load_dataset(const std::string& dir);
DatasetSpec load_dataset_spec(const std::string& dir);

DatasetSpec dataset_spec_from_json_file(const std::string& path);
std::string dataset_spec_to_json(const DatasetSpec& spec);

}  // namespace fmseg
