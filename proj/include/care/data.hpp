#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "care/rng.hpp"
#include "care/tensor.hpp"

namespace care {

struct RegionSpec {
  std::string name;
  double building_rate = 6.0;
  int size_min = 3;
  int size_max = 9;
  float noise_sigma = 0.1f;
  int density_bias = 0;
};

struct RasterTile {
  Tensor input;   // C x H x W
  Tensor y_star;  // H x W, values in [0,1]
  std::string region;
  int tile_id = 0;
};

struct DatasetManifest {
  int version = 1;
  std::uint64_t global_seed = 0;
  int tile_h = 32;
  int tile_w = 32;
  int channels = 4;
  int tiles_per_region = 100;
  double train_frac = 0.7;
  double val_frac = 0.15;
  double test_frac = 0.15;
  std::vector<RegionSpec> regions;
  std::vector<double> channel_mean;  // train split, filled by generate_dataset
  std::vector<double> channel_std;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<RasterTile> tiles;  // indexed by tile_id
  std::vector<int> train_ids, val_ids, test_ids;
};

// The 14 built-in regions, ordered easy to hard.
std::vector<RegionSpec> default_regions();

void validate_manifest(const DatasetManifest& m);

// Per-region contiguous split sizes from the manifest fractions.
struct SplitSizes {
  int train = 0, val = 0, test = 0;
};
SplitSizes split_sizes(const DatasetManifest& m);

// Building-mask and box-filter pieces of the tile recipe, exposed for
// property tests. The filter window is (2*radius+1)^2, zero-padded,
// normalized by the full window size.
std::vector<float> rasterize_buildings(Rng& rng, int h, int w, int k,
                                       const RegionSpec& region);
std::vector<float> box_filter(const std::vector<float>& img, int h, int w,
                              int radius);

RasterTile generate_tile(const RegionSpec& region, int tile_id,
                         std::uint64_t global_seed, int h, int w);
Dataset generate_dataset(DatasetManifest manifest);

// Stratified per-region draw from the train split, n ids per region.
std::vector<int> sample_nshot(const DatasetManifest& manifest, int n,
                              std::uint64_t seed);

void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

// Batch assembly: inputs are normalized with the manifest channel stats.
Tensor batch_inputs(const Dataset& ds, const std::vector<int>& ids);
Tensor batch_targets(const Dataset& ds, const std::vector<int>& ids);

}  // namespace care
