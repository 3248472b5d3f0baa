#include "care/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "care/config_json.hpp"
#include "care/error.hpp"
#include "care/io.hpp"
#include "json.hpp"

namespace care {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kTileMagic[9] = "CAREtile";
constexpr std::uint32_t kTileVersion = 1;
constexpr int kTextureCell = 4;

std::string tile_filename(int tile_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "tile_%06d.bin", tile_id);
  return buf;
}

float region_constant(const std::string& name) {
  const auto h = Rng::hash_string(name);
  return 0.1f + 0.8f * static_cast<float>(h % 10000) / 10000.f;
}

void validate_region(const RegionSpec& r, int h, int w) {
  if (r.name.empty()) throw ConfigError("region: empty name");
  if (r.building_rate < 0)
    throw ConfigError("region '" + r.name + "': building_rate must be >= 0");
  if (r.size_min < 1 || r.size_max < r.size_min)
    throw ConfigError("region '" + r.name + "': bad size range [" +
                      std::to_string(r.size_min) + ", " +
                      std::to_string(r.size_max) + "]");
  if (r.size_max > h || r.size_max > w)
    throw ConfigError("region '" + r.name + "': size_max " +
                      std::to_string(r.size_max) + " exceeds tile extent");
  if (!(r.noise_sigma >= 0.f))
    throw ConfigError("region '" + r.name + "': noise_sigma must be >= 0");
}

}  // namespace

std::vector<RegionSpec> default_regions() {
  return {
      {"alpha", 2.0, 3, 6, 0.05f, 0},   {"beta", 3.0, 3, 7, 0.08f, 0},
      {"gamma", 4.0, 2, 6, 0.10f, 0},   {"delta", 5.0, 3, 8, 0.12f, 0},
      {"epsilon", 6.0, 4, 9, 0.15f, 0}, {"zeta", 6.0, 3, 7, 0.18f, 1},
      {"eta", 7.0, 2, 5, 0.20f, 0},     {"theta", 8.0, 3, 6, 0.22f, 0},
      {"iota", 8.0, 4, 8, 0.25f, 1},    {"kappa", 9.0, 2, 6, 0.28f, 0},
      {"lambda", 10.0, 3, 7, 0.30f, 0}, {"mu", 10.0, 4, 9, 0.33f, 2},
      {"nu", 11.0, 2, 5, 0.36f, 0},     {"xi", 12.0, 3, 8, 0.40f, 2},
  };
}

void validate_manifest(const DatasetManifest& m) {
  if (m.version != 1)
    throw ConfigError("manifest: unsupported version " + std::to_string(m.version));
  if (m.channels != 4)
    throw ConfigError("manifest: the tile recipe produces 4 channels, got " +
                      std::to_string(m.channels));
  if (m.tile_h < 8 || m.tile_w < 8 || m.tile_h % kTextureCell != 0 ||
      m.tile_w % kTextureCell != 0)
    throw ConfigError("manifest: tile extents must be >= 8 and divisible by " +
                      std::to_string(kTextureCell) + ", got " +
                      std::to_string(m.tile_h) + "x" + std::to_string(m.tile_w));
  if (m.tiles_per_region < 1)
    throw ConfigError("manifest: tiles_per_region must be >= 1");
  if (m.regions.empty()) throw ConfigError("manifest: no regions");
  if (m.train_frac < 0 || m.val_frac < 0 || m.test_frac < 0 ||
      std::fabs(m.train_frac + m.val_frac + m.test_frac - 1.0) > 1e-9)
    throw ConfigError("manifest: split fractions must be nonnegative and sum to 1");
  for (const RegionSpec& r : m.regions) validate_region(r, m.tile_h, m.tile_w);
  for (std::size_t i = 0; i < m.regions.size(); ++i)
    for (std::size_t j = i + 1; j < m.regions.size(); ++j)
      if (m.regions[i].name == m.regions[j].name)
        throw ConfigError("manifest: duplicate region name '" +
                          m.regions[i].name + "'");
}

SplitSizes split_sizes(const DatasetManifest& m) {
  const int n = m.tiles_per_region;
  SplitSizes s;
  s.train = static_cast<int>(std::floor(m.train_frac * n + 1e-9));
  s.val = static_cast<int>(std::floor(m.val_frac * n + 1e-9));
  s.test = n - s.train - s.val;
  return s;
}

std::vector<float> rasterize_buildings(Rng& rng, int h, int w, int k,
                                       const RegionSpec& region) {
  std::vector<float> mask(static_cast<std::size_t>(h) * w, 0.f);
  for (int rect = 0; rect < k; ++rect) {
    const int sh = rng.uniform_int(region.size_min, region.size_max);
    const int sw = rng.uniform_int(region.size_min, region.size_max);
    const int r0 = rng.uniform_int(0, h - sh);
    const int c0 = rng.uniform_int(0, w - sw);
    for (int r = r0; r < r0 + sh; ++r)
      for (int c = c0; c < c0 + sw; ++c) mask[r * w + c] = 1.f;
  }
  return mask;
}

std::vector<float> box_filter(const std::vector<float>& img, int h, int w,
                              int radius) {
  const float window = static_cast<float>((2 * radius + 1) * (2 * radius + 1));
  std::vector<float> out(img.size(), 0.f);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      float acc = 0.f;
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < h && cc >= 0 && cc < w) acc += img[rr * w + cc];
        }
      }
      out[r * w + c] = acc / window;
    }
  }
  return out;
}

RasterTile generate_tile(const RegionSpec& region, int tile_id,
                         std::uint64_t global_seed, int h, int w) {
  validate_region(region, h, w);
  if (tile_id < 0) throw ConfigError("generate_tile: tile_id must be >= 0");

  Rng rng(Rng::mix({global_seed, Rng::hash_string(region.name),
                    static_cast<std::uint64_t>(tile_id)}));

  int k = rng.poisson(region.building_rate) + region.density_bias;
  if (k < 0) k = 0;
  const std::vector<float> mask = rasterize_buildings(rng, h, w, k, region);

  std::vector<float> density = box_filter(mask, h, w, 3);
  for (float& v : density) v = std::min(1.f, std::max(0.f, v));

  const std::size_t plane = static_cast<std::size_t>(h) * w;
  RasterTile tile;
  tile.region = region.name;
  tile.tile_id = tile_id;
  tile.input = Tensor::zeros({4, h, w});
  tile.y_star = Tensor::zeros({h, w});
  tile.y_star.vec() = density;

  float* ch0 = tile.input.vec().data();
  float* ch1 = ch0 + plane;
  float* ch2 = ch1 + plane;
  float* ch3 = ch2 + plane;
  const float sigma = region.noise_sigma;

  for (std::size_t i = 0; i < plane; ++i)
    ch0[i] = 0.8f * mask[i] + sigma * rng.normal();

  // Smooth texture: bilinear value noise on a coarse lattice.
  const int gh = h / kTextureCell + 1, gw = w / kTextureCell + 1;
  std::vector<float> lattice(static_cast<std::size_t>(gh) * gw);
  for (float& v : lattice) v = rng.next_float();
  auto texture = [&](int r, int c) {
    const float fr = static_cast<float>(r) / kTextureCell;
    const float fc = static_cast<float>(c) / kTextureCell;
    const int r0 = static_cast<int>(fr), c0 = static_cast<int>(fc);
    const float tr = fr - r0, tc = fc - c0;
    const float a = lattice[r0 * gw + c0], b = lattice[r0 * gw + c0 + 1];
    const float d = lattice[(r0 + 1) * gw + c0], e = lattice[(r0 + 1) * gw + c0 + 1];
    return (a * (1 - tc) + b * tc) * (1 - tr) + (d * (1 - tc) + e * tc) * tr;
  };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      ch1[i] = 0.6f * (1.f - mask[i]) * texture(r, c) + sigma * rng.normal();
    }

  const float base = region_constant(region.name);
  for (std::size_t i = 0; i < plane; ++i) ch2[i] = base + sigma * rng.normal();

  const std::vector<float> blurred = box_filter(density, h, w, 1);
  for (std::size_t i = 0; i < plane; ++i)
    ch3[i] = blurred[i] + sigma * (0.5f + density[i]) * rng.normal();

  return tile;
}

Dataset generate_dataset(DatasetManifest manifest) {
  validate_manifest(manifest);
  Dataset ds;
  const int per = manifest.tiles_per_region;
  const SplitSizes split = split_sizes(manifest);

  for (std::size_t r = 0; r < manifest.regions.size(); ++r) {
    for (int j = 0; j < per; ++j) {
      const int id = static_cast<int>(r) * per + j;
      ds.tiles.push_back(generate_tile(manifest.regions[r], id,
                                       manifest.global_seed, manifest.tile_h,
                                       manifest.tile_w));
      if (j < split.train)
        ds.train_ids.push_back(id);
      else if (j < split.train + split.val)
        ds.val_ids.push_back(id);
      else
        ds.test_ids.push_back(id);
    }
  }

  // Two-pass channel statistics over the train split.
  const int ch = manifest.channels;
  const std::size_t plane =
      static_cast<std::size_t>(manifest.tile_h) * manifest.tile_w;
  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  const double count =
      static_cast<double>(ds.train_ids.size()) * static_cast<double>(plane);
  if (!ds.train_ids.empty()) {
    for (int id : ds.train_ids) {
      const auto& v = ds.tiles[id].input.vec();
      for (int c = 0; c < ch; ++c)
        for (std::size_t i = 0; i < plane; ++i) mean[c] += v[c * plane + i];
    }
    for (int c = 0; c < ch; ++c) mean[c] /= count;
    for (int id : ds.train_ids) {
      const auto& v = ds.tiles[id].input.vec();
      for (int c = 0; c < ch; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = v[c * plane + i] - mean[c];
          var[c] += d * d;
        }
    }
    for (int c = 0; c < ch; ++c) var[c] /= count;
  }
  manifest.channel_mean = mean;
  manifest.channel_std.assign(ch, 1.0);
  for (int c = 0; c < ch; ++c)
    manifest.channel_std[c] = std::max(std::sqrt(var[c]), 1e-6);

  ds.manifest = std::move(manifest);
  return ds;
}

std::vector<int> sample_nshot(const DatasetManifest& manifest, int n,
                              std::uint64_t seed) {
  validate_manifest(manifest);
  if (n < 1) throw ConfigError("sample_nshot: n must be >= 1");
  const SplitSizes split = split_sizes(manifest);
  const int per = manifest.tiles_per_region;

  std::vector<int> picked;
  for (std::size_t r = 0; r < manifest.regions.size(); ++r) {
    const RegionSpec& region = manifest.regions[r];
    if (n > split.train)
      throw ConfigError("sample_nshot: region '" + region.name + "' has only " +
                        std::to_string(split.train) + " train tiles, need " +
                        std::to_string(n));
    std::vector<int> ids(split.train);
    for (int j = 0; j < split.train; ++j) ids[j] = static_cast<int>(r) * per + j;

    Rng rng(Rng::mix({seed, Rng::hash_string(region.name)}));
    for (int i = 0; i < n; ++i) {
      const int j = rng.uniform_int(i, split.train - 1);
      std::swap(ids[i], ids[j]);
    }
    std::sort(ids.begin(), ids.begin() + n);
    picked.insert(picked.end(), ids.begin(), ids.begin() + n);
  }
  return picked;
}

namespace {

void write_tile(const RasterTile& tile, const std::string& path) {
  io::BinWriter out(path);
  out.str(std::string(kTileMagic, 8));
  out.u32(kTileVersion);
  const auto& shape = tile.input.shape();
  out.u32(static_cast<std::uint32_t>(shape[0]));
  out.u32(static_cast<std::uint32_t>(shape[1]));
  out.u32(static_cast<std::uint32_t>(shape[2]));
  out.u16(static_cast<std::uint16_t>(tile.region.size()));
  out.str(tile.region);
  out.f32s(tile.input.vec());
  out.f32s(tile.y_star.vec());
}

RasterTile read_tile(const std::string& path, int tile_id) {
  io::BinReader in(path);
  in.expect_magic(kTileMagic);
  in.expect_version(kTileVersion);
  const int c = static_cast<int>(in.u32());
  const int h = static_cast<int>(in.u32());
  const int w = static_cast<int>(in.u32());
  if (c < 1 || h < 1 || w < 1)
    throw FormatError("'" + path + "' has bad tensor extents at offset 12");
  RasterTile tile;
  tile.tile_id = tile_id;
  tile.region = in.str(in.u16());
  tile.input = Tensor::zeros({c, h, w});
  tile.y_star = Tensor::zeros({h, w});
  in.f32s(tile.input.vec());
  in.f32s(tile.y_star.vec());
  in.expect_eof();
  return tile;
}

}  // namespace

void check_json_allowed(const json& j, const std::vector<std::string>& allowed,
                        const std::string& where) {
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw FormatError(where + ": unknown key '" + item.key() + "'");
  }
}

void check_json_keys(const json& j, const std::vector<std::string>& required,
                     const std::string& where) {
  check_json_allowed(j, required, where);
  for (const std::string& key : required) {
    if (!j.contains(key)) throw FormatError(where + ": missing key '" + key + "'");
  }
}

json manifest_to_json(const DatasetManifest& m) {
  json regions = json::array();
  for (const RegionSpec& r : m.regions) {
    regions.push_back({{"name", r.name},
                       {"building_rate", r.building_rate},
                       {"size_min", r.size_min},
                       {"size_max", r.size_max},
                       {"noise_sigma", r.noise_sigma},
                       {"density_bias", r.density_bias}});
  }
  return json{{"version", m.version},
              {"global_seed", m.global_seed},
              {"tile_h", m.tile_h},
              {"tile_w", m.tile_w},
              {"channels", m.channels},
              {"tiles_per_region", m.tiles_per_region},
              {"train_frac", m.train_frac},
              {"val_frac", m.val_frac},
              {"test_frac", m.test_frac},
              {"regions", regions},
              {"channel_mean", m.channel_mean},
              {"channel_std", m.channel_std}};
}

DatasetManifest manifest_from_json(const json& j) {
  check_json_keys(j, {"version", "global_seed", "tile_h", "tile_w", "channels",
                      "tiles_per_region", "train_frac", "val_frac",
                      "test_frac", "regions", "channel_mean", "channel_std"},
                  "manifest.json");
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    m.global_seed = j.at("global_seed").get<std::uint64_t>();
    m.tile_h = j.at("tile_h").get<int>();
    m.tile_w = j.at("tile_w").get<int>();
    m.channels = j.at("channels").get<int>();
    m.tiles_per_region = j.at("tiles_per_region").get<int>();
    m.train_frac = j.at("train_frac").get<double>();
    m.val_frac = j.at("val_frac").get<double>();
    m.test_frac = j.at("test_frac").get<double>();
    for (const json& rj : j.at("regions")) {
      check_json_keys(rj, {"name", "building_rate", "size_min", "size_max",
                           "noise_sigma", "density_bias"},
                      "manifest.json region");
      RegionSpec r;
      r.name = rj.at("name").get<std::string>();
      r.building_rate = rj.at("building_rate").get<double>();
      r.size_min = rj.at("size_min").get<int>();
      r.size_max = rj.at("size_max").get<int>();
      r.noise_sigma = rj.at("noise_sigma").get<float>();
      r.density_bias = rj.at("density_bias").get<int>();
      m.regions.push_back(std::move(r));
    }
    m.channel_mean = j.at("channel_mean").get<std::vector<double>>();
    m.channel_std = j.at("channel_std").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  return m;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());

  {
    const std::string path = (fs::path(dir) / "manifest.json").string();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << manifest_to_json(ds.manifest).dump(2) << '\n';
    if (!out) throw IoError("write failed on '" + path + "'");
  }
  for (const RasterTile& tile : ds.tiles)
    write_tile(tile, (fs::path(dir) / tile_filename(tile.tile_id)).string());
}

Dataset read_dataset(const std::string& dir) {
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream in(manifest_path);
  if (!in)
    throw IoError("no manifest.json in '" + dir +
                  "' (datasets are read from the manifest, not a directory scan)");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }

  Dataset ds;
  ds.manifest = manifest_from_json(j);
  validate_manifest(ds.manifest);

  const int per = ds.manifest.tiles_per_region;
  const SplitSizes split = split_sizes(ds.manifest);
  const int total = per * static_cast<int>(ds.manifest.regions.size());
  for (int id = 0; id < total; ++id) {
    RasterTile tile =
        read_tile((fs::path(dir) / tile_filename(id)).string(), id);
    const std::string& expect_region = ds.manifest.regions[id / per].name;
    if (tile.region != expect_region)
      throw FormatError("'" + tile_filename(id) + "': region '" + tile.region +
                        "' does not match manifest region '" + expect_region + "'");
    if (tile.input.shape() != std::vector<int>{ds.manifest.channels,
                                               ds.manifest.tile_h,
                                               ds.manifest.tile_w})
      throw FormatError("'" + tile_filename(id) +
                        "': tensor extents do not match the manifest");
    ds.tiles.push_back(std::move(tile));
    const int j_in_region = id % per;
    if (j_in_region < split.train)
      ds.train_ids.push_back(id);
    else if (j_in_region < split.train + split.val)
      ds.val_ids.push_back(id);
    else
      ds.test_ids.push_back(id);
  }
  return ds;
}

Tensor batch_inputs(const Dataset& ds, const std::vector<int>& ids) {
  if (ids.empty()) throw ConfigError("batch_inputs: empty id list");
  const DatasetManifest& m = ds.manifest;
  if (m.channel_mean.size() != static_cast<std::size_t>(m.channels) ||
      m.channel_std.size() != static_cast<std::size_t>(m.channels))
    throw ConfigError("batch_inputs: manifest has no channel statistics");

  const std::size_t plane = static_cast<std::size_t>(m.tile_h) * m.tile_w;
  Tensor x = Tensor::zeros(
      {static_cast<int>(ids.size()), m.channels, m.tile_h, m.tile_w});
  float* dst = x.vec().data();
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(ds.tiles.size()))
      throw ConfigError("batch_inputs: tile id " + std::to_string(id) +
                        " out of range");
    const auto& src = ds.tiles[id].input.vec();
    for (int c = 0; c < m.channels; ++c) {
      const float mu = static_cast<float>(m.channel_mean[c]);
      const float inv = 1.f / static_cast<float>(m.channel_std[c]);
      for (std::size_t i = 0; i < plane; ++i)
        dst[c * plane + i] = (src[c * plane + i] - mu) * inv;
    }
    dst += static_cast<std::size_t>(m.channels) * plane;
  }
  return x;
}

Tensor batch_targets(const Dataset& ds, const std::vector<int>& ids) {
  if (ids.empty()) throw ConfigError("batch_targets: empty id list");
  const DatasetManifest& m = ds.manifest;
  const std::size_t plane = static_cast<std::size_t>(m.tile_h) * m.tile_w;
  Tensor y = Tensor::zeros({static_cast<int>(ids.size()), 1, m.tile_h, m.tile_w});
  float* dst = y.vec().data();
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(ds.tiles.size()))
      throw ConfigError("batch_targets: tile id " + std::to_string(id) +
                        " out of range");
    const auto& src = ds.tiles[id].y_star.vec();
    std::copy(src.begin(), src.end(), dst);
    dst += plane;
  }
  return y;
}

}  // namespace care
