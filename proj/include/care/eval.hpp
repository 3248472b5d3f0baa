#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "care/data.hpp"
#include "care/train.hpp"

namespace care {

enum class EvalSplit { Val, Test };

std::string split_name(EvalSplit split);

struct EvalConfig {
  std::vector<double> zeta_list{0.2, 0.1};
  double density_floor = 1e-3;
  EvalSplit split = EvalSplit::Test;
};

void validate_eval_config(const EvalConfig& config);

struct ZetaMetric {
  double zeta = 0.0;
  double mse = 0.0;
  bool defined = false;  // false when every pixel abstained
  double fraction = 0.0;
};

struct PearsonR {
  double r = 0.0;
  bool defined = false;  // false when either argument is constant
};

struct EvalReport {
  std::string model_id;
  int n = 0;  // training tiles per region behind this row
  int tile_count = 0;
  double err_mean = 0.0;    // pooled |y - y*| over all pixels of all tiles
  double err_median = 0.0;  // lower median
  double mse = 0.0;
  std::vector<ZetaMetric> zeta;
  PearsonR pearson;
  double mean_discrepancy = 0.0;
  double median_discrepancy = 0.0;
  std::string split;  // "val" or "test"
  std::uint64_t dataset_seed = 0;
};

struct DiscrepancyStats {
  double mean = 0.0;
  double median = 0.0;  // lower median
};

// Per-pixel discrepancy | |y - y*| - (1 - c) |, pooled over everything passed.
DiscrepancyStats discrepancy_stats(const std::vector<float>& y,
                                   const std::vector<float>& y_star,
                                   const std::vector<float>& c);

// 1 = retained. A pixel is kept iff (1 - c) <= zeta * max(y, density_floor);
// the floor keeps the rule meaningful where the predicted density is zero.
std::vector<std::uint8_t> abstention_mask(const std::vector<float>& y,
                                          const std::vector<float>& c,
                                          double zeta, double density_floor);

struct RetainedMse {
  double mse = 0.0;
  bool defined = false;
  double fraction = 0.0;
};

RetainedMse mse_retained(const std::vector<float>& y,
                         const std::vector<float>& y_star,
                         const std::vector<std::uint8_t>& mask);

// Pearson correlation between uncertainty (1 - c) and |y - y*|; positive r
// means the uncertainty tracks the error.
PearsonR confidence_error_correlation(const std::vector<float>& y,
                                      const std::vector<float>& y_star,
                                      const std::vector<float>& c);

struct SplitPrediction {
  std::vector<float> y, y_star, c;  // pooled in split id order
  int tile_count = 0;
};

// Runs the checkpoint's model(s) over one split. Dual-head checkpoints emit
// (y, c) directly; gaussian checkpoints emit the (ensemble) mean with
// c = 1 - clamp(sigma_total, 0, 1).
SplitPrediction predict_split(const Checkpoint& ckpt, const Dataset& ds,
                              EvalSplit split);

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& ds,
                    const EvalConfig& config, const std::string& model_id,
                    int n);

// CSV with a "# split=... seed=..." provenance line and columns
// model,n,err_mean,err_median,mse,{mse_Z,frac_Z per zeta},pearson_r where Z is
// the zeta percentage. Undefined metrics serialize as "nan". All rows must
// share the zeta list and provenance.
std::string eval_report_csv(const std::vector<EvalReport>& reports);
std::vector<EvalReport> eval_report_from_csv(const std::string& text);

// For each n: stratified n-shot sample of the train split, train, evaluate on
// config.split. sample_seed drives the subset draw; model/train seeds come
// from their configs.
std::vector<EvalReport> run_nshot(const DatasetManifest& manifest,
                                  const std::vector<int>& n_list,
                                  const ModelConfig& mc, const TrainConfig& tc,
                                  const EvalConfig& config,
                                  std::uint64_t sample_seed);

struct CompareTable {
  std::string reference;             // model_id of the first report
  std::vector<std::string> metrics;  // column names, csv style
  std::vector<std::string> models;   // one row per remaining report
  // percent[row][col]: improvement of the reference over that model. Positive
  // favors the reference; NaN marks undefined inputs.
  std::vector<std::vector<double>> percent;
};

// Improvement per metric: (B - A)/B * 100 for lower-is-better metrics,
// (A - B)/B * 100 for pearson_r, where A is the first report.
CompareTable compare_models(const std::vector<EvalReport>& reports);

std::string compare_table_csv(const CompareTable& table);
std::string compare_table_markdown(const CompareTable& table);

// Binary PGM, maxval 255, values clamped to [0,1] then scaled linearly.
void write_pgm(const std::filesystem::path& path, int h, int w,
               const std::vector<float>& values);

// Writes <prefix>_{y,y_star,c,abs_err,discrepancy}.pgm for one tile plus
// <prefix>_maps.json recording each map's min/max before scaling.
void export_maps(const Checkpoint& ckpt, const Dataset& ds, int tile_id,
                 const std::filesystem::path& out_prefix);

}  // namespace care
