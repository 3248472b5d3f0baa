#include "care/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "care/config_json.hpp"
#include "care/error.hpp"
#include "care/losses.hpp"
#include "care/tensor.hpp"

#include "json.hpp"

namespace care {

std::string split_name(EvalSplit split) {
  return split == EvalSplit::Val ? "val" : "test";
}

EvalSplit split_from_name(const std::string& name) {
  if (name == "val") return EvalSplit::Val;
  if (name == "test") return EvalSplit::Test;
  throw ConfigError("eval: unknown split '" + name + "' (expected val or test)");
}

nlohmann::json eval_config_to_json(const EvalConfig& ec) {
  return nlohmann::json{{"zeta_list", ec.zeta_list},
                        {"density_floor", ec.density_floor},
                        {"split", split_name(ec.split)}};
}

EvalConfig eval_config_from_json(const nlohmann::json& j,
                                 const std::string& where, bool require_all) {
  const std::vector<std::string> keys = {"zeta_list", "density_floor", "split"};
  if (require_all)
    check_json_keys(j, keys, where);
  else
    check_json_allowed(j, keys, where);
  EvalConfig ec;
  try {
    if (j.contains("zeta_list"))
      ec.zeta_list = j.at("zeta_list").get<std::vector<double>>();
    if (j.contains("density_floor"))
      ec.density_floor = j.at("density_floor").get<double>();
    if (j.contains("split")) {
      try {
        ec.split = split_from_name(j.at("split").get<std::string>());
      } catch (const ConfigError& e) {
        throw FormatError(where + ": " + e.what());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  return ec;
}

void validate_eval_config(const EvalConfig& config) {
  for (double z : config.zeta_list)
    if (!(z > 0.0 && z < 1.0))
      throw ConfigError("eval: zeta must lie in (0,1), got " +
                        std::to_string(z));
  if (!(config.density_floor > 0.0))
    throw ConfigError("eval: density_floor must be positive, got " +
                      std::to_string(config.density_floor));
  for (std::size_t i = 0; i < config.zeta_list.size(); ++i)
    for (std::size_t j = i + 1; j < config.zeta_list.size(); ++j)
      if (std::llround(config.zeta_list[i] * 100.0) ==
          std::llround(config.zeta_list[j] * 100.0))
        throw ConfigError("eval: zeta values collide at the same percentage");
}

namespace {

void check_sizes(const char* op, std::size_t a, std::size_t b) {
  if (a != b)
    throw ShapeError(std::string(op) + ": size mismatch, " +
                     std::to_string(a) + " vs " + std::to_string(b));
}

void check_finite(const char* op, const std::vector<float>& v) {
  for (float x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string(op) + ": non-finite input");
}

double lower_median(std::vector<double> v) {
  const std::size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k),
                   v.end());
  return v[k];
}

}  // namespace

DiscrepancyStats discrepancy_stats(const std::vector<float>& y,
                                   const std::vector<float>& y_star,
                                   const std::vector<float>& c) {
  check_sizes("discrepancy_stats", y.size(), y_star.size());
  check_sizes("discrepancy_stats", y.size(), c.size());
  if (y.empty()) throw ConfigError("discrepancy_stats: no pixels");
  check_finite("discrepancy_stats", y);
  check_finite("discrepancy_stats", y_star);
  check_finite("discrepancy_stats", c);

  std::vector<double> disc(y.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double err = std::fabs(double(y[i]) - double(y_star[i]));
    disc[i] = std::fabs(err - (1.0 - double(c[i])));
    sum += disc[i];
  }
  DiscrepancyStats out;
  out.mean = sum / double(disc.size());
  out.median = lower_median(std::move(disc));
  return out;
}

std::vector<std::uint8_t> abstention_mask(const std::vector<float>& y,
                                          const std::vector<float>& c,
                                          double zeta, double density_floor) {
  check_sizes("abstention_mask", y.size(), c.size());
  if (!(zeta > 0.0 && zeta < 1.0))
    throw ConfigError("abstention_mask: zeta must lie in (0,1), got " +
                      std::to_string(zeta));
  if (!(density_floor > 0.0))
    throw ConfigError("abstention_mask: density_floor must be positive");

  std::vector<std::uint8_t> mask(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double uncertainty = 1.0 - double(c[i]);
    const double budget = zeta * std::max(double(y[i]), density_floor);
    mask[i] = uncertainty <= budget ? 1 : 0;
  }
  return mask;
}

RetainedMse mse_retained(const std::vector<float>& y,
                         const std::vector<float>& y_star,
                         const std::vector<std::uint8_t>& mask) {
  check_sizes("mse_retained", y.size(), y_star.size());
  check_sizes("mse_retained", y.size(), mask.size());
  if (y.empty()) throw ConfigError("mse_retained: no pixels");
  check_finite("mse_retained", y);
  check_finite("mse_retained", y_star);

  double sum = 0.0;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!mask[i]) continue;
    const double d = double(y[i]) - double(y_star[i]);
    sum += d * d;
    ++kept;
  }
  RetainedMse out;
  out.fraction = double(kept) / double(y.size());
  out.defined = kept > 0;
  out.mse = out.defined ? sum / double(kept) : 0.0;
  return out;
}

PearsonR confidence_error_correlation(const std::vector<float>& y,
                                      const std::vector<float>& y_star,
                                      const std::vector<float>& c) {
  check_sizes("confidence_error_correlation", y.size(), y_star.size());
  check_sizes("confidence_error_correlation", y.size(), c.size());
  if (y.size() < 2)
    throw ConfigError("confidence_error_correlation: need at least 2 pixels");
  check_finite("confidence_error_correlation", y);
  check_finite("confidence_error_correlation", y_star);
  check_finite("confidence_error_correlation", c);

  const std::size_t n = y.size();
  double sum_u = 0.0, sum_e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_u += 1.0 - double(c[i]);
    sum_e += std::fabs(double(y[i]) - double(y_star[i]));
  }
  const double mean_u = sum_u / double(n);
  const double mean_e = sum_e / double(n);
  double cov = 0.0, var_u = 0.0, var_e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double du = (1.0 - double(c[i])) - mean_u;
    const double de = std::fabs(double(y[i]) - double(y_star[i])) - mean_e;
    cov += du * de;
    var_u += du * du;
    var_e += de * de;
  }
  PearsonR out;
  if (var_u == 0.0 || var_e == 0.0) return out;
  out.r = cov / std::sqrt(var_u * var_e);
  out.defined = true;
  return out;
}

namespace {

// Shared forward path for evaluation and map export: a batch of tile ids in,
// pooled (y, c) planes out.
void predict_ids(const std::vector<Model>& members, HeadKind head,
                 const Dataset& ds, const std::vector<int>& ids,
                 std::vector<float>& y_out, std::vector<float>& c_out) {
  NoGrad guard;
  const Tensor x = batch_inputs(ds, ids);
  if (head == HeadKind::DualConfidence) {
    const DualPrediction pred = members[0].forward_dual(x);
    const float* py = pred.y.data();
    const float* pc = pred.c.data();
    y_out.insert(y_out.end(), py, py + pred.y.numel());
    c_out.insert(c_out.end(), pc, pc + pred.c.numel());
    return;
  }
  const auto [mu, var_total] = ensemble_predict(members, x);
  const float* pm = mu.data();
  const float* pv = var_total.data();
  y_out.insert(y_out.end(), pm, pm + mu.numel());
  for (std::size_t i = 0; i < var_total.numel(); ++i) {
    const float sigma = std::sqrt(pv[i]);
    c_out.push_back(1.0f - std::min(std::max(sigma, 0.0f), 1.0f));
  }
}

constexpr int kEvalBatch = 8;

}  // namespace

SplitPrediction predict_split(const Checkpoint& ckpt, const Dataset& ds,
                              EvalSplit split) {
  const std::vector<int>& ids =
      split == EvalSplit::Val ? ds.val_ids : ds.test_ids;
  if (ids.empty())
    throw ConfigError("predict_split: " + split_name(split) +
                      " split is empty");

  const std::vector<Model> members = models_from_checkpoint(ckpt);
  SplitPrediction out;
  out.tile_count = int(ids.size());
  for (std::size_t start = 0; start < ids.size(); start += kEvalBatch) {
    const std::size_t stop = std::min(ids.size(), start + kEvalBatch);
    const std::vector<int> chunk(ids.begin() + start, ids.begin() + stop);
    predict_ids(members, ckpt.model_config.head, ds, chunk, out.y, out.c);
    for (int id : chunk) {
      const float* p = ds.tiles[std::size_t(id)].y_star.data();
      out.y_star.insert(out.y_star.end(), p,
                        p + ds.tiles[std::size_t(id)].y_star.numel());
    }
  }
  return out;
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& ds,
                    const EvalConfig& config, const std::string& model_id,
                    int n) {
  validate_eval_config(config);
  const SplitPrediction pred = predict_split(ckpt, ds, config.split);

  EvalReport report;
  report.model_id = model_id;
  report.n = n;
  report.tile_count = pred.tile_count;
  report.split = split_name(config.split);
  report.dataset_seed = ds.manifest.global_seed;

  std::vector<double> err(pred.y.size());
  double err_sum = 0.0;
  for (std::size_t i = 0; i < pred.y.size(); ++i) {
    err[i] = std::fabs(double(pred.y[i]) - double(pred.y_star[i]));
    err_sum += err[i];
  }
  report.err_mean = err_sum / double(err.size());
  report.err_median = lower_median(std::move(err));

  const std::vector<std::uint8_t> all_ones(pred.y.size(), 1);
  report.mse = mse_retained(pred.y, pred.y_star, all_ones).mse;

  for (double z : config.zeta_list) {
    const std::vector<std::uint8_t> mask =
        abstention_mask(pred.y, pred.c, z, config.density_floor);
    const RetainedMse m = mse_retained(pred.y, pred.y_star, mask);
    report.zeta.push_back({z, m.mse, m.defined, m.fraction});
  }

  report.pearson = confidence_error_correlation(pred.y, pred.y_star, pred.c);

  const DiscrepancyStats disc =
      discrepancy_stats(pred.y, pred.y_star, pred.c);
  report.mean_discrepancy = disc.mean;
  report.median_discrepancy = disc.median;
  return report;
}

namespace {

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string metric_cell(double v, bool defined) {
  return defined && std::isfinite(v) ? format_g9(v) : "nan";
}

long long zeta_suffix(double zeta) { return std::llround(zeta * 100.0); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
  if (cell == "nan") return std::nan("");
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || cell.empty())
    throw FormatError("report CSV line " + std::to_string(line_no) +
                      ": bad number '" + cell + "'");
  return v;
}

}  // namespace

std::string eval_report_csv(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ConfigError("eval_report_csv: no reports");
  const EvalReport& first = reports.front();
  for (const EvalReport& r : reports) {
    if (r.split != first.split || r.dataset_seed != first.dataset_seed)
      throw ConfigError("eval_report_csv: reports disagree on provenance");
    if (r.zeta.size() != first.zeta.size())
      throw ConfigError("eval_report_csv: reports disagree on zeta list");
    for (std::size_t i = 0; i < r.zeta.size(); ++i)
      if (zeta_suffix(r.zeta[i].zeta) != zeta_suffix(first.zeta[i].zeta))
        throw ConfigError("eval_report_csv: reports disagree on zeta list");
  }

  std::string out = "# split=" + first.split +
                    " seed=" + std::to_string(first.dataset_seed) + "\n";
  out += "model,n,err_mean,err_median,mse";
  for (const ZetaMetric& z : first.zeta) {
    const std::string s = std::to_string(zeta_suffix(z.zeta));
    out += ",mse_" + s + ",frac_" + s;
  }
  out += ",pearson_r\n";
  for (const EvalReport& r : reports) {
    out += r.model_id + "," + std::to_string(r.n);
    out += "," + format_g9(r.err_mean);
    out += "," + format_g9(r.err_median);
    out += "," + format_g9(r.mse);
    for (const ZetaMetric& z : r.zeta) {
      out += "," + metric_cell(z.mse, z.defined);
      out += "," + format_g9(z.fraction);
    }
    out += "," + metric_cell(r.pearson.r, r.pearson.defined);
    out += "\n";
  }
  return out;
}

std::vector<EvalReport> eval_report_from_csv(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::stringstream ss(text);
  while (std::getline(ss, line)) lines.push_back(line);
  if (lines.empty()) throw FormatError("report CSV: empty");

  std::size_t row = 0;
  std::string split;
  std::uint64_t seed = 0;
  if (lines[0].rfind("#", 0) == 0) {
    unsigned long long parsed = 0;
    char name[16] = {0};
    if (std::sscanf(lines[0].c_str(), "# split=%15s seed=%llu", name,
                    &parsed) != 2)
      throw FormatError("report CSV line 1: bad provenance comment");
    split = name;
    seed = parsed;
    row = 1;
  }
  if (row >= lines.size()) throw FormatError("report CSV: missing header");

  const std::vector<std::string> header = split_csv_line(lines[row]);
  const std::vector<std::string> fixed = {"model", "n", "err_mean",
                                          "err_median", "mse"};
  if (header.size() < fixed.size() + 1 || header.back() != "pearson_r")
    throw FormatError("report CSV: unexpected header");
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (header[i] != fixed[i])
      throw FormatError("report CSV: unexpected header column '" + header[i] +
                        "'");
  std::vector<double> zetas;
  for (std::size_t i = fixed.size(); i + 1 < header.size(); i += 2) {
    const std::string& mse_col = header[i];
    if (mse_col.rfind("mse_", 0) != 0)
      throw FormatError("report CSV: unexpected header column '" + mse_col +
                        "'");
    const std::string s = mse_col.substr(4);
    if (header[i + 1] != "frac_" + s)
      throw FormatError("report CSV: unexpected header column '" +
                        header[i + 1] + "'");
    zetas.push_back(parse_cell(s, row + 1) / 100.0);
  }

  std::vector<EvalReport> reports;
  for (std::size_t li = row + 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const std::vector<std::string> cells = split_csv_line(lines[li]);
    if (cells.size() != header.size())
      throw FormatError("report CSV line " + std::to_string(li + 1) + ": has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    EvalReport r;
    r.model_id = cells[0];
    const double n_val = parse_cell(cells[1], li + 1);
    if (!std::isfinite(n_val))
      throw FormatError("report CSV line " + std::to_string(li + 1) +
                        ": bad shot count '" + cells[1] + "'");
    r.n = int(n_val);
    r.err_mean = parse_cell(cells[2], li + 1);
    r.err_median = parse_cell(cells[3], li + 1);
    r.mse = parse_cell(cells[4], li + 1);
    for (std::size_t zi = 0; zi < zetas.size(); ++zi) {
      const double mse = parse_cell(cells[5 + 2 * zi], li + 1);
      const double frac = parse_cell(cells[6 + 2 * zi], li + 1);
      r.zeta.push_back({zetas[zi], std::isnan(mse) ? 0.0 : mse,
                        !std::isnan(mse), frac});
    }
    const double pr = parse_cell(cells.back(), li + 1);
    r.pearson = {std::isnan(pr) ? 0.0 : pr, !std::isnan(pr)};
    r.split = split;
    r.dataset_seed = seed;
    reports.push_back(std::move(r));
  }
  if (reports.empty()) throw FormatError("report CSV: no data rows");
  return reports;
}

std::vector<EvalReport> run_nshot(const DatasetManifest& manifest,
                                  const std::vector<int>& n_list,
                                  const ModelConfig& mc, const TrainConfig& tc,
                                  const EvalConfig& config,
                                  std::uint64_t sample_seed) {
  validate_eval_config(config);
  if (n_list.empty()) throw ConfigError("run_nshot: empty n list");
  const Dataset full = generate_dataset(manifest);

  std::vector<EvalReport> reports;
  for (int n : n_list) {
    Dataset subset = full;
    subset.train_ids = sample_nshot(manifest, n, sample_seed);
    const Checkpoint ckpt = train(subset, mc, tc);
    reports.push_back(
        evaluate(ckpt, subset, config, baseline_name(tc.baseline), n));
  }
  return reports;
}

namespace {

double improvement_lower_better(double a, bool a_def, double b, bool b_def) {
  if (!a_def || !b_def) return std::nan("");
  if (a == b) return 0.0;
  if (b == 0.0) return std::nan("");
  return (b - a) / b * 100.0;
}

double improvement_higher_better(double a, bool a_def, double b, bool b_def) {
  if (!a_def || !b_def) return std::nan("");
  if (a == b) return 0.0;
  if (b == 0.0) return std::nan("");
  return (a - b) / b * 100.0;
}

}  // namespace

CompareTable compare_models(const std::vector<EvalReport>& reports) {
  if (reports.size() < 2)
    throw ConfigError("compare_models: need at least 2 reports, got " +
                      std::to_string(reports.size()));
  const EvalReport& ref = reports.front();
  for (const EvalReport& r : reports) {
    if (!ref.split.empty() && !r.split.empty() &&
        (r.split != ref.split || r.dataset_seed != ref.dataset_seed))
      throw ConfigError("compare_models: reports disagree on provenance (" +
                        ref.split + "/" + std::to_string(ref.dataset_seed) +
                        " vs " + r.split + "/" +
                        std::to_string(r.dataset_seed) + ")");
    if (r.zeta.size() != ref.zeta.size())
      throw ConfigError("compare_models: reports disagree on zeta list");
    for (std::size_t i = 0; i < r.zeta.size(); ++i)
      if (zeta_suffix(r.zeta[i].zeta) != zeta_suffix(ref.zeta[i].zeta))
        throw ConfigError("compare_models: reports disagree on zeta list");
  }

  CompareTable table;
  table.reference = ref.model_id;
  table.metrics = {"err_mean", "err_median", "mse"};
  for (const ZetaMetric& z : ref.zeta)
    table.metrics.push_back("mse_" + std::to_string(zeta_suffix(z.zeta)));
  table.metrics.push_back("pearson_r");

  for (std::size_t ri = 1; ri < reports.size(); ++ri) {
    const EvalReport& b = reports[ri];
    table.models.push_back(b.model_id);
    std::vector<double> row;
    row.push_back(
        improvement_lower_better(ref.err_mean, true, b.err_mean, true));
    row.push_back(
        improvement_lower_better(ref.err_median, true, b.err_median, true));
    row.push_back(improvement_lower_better(ref.mse, true, b.mse, true));
    for (std::size_t zi = 0; zi < ref.zeta.size(); ++zi)
      row.push_back(improvement_lower_better(
          ref.zeta[zi].mse, ref.zeta[zi].defined, b.zeta[zi].mse,
          b.zeta[zi].defined));
    row.push_back(improvement_higher_better(ref.pearson.r,
                                            ref.pearson.defined, b.pearson.r,
                                            b.pearson.defined));
    table.percent.push_back(std::move(row));
  }
  return table;
}

std::string compare_table_csv(const CompareTable& table) {
  std::string out = "# reference=" + table.reference + "\nmodel";
  for (const std::string& m : table.metrics) out += "," + m;
  out += "\n";
  for (std::size_t r = 0; r < table.models.size(); ++r) {
    out += table.models[r];
    for (double v : table.percent[r])
      out += "," + metric_cell(v, !std::isnan(v));
    out += "\n";
  }
  return out;
}

std::string compare_table_markdown(const CompareTable& table) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head = {"model"};
  head.insert(head.end(), table.metrics.begin(), table.metrics.end());
  cells.push_back(head);
  for (std::size_t r = 0; r < table.models.size(); ++r) {
    std::vector<std::string> row = {table.models[r]};
    for (double v : table.percent[r]) {
      if (std::isnan(v)) {
        row.push_back("nan");
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        row.push_back(buf);
      }
    }
    cells.push_back(std::move(row));
  }

  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i)
      width[i] = std::max(width[i], row[i].size());

  std::string out = "improvement of " + table.reference +
                    " over each model, percent (positive favors " +
                    table.reference + ")\n\n";
  for (std::size_t r = 0; r < cells.size(); ++r) {
    out += "|";
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      const std::string& cell = cells[r][i];
      const std::size_t pad = width[i] - cell.size();
      if (i == 0)
        out += " " + cell + std::string(pad, ' ') + " |";
      else
        out += " " + std::string(pad, ' ') + cell + " |";
    }
    out += "\n";
    if (r == 0) {
      out += "|";
      for (std::size_t i = 0; i < width.size(); ++i)
        out += " " +
               (i == 0 ? std::string(width[i], '-')
                       : std::string(width[i] - 1, '-') + ":") +
               " |";
      out += "\n";
    }
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, int h, int w,
               const std::vector<float>& values) {
  if (h <= 0 || w <= 0 || values.size() != std::size_t(h) * std::size_t(w))
    throw ShapeError("write_pgm: values do not match " + std::to_string(h) +
                     "x" + std::to_string(w));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = std::min(std::max(values[i], 0.0f), 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

void export_maps(const Checkpoint& ckpt, const Dataset& ds, int tile_id,
                 const std::filesystem::path& out_prefix) {
  if (tile_id < 0 || std::size_t(tile_id) >= ds.tiles.size())
    throw ConfigError("export_maps: unknown tile id " +
                      std::to_string(tile_id));

  const std::vector<Model> members = models_from_checkpoint(ckpt);
  std::vector<float> y, c;
  predict_ids(members, ckpt.model_config.head, ds, {tile_id}, y, c);

  const RasterTile& tile = ds.tiles[std::size_t(tile_id)];
  const float* gt = tile.y_star.data();
  const std::size_t n = tile.y_star.numel();
  std::vector<float> y_star(gt, gt + n);
  std::vector<float> abs_err(n), discrepancy(n);
  for (std::size_t i = 0; i < n; ++i) {
    abs_err[i] = std::fabs(y[i] - y_star[i]);
    discrepancy[i] = std::fabs(abs_err[i] - (1.0f - c[i]));
  }

  const int h = ds.manifest.tile_h;
  const int w = ds.manifest.tile_w;
  if (!out_prefix.parent_path().empty())
    std::filesystem::create_directories(out_prefix.parent_path());

  nlohmann::json sidecar;
  const std::pair<const char*, const std::vector<float>*> maps[] = {
      {"y", &y},
      {"y_star", &y_star},
      {"c", &c},
      {"abs_err", &abs_err},
      {"discrepancy", &discrepancy},
  };
  for (const auto& [name, values] : maps) {
    write_pgm(out_prefix.string() + "_" + name + ".pgm", h, w, *values);
    double lo = (*values)[0], hi = (*values)[0];
    for (float v : *values) {
      lo = std::min(lo, double(v));
      hi = std::max(hi, double(v));
    }
    sidecar["maps"][name] = {{"min", lo}, {"max", hi}};
  }
  const std::filesystem::path json_path = out_prefix.string() + "_maps.json";
  std::ofstream out(json_path);
  if (!out) throw IoError("cannot write '" + json_path.string() + "'");
  out << sidecar.dump(2) << "\n";
  if (!out) throw IoError("cannot write '" + json_path.string() + "'");
}

}  // namespace care
