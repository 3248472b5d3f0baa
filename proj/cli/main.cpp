#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "care/config_json.hpp"
#include "care/data.hpp"
#include "care/error.hpp"
#include "care/eval.hpp"
#include "care/losses.hpp"
#include "care/model.hpp"
#include "care/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace care {
namespace {

// One JSON document drives every subcommand; flags override its values and
// the effective merge is echoed to config.resolved.json for reruns.
struct RunConfig {
  DatasetManifest dataset;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::string out, data, ckpt, report, model_id;
  std::vector<std::string> reports;
  int n = -1;  // shots per region; -1 means the full train split
  int tile = -1;
  bool head_explicit = false;
};

json dataset_config_to_json(const DatasetManifest& m) {
  json regions = json::array();
  for (const RegionSpec& r : m.regions)
    regions.push_back({{"name", r.name},
                       {"building_rate", r.building_rate},
                       {"size_min", r.size_min},
                       {"size_max", r.size_max},
                       {"noise_sigma", r.noise_sigma},
                       {"density_bias", r.density_bias}});
  return json{{"global_seed", m.global_seed},
              {"tile_h", m.tile_h},
              {"tile_w", m.tile_w},
              {"channels", m.channels},
              {"tiles_per_region", m.tiles_per_region},
              {"train_frac", m.train_frac},
              {"val_frac", m.val_frac},
              {"test_frac", m.test_frac},
              {"regions", regions}};
}

// Unlike dataset artifacts, the config section has no version or channel
// stats and every key is optional; regions default to the built-in fourteen.
DatasetManifest dataset_config_from_json(const json& j) {
  check_json_allowed(j,
                     {"global_seed", "tile_h", "tile_w", "channels",
                      "tiles_per_region", "train_frac", "val_frac",
                      "test_frac", "regions"},
                     "config dataset");
  DatasetManifest m;
  m.regions = default_regions();
  try {
    if (j.contains("global_seed"))
      m.global_seed = j.at("global_seed").get<std::uint64_t>();
    if (j.contains("tile_h")) m.tile_h = j.at("tile_h").get<int>();
    if (j.contains("tile_w")) m.tile_w = j.at("tile_w").get<int>();
    if (j.contains("channels")) m.channels = j.at("channels").get<int>();
    if (j.contains("tiles_per_region"))
      m.tiles_per_region = j.at("tiles_per_region").get<int>();
    if (j.contains("train_frac")) m.train_frac = j.at("train_frac").get<double>();
    if (j.contains("val_frac")) m.val_frac = j.at("val_frac").get<double>();
    if (j.contains("test_frac")) m.test_frac = j.at("test_frac").get<double>();
    if (j.contains("regions")) {
      m.regions.clear();
      for (const json& rj : j.at("regions")) {
        check_json_keys(rj,
                        {"name", "building_rate", "size_min", "size_max",
                         "noise_sigma", "density_bias"},
                        "config dataset region");
        RegionSpec r;
        r.name = rj.at("name").get<std::string>();
        r.building_rate = rj.at("building_rate").get<double>();
        r.size_min = rj.at("size_min").get<int>();
        r.size_max = rj.at("size_max").get<int>();
        r.noise_sigma = rj.at("noise_sigma").get<float>();
        r.density_bias = rj.at("density_bias").get<int>();
        m.regions.push_back(r);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("config dataset: ") + e.what());
  }
  return m;
}

RunConfig load_config(const std::string& path) {
  RunConfig rc;
  rc.dataset.regions = default_regions();
  if (path.empty()) return rc;

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }

  // Section parsers throw FormatError for artifact files; a bad config file
  // is a usage error, so remap here.
  try {
    check_json_allowed(j,
                       {"dataset", "model", "train", "eval", "out", "data",
                        "ckpt", "report", "model_id", "n", "tile", "reports"},
                       "config");
    if (j.contains("dataset"))
      rc.dataset = dataset_config_from_json(j.at("dataset"));
    if (j.contains("model")) {
      rc.model = model_config_from_json(j.at("model"), "config model", false);
      rc.head_explicit = j.at("model").contains("head");
    }
    if (j.contains("train"))
      rc.train = train_config_from_json(j.at("train"), "config train", false);
    if (j.contains("eval"))
      rc.eval = eval_config_from_json(j.at("eval"), "config eval", false);
    if (j.contains("out")) rc.out = j.at("out").get<std::string>();
    if (j.contains("data")) rc.data = j.at("data").get<std::string>();
    if (j.contains("ckpt")) rc.ckpt = j.at("ckpt").get<std::string>();
    if (j.contains("report")) rc.report = j.at("report").get<std::string>();
    if (j.contains("model_id"))
      rc.model_id = j.at("model_id").get<std::string>();
    if (j.contains("n")) rc.n = j.at("n").get<int>();
    if (j.contains("tile")) rc.tile = j.at("tile").get<int>();
    if (j.contains("reports"))
      rc.reports = j.at("reports").get<std::vector<std::string>>();
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  return rc;
}

SortScope scope_from_name(const std::string& name) {
  if (name == "pixel") return SortScope::Pixel;
  if (name == "image") return SortScope::Image;
  throw ConfigError("unknown sort scope '" + name + "' (expected pixel|image)");
}

HeadKind head_from_name(const std::string& name) {
  if (name == "dual_confidence") return HeadKind::DualConfidence;
  if (name == "gaussian") return HeadKind::Gaussian;
  throw ConfigError("unknown head '" + name +
                    "' (expected dual_confidence|gaussian)");
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

void write_resolved(const fs::path& dir, const json& doc) {
  write_text_file(dir / "config.resolved.json", doc.dump(2) + "\n");
}

// Per-region size of the train split already materialized in the dataset.
int full_shots(const Dataset& ds) {
  if (ds.manifest.regions.empty()) return 0;
  return int(ds.train_ids.size() / ds.manifest.regions.size());
}

struct Flags {
  std::string config, out, data, ckpt, report, model_id, baseline, scope, head;
  std::string split;
  std::vector<std::string> reports;
  std::vector<double> zeta;
  double eta = 0.0, lambda = 0.0, lr = 0.0, momentum = 0.0;
  double density_floor = 0.0;
  int n = 0, tile = 0, tiles_per_region = 0, tile_h = 0, tile_w = 0;
  int phase0 = 0, phase1 = 0, batch_size = 0, width = 0, depth = 0;
  std::uint64_t seed = 0, model_seed = 0;
};

int cmd_gen_data(const CLI::App& cmd, const Flags& f) {
  RunConfig rc = load_config(f.config);
  if (cmd.count("--out")) rc.out = f.out;
  if (cmd.count("--seed")) rc.dataset.global_seed = f.seed;
  if (cmd.count("--tiles-per-region"))
    rc.dataset.tiles_per_region = f.tiles_per_region;
  if (cmd.count("--tile-h")) rc.dataset.tile_h = f.tile_h;
  if (cmd.count("--tile-w")) rc.dataset.tile_w = f.tile_w;
  if (rc.out.empty())
    throw ConfigError("gen-data: no output directory (--out or config 'out')");

  Dataset ds = generate_dataset(rc.dataset);
  write_dataset(ds, rc.out);
  write_resolved(rc.out, json{{"dataset", dataset_config_to_json(rc.dataset)},
                              {"out", rc.out}});

  std::printf("wrote %zu tiles to %s\n", ds.tiles.size(), rc.out.c_str());
  for (std::size_t ch = 0; ch < ds.manifest.channel_mean.size(); ++ch)
    std::printf("channel %zu: mean %.6f std %.6f\n", ch,
                ds.manifest.channel_mean[ch], ds.manifest.channel_std[ch]);
  return 0;
}

int cmd_train(const CLI::App& cmd, const Flags& f) {
  RunConfig rc = load_config(f.config);
  if (cmd.count("--data")) rc.data = f.data;
  if (cmd.count("--out")) rc.out = f.out;
  if (cmd.count("--baseline")) rc.train.baseline = parse_baseline(f.baseline);
  if (cmd.count("--n")) rc.n = f.n;
  if (cmd.count("--eta")) rc.train.eta = f.eta;
  if (cmd.count("--lambda")) rc.train.lambda = f.lambda;
  if (cmd.count("--phase0-epochs")) rc.train.phase0_epochs = f.phase0;
  if (cmd.count("--phase1-epochs")) rc.train.phase1_epochs = f.phase1;
  if (cmd.count("--batch-size")) rc.train.batch_size = f.batch_size;
  if (cmd.count("--lr")) rc.train.lr = f.lr;
  if (cmd.count("--momentum")) rc.train.momentum = f.momentum;
  if (cmd.count("--seed")) rc.train.seed = f.seed;
  if (cmd.count("--scope")) rc.train.sort_scope = scope_from_name(f.scope);
  if (cmd.count("--width")) rc.model.base_width = f.width;
  if (cmd.count("--depth")) rc.model.depth = f.depth;
  if (cmd.count("--model-seed")) rc.model.seed = f.model_seed;
  if (cmd.count("--head")) {
    rc.model.head = head_from_name(f.head);
    rc.head_explicit = true;
  }
  if (rc.data.empty())
    throw ConfigError("train: no dataset directory (--data or config 'data')");
  if (rc.out.empty())
    throw ConfigError("train: no output directory (--out or config 'out')");

  // The head follows the baseline unless the config or a flag pinned it.
  if (!rc.head_explicit)
    rc.model.head = baseline_uses_dual_head(rc.train.baseline.kind)
                        ? HeadKind::DualConfidence
                        : HeadKind::Gaussian;

  Dataset ds = read_dataset(rc.data);
  const int shots = rc.n >= 0 ? rc.n : full_shots(ds);
  ds.train_ids = sample_nshot(ds.manifest, shots, rc.train.seed);

  Checkpoint ckpt = train(ds, rc.model, rc.train);

  fs::create_directories(rc.out);
  const fs::path ckpt_path = fs::path(rc.out) / "model.ckpt";
  save_checkpoint(ckpt, ckpt_path.string());
  write_text_file(fs::path(rc.out) / "train_log.csv", log_to_csv(ckpt.log));
  write_resolved(rc.out, json{{"data", rc.data},
                              {"model", model_config_to_json(rc.model)},
                              {"n", shots},
                              {"out", rc.out},
                              {"train", train_config_to_json(rc.train)}});

  std::printf("trained %s: %zu member(s), %zu epoch(s)\n",
              baseline_name(rc.train.baseline).c_str(), ckpt.members.size(),
              ckpt.log.size());
  if (!ckpt.log.empty()) {
    const EpochLog& last = ckpt.log.back();
    std::printf("final losses: l0 %.6g l1 %.6g total %.6g\n", last.l0, last.l1,
                last.total);
  }
  std::printf("wrote %s\n", ckpt_path.string().c_str());
  return 0;
}

int cmd_eval(const CLI::App& cmd, const Flags& f) {
  RunConfig rc = load_config(f.config);
  if (cmd.count("--ckpt")) rc.ckpt = f.ckpt;
  if (cmd.count("--data")) rc.data = f.data;
  if (cmd.count("--report")) rc.report = f.report;
  if (cmd.count("--model-id")) rc.model_id = f.model_id;
  if (cmd.count("--n")) rc.n = f.n;
  if (cmd.count("--zeta")) rc.eval.zeta_list = f.zeta;
  if (cmd.count("--split")) rc.eval.split = split_from_name(f.split);
  if (cmd.count("--density-floor")) rc.eval.density_floor = f.density_floor;
  if (rc.ckpt.empty())
    throw ConfigError("eval: no checkpoint (--ckpt or config 'ckpt')");
  if (rc.data.empty())
    throw ConfigError("eval: no dataset directory (--data or config 'data')");

  Dataset ds = read_dataset(rc.data);
  Checkpoint ckpt = load_checkpoint(rc.ckpt);
  const std::string model_id = rc.model_id.empty()
                                   ? baseline_name(ckpt.train_config.baseline)
                                   : rc.model_id;
  const int shots = rc.n >= 0 ? rc.n : full_shots(ds);

  EvalReport report = evaluate(ckpt, ds, rc.eval, model_id, shots);
  const std::string csv = eval_report_csv({report});
  std::fputs(csv.c_str(), stdout);

  if (!rc.report.empty()) {
    const fs::path report_path(rc.report);
    if (report_path.has_parent_path())
      fs::create_directories(report_path.parent_path());
    write_text_file(report_path, csv);
    const fs::path dir = report_path.has_parent_path()
                             ? report_path.parent_path()
                             : fs::path(".");
    write_resolved(dir, json{{"ckpt", rc.ckpt},
                             {"data", rc.data},
                             {"eval", eval_config_to_json(rc.eval)},
                             {"model_id", model_id},
                             {"n", shots},
                             {"report", rc.report}});
  }
  return 0;
}

int cmd_compare(const CLI::App& cmd, const Flags& f) {
  RunConfig rc = load_config(f.config);
  if (cmd.count("--reports")) rc.reports = f.reports;
  if (cmd.count("--out")) rc.out = f.out;
  if (rc.reports.size() < 2)
    throw ConfigError(
        "compare: need at least two report files (--reports a.csv,b.csv)");

  // Rows concatenate in file order; the first row is the reference.
  std::vector<EvalReport> rows;
  for (const std::string& path : rc.reports) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read report '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    std::vector<EvalReport> parsed = eval_report_from_csv(text.str());
    rows.insert(rows.end(), parsed.begin(), parsed.end());
  }

  CompareTable table = compare_models(rows);
  const std::string md = compare_table_markdown(table);
  std::fputs(md.c_str(), stdout);

  if (!rc.out.empty()) {
    const fs::path prefix(rc.out);
    if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
    write_text_file(rc.out + ".csv", compare_table_csv(table));
    write_text_file(rc.out + ".md", md);
  }
  return 0;
}

int cmd_maps(const CLI::App& cmd, const Flags& f) {
  RunConfig rc = load_config(f.config);
  if (cmd.count("--ckpt")) rc.ckpt = f.ckpt;
  if (cmd.count("--data")) rc.data = f.data;
  if (cmd.count("--tile")) rc.tile = f.tile;
  if (cmd.count("--out")) rc.out = f.out;
  if (rc.ckpt.empty())
    throw ConfigError("maps: no checkpoint (--ckpt or config 'ckpt')");
  if (rc.data.empty())
    throw ConfigError("maps: no dataset directory (--data or config 'data')");
  if (rc.out.empty())
    throw ConfigError("maps: no output prefix (--out or config 'out')");

  Dataset ds = read_dataset(rc.data);
  Checkpoint ckpt = load_checkpoint(rc.ckpt);
  const fs::path prefix(rc.out);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  export_maps(ckpt, ds, rc.tile, prefix);

  for (const char* panel : {"y", "y_star", "c", "abs_err", "discrepancy"})
    std::printf("%s_%s.pgm\n", rc.out.c_str(), panel);
  std::printf("%s_maps.json\n", rc.out.c_str());
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"confidence-aware pixel-wise regression pipelines"};
  app.require_subcommand(1);
  Flags f;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", f.config, "JSON run config");
  gen->add_option("--out", f.out, "dataset output directory");
  gen->add_option("--seed", f.seed, "dataset global seed");
  gen->add_option("--tiles-per-region", f.tiles_per_region, "tiles per region");
  gen->add_option("--tile-h", f.tile_h, "tile height in pixels");
  gen->add_option("--tile-w", f.tile_w, "tile width in pixels");

  CLI::App* tr = app.add_subcommand("train", "train a model on a dataset");
  tr->add_option("--config", f.config, "JSON run config");
  tr->add_option("--data", f.data, "dataset directory");
  tr->add_option("--out", f.out, "run output directory");
  tr->add_option("--baseline", f.baseline,
                 "care|gaussian_nll|error_sorting|absolute_error|ensemble:M");
  tr->add_option("--n", f.n,
                 "training tiles per region, drawn from the train split with "
                 "the training seed (default: all)");
  tr->add_option("--eta", f.eta, "kept fraction for confidence targets");
  tr->add_option("--lambda", f.lambda, "confidence loss weight in phase 1");
  tr->add_option("--phase0-epochs", f.phase0, "epochs with lambda held at 0");
  tr->add_option("--phase1-epochs", f.phase1, "epochs with configured lambda");
  tr->add_option("--batch-size", f.batch_size, "tiles per mini-batch");
  tr->add_option("--lr", f.lr, "SGD learning rate");
  tr->add_option("--momentum", f.momentum, "SGD momentum");
  tr->add_option("--seed", f.seed, "training seed (shuffles, subset draw)");
  tr->add_option("--scope", f.scope, "error sort scope: pixel|image");
  tr->add_option("--width", f.width, "model base width");
  tr->add_option("--depth", f.depth, "model encoder depth");
  tr->add_option("--model-seed", f.model_seed, "weight init seed");
  tr->add_option("--head", f.head,
                 "dual_confidence|gaussian (default: from baseline)");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--config", f.config, "JSON run config");
  ev->add_option("--ckpt", f.ckpt, "checkpoint file");
  ev->add_option("--data", f.data, "dataset directory");
  ev->add_option("--zeta", f.zeta, "abstention budgets, e.g. 0.2,0.1")
      ->delimiter(',');
  ev->add_option("--split", f.split, "val|test");
  ev->add_option("--density-floor", f.density_floor,
                 "density floor in the retention rule");
  ev->add_option("--report", f.report, "write the report CSV here");
  ev->add_option("--model-id", f.model_id,
                 "model column value (default: checkpoint baseline)");
  ev->add_option("--n", f.n,
                 "shot count recorded in the report (default: full train "
                 "split per region)");

  CLI::App* cp = app.add_subcommand("compare", "compare report CSVs");
  cp->add_option("--config", f.config, "JSON run config");
  cp->add_option("--reports", f.reports, "report CSVs; first row is reference")
      ->delimiter(',');
  cp->add_option("--out", f.out, "write <out>.csv and <out>.md");

  CLI::App* mp = app.add_subcommand("maps", "export prediction map panels");
  mp->add_option("--config", f.config, "JSON run config");
  mp->add_option("--ckpt", f.ckpt, "checkpoint file");
  mp->add_option("--data", f.data, "dataset directory");
  mp->add_option("--tile", f.tile, "tile id to render");
  mp->add_option("--out", f.out, "output path prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (gen->parsed()) return cmd_gen_data(*gen, f);
  if (tr->parsed()) return cmd_train(*tr, f);
  if (ev->parsed()) return cmd_eval(*ev, f);
  if (cp->parsed()) return cmd_compare(*cp, f);
  if (mp->parsed()) return cmd_maps(*mp, f);
  return 2;
}

}  // namespace
}  // namespace care

int main(int argc, char** argv) {
  try {
    return care::run(argc, argv);
  } catch (const care::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const care::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const care::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const care::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const care::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
