#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "care/train.hpp"

namespace fs = std::filesystem;
using namespace care;

namespace {

struct CliResult {
  int code = -1;
  std::string out;  // stdout and stderr merged
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(CARE_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult r;
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "care_cli_scratch";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

bool dirs_equal(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> names_a, names_b;
  for (const auto& e : fs::recursive_directory_iterator(a))
    names_a.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    names_b.push_back(fs::relative(e.path(), b));
  std::sort(names_a.begin(), names_a.end());
  std::sort(names_b.begin(), names_b.end());
  if (names_a != names_b) return false;
  for (const fs::path& rel : names_a) {
    if (fs::is_directory(a / rel)) continue;
    if (slurp(a / rel) != slurp(b / rel)) return false;
  }
  return true;
}

const std::string kTwoRegionConfig = R"({
  "dataset": {
    "global_seed": 7, "tile_h": 16, "tile_w": 16, "tiles_per_region": 20,
    "regions": [
      {"name": "alpha", "building_rate": 6.0, "size_min": 3, "size_max": 9,
       "noise_sigma": 0.1, "density_bias": 0},
      {"name": "beta", "building_rate": 10.0, "size_min": 3, "size_max": 7,
       "noise_sigma": 0.2, "density_bias": 1}
    ]
  }
})";

// Dataset plus one dual-head and one gaussian checkpoint, built once.
struct Fixture {
  fs::path config, ds, care_run, gauss_run;
};

const Fixture& fixture() {
  static const Fixture fx = [] {
    Fixture f;
    f.config = scratch() / "fixture.json";
    f.ds = scratch() / "fixture_ds";
    f.care_run = scratch() / "fixture_care";
    f.gauss_run = scratch() / "fixture_gauss";
    write_file(f.config, kTwoRegionConfig);

    CliResult gen = run_cli("gen-data --config " + q(f.config) + " --out " + q(f.ds));
    REQUIRE(gen.code == 0);

    CliResult tc = run_cli("train --data " + q(f.ds) + " --out " + q(f.care_run) +
                           " --baseline care --phase0-epochs 1 --phase1-epochs 2"
                           " --batch-size 4 --lr 0.05");
    REQUIRE(tc.code == 0);

    CliResult tg = run_cli("train --data " + q(f.ds) + " --out " + q(f.gauss_run) +
                           " --baseline gaussian_nll --phase0-epochs 1"
                           " --phase1-epochs 2 --batch-size 4 --lr 0.01");
    REQUIRE(tg.code == 0);
    return f;
  }();
  return fx;
}

const std::string kPaperCareCsv =
    "# split=test seed=0\n"
    "model,n,err_mean,err_median,mse,mse_20,frac_20,mse_10,frac_10,pearson_r\n"
    "care,5000,0.00759,0.00184,0.00326,0.00057,0.31,0.00033,0.18,0.62090\n";

const std::string kPaperGaussCsv =
    "# split=test seed=0\n"
    "model,n,err_mean,err_median,mse,mse_20,frac_20,mse_10,frac_10,pearson_r\n"
    "gaussian_nll,5000,0.00997,0.00123,0.00468,0.00053,0.22,0.00036,0.11,"
    "0.56696\n";

}  // namespace

TEST_CASE("gen-data writes the requested tiles and reruns byte-identically") {
  const fs::path cfg = scratch() / "gen10.json";
  write_file(cfg, R"({
    "dataset": {
      "tile_h": 16, "tile_w": 16, "tiles_per_region": 10,
      "regions": [
        {"name": "solo", "building_rate": 6.0, "size_min": 3, "size_max": 9,
         "noise_sigma": 0.1, "density_bias": 0}
      ]
    }
  })");
  const fs::path out = scratch() / "gen10_ds";

  CliResult first = run_cli("gen-data --config " + q(cfg) + " --out " + q(out));
  CHECK(first.code == 0);
  CHECK(first.out.find("wrote 10 tiles") != std::string::npos);

  int tile_files = 0;
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().extension() == ".bin") ++tile_files;
  CHECK(tile_files == 10);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "config.resolved.json"));

  const fs::path keep = scratch() / "gen10_ds_keep";
  fs::rename(out, keep);
  CliResult second = run_cli("gen-data --config " + q(cfg) + " --out " + q(out));
  CHECK(second.code == 0);
  CHECK(second.out == first.out);
  CHECK(dirs_equal(out, keep));
}

TEST_CASE("gen-data rejects invalid split fractions naming the field") {
  const fs::path cfg = scratch() / "badfrac.json";
  write_file(cfg, R"({"dataset": {"train_frac": 0.9, "val_frac": 0.3,
                                  "test_frac": 0.3}})");
  CliResult r = run_cli("gen-data --config " + q(cfg) + " --out " +
                        q(scratch() / "badfrac_ds"));
  CHECK(r.code == 2);
  CHECK(r.out.find("frac") != std::string::npos);
}

TEST_CASE("train writes checkpoint, phase-columned log, and resolved config") {
  const Fixture& fx = fixture();
  CHECK(fs::exists(fx.care_run / "model.ckpt"));
  CHECK(fs::exists(fx.care_run / "config.resolved.json"));

  const std::string log = slurp(fx.care_run / "train_log.csv");
  CHECK(log.rfind("epoch,phase,l0,l1,total\n", 0) == 0);
  CHECK(log.find("\n0,0,") != std::string::npos);
  CHECK(log.find("\n1,1,") != std::string::npos);

  SUBCASE("resolved config reruns to a byte-identical checkpoint") {
    const fs::path rerun = scratch() / "care_rerun";
    CliResult r = run_cli("train --config " +
                          q(fx.care_run / "config.resolved.json") + " --out " +
                          q(rerun));
    CHECK(r.code == 0);
    CHECK(slurp(rerun / "model.ckpt") == slurp(fx.care_run / "model.ckpt"));
    CHECK(slurp(rerun / "train_log.csv") ==
          slurp(fx.care_run / "train_log.csv"));
  }
}

TEST_CASE("train ensemble:3 stores three member parameter sets") {
  const Fixture& fx = fixture();
  const fs::path out = scratch() / "ens3";
  CliResult r = run_cli("train --data " + q(fx.ds) + " --out " + q(out) +
                        " --baseline ensemble:3 --phase0-epochs 0"
                        " --phase1-epochs 1 --batch-size 4 --lr 0.01");
  CHECK(r.code == 0);
  CHECK(r.out.find("3 member(s)") != std::string::npos);

  Checkpoint ckpt = load_checkpoint((out / "model.ckpt").string());
  CHECK(ckpt.members.size() == 3);
  CHECK(ckpt.model_config.head == HeadKind::Gaussian);
}

TEST_CASE("train rejects an oversized shot count naming the region") {
  const Fixture& fx = fixture();
  CliResult r = run_cli("train --data " + q(fx.ds) + " --out " +
                        q(scratch() / "oversized") + " --baseline care --n 999");
  CHECK(r.code == 2);
  CHECK(r.out.find("alpha") != std::string::npos);
  CHECK(r.out.find("999") != std::string::npos);
}

TEST_CASE("eval emits the default zeta columns and report artifacts") {
  const Fixture& fx = fixture();
  const fs::path report = scratch() / "reports" / "care.csv";
  CliResult r = run_cli("eval --ckpt " + q(fx.care_run / "model.ckpt") +
                        " --data " + q(fx.ds) + " --report " + q(report));
  CHECK(r.code == 0);
  CHECK(r.out.find("# split=test seed=7\n") != std::string::npos);
  CHECK(r.out.find(
            "model,n,err_mean,err_median,mse,mse_20,frac_20,mse_10,frac_10,"
            "pearson_r\n") != std::string::npos);
  CHECK(r.out.find("\ncare,14,") != std::string::npos);
  CHECK(slurp(report) == r.out);
  CHECK(fs::exists(scratch() / "reports" / "config.resolved.json"));

  SUBCASE("a custom zeta list swaps in its own column set") {
    CliResult z = run_cli("eval --ckpt " + q(fx.care_run / "model.ckpt") +
                          " --data " + q(fx.ds) + " --zeta 0.5");
    CHECK(z.code == 0);
    CHECK(z.out.find("mse_50,frac_50") != std::string::npos);
    CHECK(z.out.find("mse_20") == std::string::npos);
  }

  SUBCASE("gaussian checkpoints evaluate under the sigma-based confidence") {
    CliResult g = run_cli("eval --ckpt " + q(fx.gauss_run / "model.ckpt") +
                          " --data " + q(fx.ds));
    CHECK(g.code == 0);
    CHECK(g.out.find("\ngaussian_nll,14,") != std::string::npos);
  }
}

TEST_CASE("compare reproduces the published improvement percentages") {
  const fs::path a = scratch() / "paper_care.csv";
  const fs::path b = scratch() / "paper_gauss.csv";
  write_file(a, kPaperCareCsv);
  write_file(b, kPaperGaussCsv);

  const fs::path prefix = scratch() / "cmp" / "table";
  CliResult r = run_cli("compare --reports " + a.string() + "," + b.string() +
                        " --out " + q(prefix));
  CHECK(r.code == 0);
  CHECK(r.out.find("30.34") != std::string::npos);
  CHECK(r.out.find("23.87") != std::string::npos);
  CHECK(slurp(fs::path(prefix.string() + ".md")) == r.out);
  CHECK(slurp(fs::path(prefix.string() + ".csv")).find("# reference=care") !=
        std::string::npos);

  SUBCASE("a report compared with itself is all zeros") {
    CliResult self = run_cli("compare --reports " + a.string() + "," +
                             a.string());
    CHECK(self.code == 0);
    CHECK(self.out.find("0.00") != std::string::npos);
    CHECK(self.out.find("30.34") == std::string::npos);
  }

  SUBCASE("mismatched provenance exits 2") {
    const fs::path c = scratch() / "paper_other_seed.csv";
    std::string other = kPaperGaussCsv;
    other.replace(other.find("seed=0"), 6, "seed=1");
    write_file(c, other);
    CliResult bad = run_cli("compare --reports " + a.string() + "," +
                            c.string());
    CHECK(bad.code == 2);
  }

  SUBCASE("a single report exits 2") {
    CliResult one = run_cli("compare --reports " + a.string());
    CHECK(one.code == 2);
  }
}

TEST_CASE("maps exports the panel set deterministically") {
  const Fixture& fx = fixture();
  const fs::path prefix = scratch() / "maps" / "t33";
  CliResult r = run_cli("maps --ckpt " + q(fx.care_run / "model.ckpt") +
                        " --data " + q(fx.ds) + " --tile 33 --out " +
                        q(prefix));
  CHECK(r.code == 0);

  const std::vector<std::string> panels = {"y", "y_star", "c", "abs_err",
                                           "discrepancy"};
  std::vector<std::string> bytes;
  for (const std::string& p : panels) {
    const fs::path file(prefix.string() + "_" + p + ".pgm");
    REQUIRE(fs::exists(file));
    CHECK(r.out.find(file.filename().string()) != std::string::npos);
    bytes.push_back(slurp(file));
  }
  const fs::path sidecar(prefix.string() + "_maps.json");
  REQUIRE(fs::exists(sidecar));
  bytes.push_back(slurp(sidecar));

  CliResult again = run_cli("maps --ckpt " + q(fx.care_run / "model.ckpt") +
                            " --data " + q(fx.ds) + " --tile 33 --out " +
                            q(prefix));
  CHECK(again.code == 0);
  for (std::size_t i = 0; i < panels.size(); ++i)
    CHECK(slurp(fs::path(prefix.string() + "_" + panels[i] + ".pgm")) ==
          bytes[i]);
  CHECK(slurp(sidecar) == bytes.back());

  SUBCASE("tile -1 exits 2") {
    CliResult bad = run_cli("maps --ckpt " + q(fx.care_run / "model.ckpt") +
                            " --data " + q(fx.ds) + " --tile -1 --out " +
                            q(prefix));
    CHECK(bad.code == 2);
  }
}

TEST_CASE("train exits 4 when the loss diverges") {
  const Fixture& fx = fixture();
  CliResult r = run_cli("train --data " + q(fx.ds) + " --out " +
                        q(scratch() / "diverged") +
                        " --baseline gaussian_nll --phase0-epochs 1"
                        " --phase1-epochs 0 --batch-size 4 --lr 1e9");
  CHECK(r.code == 4);
  CHECK(r.out.find("diverged") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  const Fixture& fx = fixture();

  SUBCASE("unknown config key") {
    const fs::path cfg = scratch() / "unknown_key.json";
    write_file(cfg, R"({"bogus_key": 1})");
    CliResult r = run_cli("gen-data --config " + q(cfg) + " --out " +
                          q(scratch() / "x"));
    CHECK(r.code == 2);
    CHECK(r.out.find("bogus_key") != std::string::npos);
  }

  SUBCASE("unknown flag") {
    CliResult r = run_cli("train --data " + q(fx.ds) + " --out " +
                          q(scratch() / "x") + " --unknown-flag 1");
    CHECK(r.code == 2);
  }

  SUBCASE("missing subcommand") {
    CliResult r = run_cli("");
    CHECK(r.code == 2);
  }

  SUBCASE("missing required path") {
    CliResult r = run_cli("train --out " + q(scratch() / "x"));
    CHECK(r.code == 2);
    CHECK(r.out.find("--data") != std::string::npos);
  }

  SUBCASE("bad split name") {
    CliResult r = run_cli("eval --ckpt " + q(fx.care_run / "model.ckpt") +
                          " --data " + q(fx.ds) + " --split weird");
    CHECK(r.code == 2);
  }

  SUBCASE("missing artifacts exit 3 instead") {
    CliResult r = run_cli("eval --ckpt " + q(scratch() / "no.ckpt") +
                          " --data " + q(fx.ds));
    CHECK(r.code == 3);
  }
}

TEST_CASE("flags override config file values") {
  const fs::path cfg = scratch() / "override.json";
  write_file(cfg, R"({
    "dataset": {
      "tile_h": 16, "tile_w": 16, "tiles_per_region": 20,
      "regions": [
        {"name": "solo", "building_rate": 6.0, "size_min": 3, "size_max": 9,
         "noise_sigma": 0.1, "density_bias": 0}
      ]
    }
  })");
  CliResult r = run_cli("gen-data --config " + q(cfg) + " --out " +
                        q(scratch() / "override_ds") + " --tiles-per-region 10");
  CHECK(r.code == 0);
  CHECK(r.out.find("wrote 10 tiles") != std::string::npos);

  const std::string resolved =
      slurp(scratch() / "override_ds" / "config.resolved.json");
  CHECK(resolved.find("\"tiles_per_region\": 10") != std::string::npos);
}
