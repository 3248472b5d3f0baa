#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <fstream>

#include "care/data.hpp"
#include "care/error.hpp"
#include "care/train.hpp"
#include "doctest.h"

using namespace care;
namespace fs = std::filesystem;

namespace {

Dataset tiny_dataset(std::uint64_t seed = 0) {
  DatasetManifest m;
  m.global_seed = seed;
  m.tile_h = 16;
  m.tile_w = 16;
  m.tiles_per_region = 8;
  m.regions = {default_regions()[0], default_regions()[6]};
  return generate_dataset(m);
}

ModelConfig tiny_model(HeadKind head = HeadKind::DualConfidence) {
  ModelConfig mc;
  mc.in_channels = 4;
  mc.base_width = 4;
  mc.depth = 2;
  mc.head = head;
  mc.seed = 1;
  return mc;
}

TrainConfig quick_config(int p0, int p1, Baseline kind = Baseline::Care) {
  TrainConfig tc;
  tc.phase0_epochs = p0;
  tc.phase1_epochs = p1;
  tc.batch_size = 4;
  tc.lr = 0.05;
  tc.seed = 3;
  tc.baseline = {kind, 1};
  return tc;
}

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove(path);
  }
  ~TempFile() { fs::remove(path); }
  std::string str() const { return path.string(); }
};

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_tensors(const Checkpoint::Member& a, const Checkpoint::Member& b) {
  if (a.names != b.names || a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].shape() != b.tensors[i].shape()) return false;
    if (std::memcmp(a.tensors[i].vec().data(), b.tensors[i].vec().data(),
                    a.tensors[i].numel() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig tc = quick_config(1, 1);
  tc.eta = 1.0;
  CHECK_THROWS_AS(validate_train_config(tc), ConfigError);
  tc = quick_config(1, 1);
  tc.lambda = -0.5;
  CHECK_THROWS_AS(validate_train_config(tc), ConfigError);
  tc = quick_config(1, 1);
  tc.batch_size = 1;
  CHECK_THROWS_AS(validate_train_config(tc), ConfigError);
  tc = quick_config(1, 1);
  tc.lr = 0.0;
  CHECK_THROWS_AS(validate_train_config(tc), ConfigError);
  tc = quick_config(1, 1);
  tc.momentum = 1.0;
  CHECK_THROWS_AS(validate_train_config(tc), ConfigError);
}

TEST_CASE("zero epochs returns initialization weights and an empty log") {
  Dataset ds = tiny_dataset();
  Checkpoint ckpt = train(ds, tiny_model(), quick_config(0, 0));
  CHECK(ckpt.log.empty());
  REQUIRE(ckpt.members.size() == 1);

  Model fresh(tiny_model());
  REQUIRE(ckpt.members[0].names == fresh.param_names());
  for (std::size_t i = 0; i < fresh.params().size(); ++i)
    CHECK(std::memcmp(ckpt.members[0].tensors[i].vec().data(),
                      fresh.params()[i].vec().data(),
                      fresh.params()[i].numel() * sizeof(float)) == 0);
}

TEST_CASE("two phases appear in the log with lambda gating") {
  Dataset ds = tiny_dataset();
  Checkpoint ckpt = train(ds, tiny_model(), quick_config(2, 2));
  REQUIRE(ckpt.log.size() == 4);
  CHECK(ckpt.log[0].phase == 0);
  CHECK(ckpt.log[1].phase == 0);
  CHECK(ckpt.log[2].phase == 1);
  CHECK(ckpt.log[3].phase == 1);
  for (int i = 0; i < 4; ++i) CHECK(ckpt.log[i].epoch == i);
  CHECK(ckpt.log[0].l1 == 0.0);
  CHECK(ckpt.log[1].l1 == 0.0);
  CHECK(ckpt.log[2].l1 > 0.0);
  CHECK(ckpt.log[0].total == ckpt.log[0].l0);

  const std::string csv = log_to_csv(ckpt.log);
  CHECK(csv.rfind("epoch,phase,l0,l1,total\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("training reduces the regression loss") {
  Dataset ds = tiny_dataset(9);
  Checkpoint ckpt = train(ds, tiny_model(), quick_config(4, 0));
  REQUIRE(ckpt.log.size() == 4);
  CHECK(ckpt.log.back().l0 < ckpt.log.front().l0);
}

TEST_CASE("same dataset, config, and seed give bit-identical checkpoints") {
  Dataset ds = tiny_dataset(4);
  Checkpoint a = train(ds, tiny_model(), quick_config(1, 1));
  Checkpoint b = train(ds, tiny_model(), quick_config(1, 1));
  CHECK(same_tensors(a.members[0], b.members[0]));

  TempFile fa("care_ckpt_a.bin"), fb("care_ckpt_b.bin");
  save_checkpoint(a, fa.str());
  save_checkpoint(b, fb.str());
  CHECK(slurp(fa.path) == slurp(fb.path));

  Checkpoint c = train(ds, tiny_model(), quick_config(2, 0));
  CHECK_FALSE(same_tensors(a.members[0], c.members[0]));
}

TEST_CASE("baseline and head must agree") {
  Dataset ds = tiny_dataset();
  CHECK_THROWS_AS(
      train(ds, tiny_model(HeadKind::Gaussian), quick_config(1, 0)),
      ConfigError);
  CHECK_THROWS_AS(
      train(ds, tiny_model(), quick_config(1, 0, Baseline::GaussianNll)),
      ConfigError);
}

TEST_CASE("divergence aborts with epoch and batch context") {
  // The dual head saturates its sigmoids under a huge step and stays finite;
  // the unbounded gaussian mean genuinely overflows.
  Dataset ds = tiny_dataset();
  TrainConfig tc = quick_config(2, 0, Baseline::GaussianNll);
  tc.lr = 1e9;
  CHECK_THROWS_WITH_AS(train(ds, tiny_model(HeadKind::Gaussian), tc),
                       doctest::Contains("training diverged at epoch"),
                       NumericError);
}

TEST_CASE("gaussian and ensemble baselines train") {
  Dataset ds = tiny_dataset(5);
  Checkpoint single = train(ds, tiny_model(HeadKind::Gaussian),
                            quick_config(1, 1, Baseline::GaussianNll));
  CHECK(single.members.size() == 1);
  CHECK(single.log.size() == 2);
  CHECK(single.log[0].l1 == 0.0);

  TrainConfig tc = quick_config(1, 0);
  tc.baseline = {Baseline::Ensemble, 2};
  Checkpoint ens = train(ds, tiny_model(HeadKind::Gaussian), tc);
  REQUIRE(ens.members.size() == 2);
  CHECK_FALSE(same_tensors(ens.members[0], ens.members[1]));

  std::vector<Model> models = models_from_checkpoint(ens);
  REQUIRE(models.size() == 2);
  auto [mu_bar, var_total] = ensemble_predict(models, batch_inputs(ds, {0}));
  CHECK(mu_bar.shape() == std::vector<int>{1, 1, 16, 16});
  for (float v : var_total.vec()) CHECK(v >= 0.f);
}

TEST_CASE("checkpoint save/load round-trips bit-exactly") {
  Dataset ds = tiny_dataset(6);
  Checkpoint ckpt = train(ds, tiny_model(), quick_config(1, 1));

  TempFile f1("care_ckpt_rt1.bin"), f2("care_ckpt_rt2.bin");
  save_checkpoint(ckpt, f1.str());
  Checkpoint back = load_checkpoint(f1.str());

  CHECK(back.model_config.base_width == ckpt.model_config.base_width);
  CHECK(back.model_config.seed == ckpt.model_config.seed);
  CHECK(back.train_config.eta == ckpt.train_config.eta);
  CHECK(back.train_config.lr == ckpt.train_config.lr);
  CHECK(baseline_name(back.train_config.baseline) ==
        baseline_name(ckpt.train_config.baseline));
  REQUIRE(back.log.size() == ckpt.log.size());
  for (std::size_t i = 0; i < back.log.size(); ++i) {
    CHECK(back.log[i].l0 == ckpt.log[i].l0);
    CHECK(back.log[i].total == ckpt.log[i].total);
  }
  CHECK(same_tensors(back.members[0], ckpt.members[0]));

  save_checkpoint(back, f2.str());
  CHECK(slurp(f1.path) == slurp(f2.path));

  // The loaded weights drive a model identical to the trained one.
  std::vector<Model> models = models_from_checkpoint(back);
  Tensor x = batch_inputs(ds, {1, 2});
  NoGrad guard;
  DualPrediction pred = models[0].forward_dual(x);
  std::vector<Model> orig = models_from_checkpoint(ckpt);
  DualPrediction pred2 = orig[0].forward_dual(x);
  CHECK(std::memcmp(pred.y.vec().data(), pred2.y.vec().data(),
                    pred.y.numel() * sizeof(float)) == 0);
}

TEST_CASE("checkpoint reader rejects malformed files") {
  Dataset ds = tiny_dataset();
  Checkpoint ckpt = train(ds, tiny_model(), quick_config(1, 0));
  TempFile f("care_ckpt_bad.bin");
  save_checkpoint(ckpt, f.str());

  SUBCASE("bad magic") {
    std::fstream s(f.path, std::ios::in | std::ios::out | std::ios::binary);
    s.write("NOTACKPT", 8);
    s.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(f.str()),
                         doctest::Contains("bad magic"), FormatError);
  }

  SUBCASE("unsupported version") {
    std::fstream s(f.path, std::ios::in | std::ios::out | std::ios::binary);
    s.seekp(8);
    const std::uint32_t v = 99;
    s.write(reinterpret_cast<const char*>(&v), 4);
    s.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(f.str()),
                         doctest::Contains("unsupported version 99"),
                         FormatError);
  }

  SUBCASE("truncation") {
    const auto bytes = slurp(f.path);
    std::ofstream out(f.path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 64));
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(f.str()),
                         doctest::Contains("truncated at offset"), FormatError);
  }

  SUBCASE("trailing bytes") {
    std::ofstream out(f.path, std::ios::binary | std::ios::app);
    out << "junk";
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(f.str()),
                         doctest::Contains("trailing bytes"), FormatError);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
  }
}

TEST_CASE("architecture mismatch is caught when rebuilding models") {
  Dataset ds = tiny_dataset();
  Checkpoint ckpt = train(ds, tiny_model(), quick_config(1, 0));
  ckpt.model_config.base_width = 8;
  CHECK_THROWS_AS(models_from_checkpoint(ckpt), FormatError);
}
