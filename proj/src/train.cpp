#include "care/train.hpp"

#include <cmath>
#include <sstream>

#include "care/config_json.hpp"
#include "care/error.hpp"
#include "care/io.hpp"
#include "care/rng.hpp"
#include "json.hpp"

namespace care {

using nlohmann::json;

namespace {

constexpr char kCkptMagic[9] = "CAREckpt";
constexpr std::uint32_t kCkptVersion = 1;

json config_to_json(const ModelConfig& mc, const TrainConfig& tc,
                    const std::vector<EpochLog>& log, std::size_t members,
                    std::size_t tensors_per_member) {
  json jlog = json::array();
  for (const EpochLog& e : log)
    jlog.push_back({e.epoch, e.phase, e.l0, e.l1, e.total});
  return json{{"model", model_config_to_json(mc)},
              {"train", train_config_to_json(tc)},
              {"log", jlog},
              {"members", members},
              {"tensors_per_member", tensors_per_member}};
}

void config_from_json(const json& j, Checkpoint& ckpt, std::size_t& members,
                      std::size_t& tensors_per_member) {
  check_json_keys(j, {"model", "train", "log", "members", "tensors_per_member"},
                  "checkpoint JSON");
  ckpt.model_config =
      model_config_from_json(j.at("model"), "checkpoint JSON model", true);
  ckpt.train_config =
      train_config_from_json(j.at("train"), "checkpoint JSON train", true);
  try {
    for (const json& je : j.at("log")) {
      EpochLog e;
      e.epoch = je.at(0).get<int>();
      e.phase = je.at(1).get<int>();
      e.l0 = je.at(2).get<double>();
      e.l1 = je.at(3).get<double>();
      e.total = je.at(4).get<double>();
      ckpt.log.push_back(e);
    }
    members = j.at("members").get<std::size_t>();
    tensors_per_member = j.at("tensors_per_member").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint JSON: ") + e.what());
  }
}

}  // namespace

namespace {

std::string head_name(HeadKind head) {
  return head == HeadKind::DualConfidence ? "dual_confidence" : "gaussian";
}

std::string scope_name(SortScope scope) {
  return scope == SortScope::Pixel ? "pixel" : "image";
}

}  // namespace

json model_config_to_json(const ModelConfig& mc) {
  return json{{"in_channels", mc.in_channels},
              {"base_width", mc.base_width},
              {"depth", mc.depth},
              {"head", head_name(mc.head)},
              {"seed", mc.seed}};
}

ModelConfig model_config_from_json(const json& j, const std::string& where,
                                   bool require_all) {
  const std::vector<std::string> keys = {"in_channels", "base_width", "depth",
                                         "head", "seed"};
  if (require_all)
    check_json_keys(j, keys, where);
  else
    check_json_allowed(j, keys, where);
  ModelConfig mc;
  try {
    if (j.contains("in_channels")) mc.in_channels = j.at("in_channels").get<int>();
    if (j.contains("base_width")) mc.base_width = j.at("base_width").get<int>();
    if (j.contains("depth")) mc.depth = j.at("depth").get<int>();
    if (j.contains("head")) {
      const std::string name = j.at("head").get<std::string>();
      if (name == "dual_confidence") {
        mc.head = HeadKind::DualConfidence;
      } else if (name == "gaussian") {
        mc.head = HeadKind::Gaussian;
      } else {
        throw FormatError(where + ": unknown head kind '" + name + "'");
      }
    }
    if (j.contains("seed")) mc.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  return mc;
}

json train_config_to_json(const TrainConfig& tc) {
  return json{{"eta", tc.eta},
              {"lambda", tc.lambda},
              {"phase0_epochs", tc.phase0_epochs},
              {"phase1_epochs", tc.phase1_epochs},
              {"batch_size", tc.batch_size},
              {"lr", tc.lr},
              {"momentum", tc.momentum},
              {"seed", tc.seed},
              {"baseline", baseline_name(tc.baseline)},
              {"sort_scope", scope_name(tc.sort_scope)}};
}

TrainConfig train_config_from_json(const json& j, const std::string& where,
                                   bool require_all) {
  const std::vector<std::string> keys = {
      "eta",      "lambda", "phase0_epochs", "phase1_epochs", "batch_size",
      "lr",       "momentum", "seed",        "baseline",      "sort_scope"};
  if (require_all)
    check_json_keys(j, keys, where);
  else
    check_json_allowed(j, keys, where);
  TrainConfig tc;
  try {
    if (j.contains("eta")) tc.eta = j.at("eta").get<double>();
    if (j.contains("lambda")) tc.lambda = j.at("lambda").get<double>();
    if (j.contains("phase0_epochs"))
      tc.phase0_epochs = j.at("phase0_epochs").get<int>();
    if (j.contains("phase1_epochs"))
      tc.phase1_epochs = j.at("phase1_epochs").get<int>();
    if (j.contains("batch_size")) tc.batch_size = j.at("batch_size").get<int>();
    if (j.contains("lr")) tc.lr = j.at("lr").get<double>();
    if (j.contains("momentum")) tc.momentum = j.at("momentum").get<double>();
    if (j.contains("seed")) tc.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("baseline")) {
      try {
        tc.baseline = parse_baseline(j.at("baseline").get<std::string>());
      } catch (const ConfigError& e) {
        throw FormatError(where + ": " + e.what());
      }
    }
    if (j.contains("sort_scope")) {
      const std::string name = j.at("sort_scope").get<std::string>();
      if (name == "pixel") {
        tc.sort_scope = SortScope::Pixel;
      } else if (name == "image") {
        tc.sort_scope = SortScope::Image;
      } else {
        throw FormatError(where + ": unknown sort scope '" + name + "'");
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  return tc;
}

void validate_train_config(const TrainConfig& tc) {
  if (!(tc.eta > 0.0 && tc.eta < 1.0))
    throw ConfigError("train config: eta must lie in (0,1), got " +
                      std::to_string(tc.eta));
  if (tc.lambda < 0.0)
    throw ConfigError("train config: lambda must be nonnegative");
  if (tc.phase0_epochs < 0 || tc.phase1_epochs < 0)
    throw ConfigError("train config: epoch counts must be nonnegative");
  if (tc.batch_size < 2)
    throw ConfigError("train config: batch_size must be >= 2, got " +
                      std::to_string(tc.batch_size));
  if (!(tc.lr > 0.0)) throw ConfigError("train config: lr must be positive");
  if (!(tc.momentum >= 0.0 && tc.momentum < 1.0))
    throw ConfigError("train config: momentum must lie in [0,1)");
  if (tc.baseline.kind == Baseline::Ensemble && tc.baseline.ensemble_m < 1)
    throw ConfigError("train config: ensemble needs at least one member");
}

std::string log_to_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,phase,l0,l1,total\n";
  out.precision(9);
  for (const EpochLog& e : log)
    out << e.epoch << ',' << e.phase << ',' << e.l0 << ',' << e.l1 << ','
        << e.total << '\n';
  return out.str();
}

namespace {

// One member's full two-phase run; shuffle_seed separates ensemble members.
void train_member(const Dataset& ds, Model& model, const TrainConfig& tc,
                  const BaselineSpec& effective, std::uint64_t shuffle_seed,
                  std::vector<EpochLog>* log) {
  SgdOptimizer opt;
  const int total_epochs = tc.phase0_epochs + tc.phase1_epochs;

  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const int phase = epoch < tc.phase0_epochs ? 0 : 1;
    const double lambda = phase == 0 ? 0.0 : tc.lambda;

    std::vector<int> order = ds.train_ids;
    Rng rng(Rng::mix({shuffle_seed, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double sum_l0 = 0.0, sum_l1 = 0.0, sum_total = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end =
          std::min(order.size(), at + static_cast<std::size_t>(tc.batch_size));
      std::vector<int> ids(order.begin() + at, order.begin() + end);
      if (tc.sort_scope == SortScope::Image && ids.size() < 2) break;

      const int batch_index = batches;
      try {
        Tensor x = batch_inputs(ds, ids);
        Tensor y = batch_targets(ds, ids);

        GradTape tape;
        CombinedLoss out =
            loss_combined(model, x, y, effective, tc.eta, lambda, tc.sort_scope);
        const double total = out.total.item();
        if (!std::isfinite(total))
          throw NumericError("loss is not finite");

        GradMap grads = tape.backward(out.total);
        std::vector<Tensor> touched;
        for (Tensor& p : model.params())
          if (grads.count(p.id())) touched.push_back(p);
        opt.sgd_step(touched, grads, static_cast<float>(tc.lr),
                     static_cast<float>(tc.momentum));

        sum_l0 += out.l0;
        sum_l1 += out.l1;
        sum_total += total;
        ++batches;
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
    }

    if (log && batches > 0)
      log->push_back({epoch, phase, sum_l0 / batches, sum_l1 / batches,
                      sum_total / batches});
  }
}

}  // namespace

Checkpoint train(const Dataset& ds, const ModelConfig& mc,
                 const TrainConfig& tc) {
  validate_train_config(tc);
  if (ds.tiles.empty() || ds.train_ids.empty())
    throw ConfigError("train: dataset has no training tiles");

  const bool dual = baseline_uses_dual_head(tc.baseline.kind);
  if (dual && mc.head != HeadKind::DualConfidence)
    throw ConfigError("train: baseline " + baseline_name(tc.baseline) +
                      " needs a dual_confidence head");
  if (!dual && mc.head != HeadKind::Gaussian)
    throw ConfigError("train: baseline " + baseline_name(tc.baseline) +
                      " needs a gaussian head");

  const int member_count =
      tc.baseline.kind == Baseline::Ensemble ? tc.baseline.ensemble_m : 1;
  const BaselineSpec effective = tc.baseline.kind == Baseline::Ensemble
                                     ? BaselineSpec{Baseline::GaussianNll, 1}
                                     : tc.baseline;

  Checkpoint ckpt;
  ckpt.model_config = mc;
  ckpt.train_config = tc;
  for (int i = 0; i < member_count; ++i) {
    ModelConfig mci = mc;
    mci.seed = mc.seed + static_cast<std::uint64_t>(i);
    Model model(mci);
    const std::uint64_t shuffle_seed =
        member_count == 1
            ? tc.seed
            : Rng::mix({tc.seed, static_cast<std::uint64_t>(i)});
    // Only the first member's curve goes into the log.
    train_member(ds, model, tc, effective, shuffle_seed,
                 i == 0 ? &ckpt.log : nullptr);

    Checkpoint::Member member;
    member.names = model.param_names();
    member.tensors = model.params();
    ckpt.members.push_back(std::move(member));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  if (ckpt.members.empty())
    throw ConfigError("save_checkpoint: checkpoint has no members");
  const std::size_t per = ckpt.members.front().names.size();
  for (const auto& m : ckpt.members)
    if (m.names.size() != per || m.tensors.size() != per)
      throw ConfigError("save_checkpoint: members disagree on tensor count");

  io::BinWriter out(path);
  out.str(std::string(kCkptMagic, 8));
  out.u32(kCkptVersion);
  const std::string header =
      config_to_json(ckpt.model_config, ckpt.train_config, ckpt.log,
                     ckpt.members.size(), per)
          .dump();
  out.u64(header.size());
  out.str(header);

  for (const auto& member : ckpt.members) {
    for (std::size_t t = 0; t < per; ++t) {
      const std::string& name = member.names[t];
      const Tensor& tensor = member.tensors[t];
      out.u16(static_cast<std::uint16_t>(name.size()));
      out.str(name);
      out.u8(static_cast<std::uint8_t>(tensor.shape().size()));
      for (int d : tensor.shape()) out.u32(static_cast<std::uint32_t>(d));
      out.f32s(tensor.vec());
    }
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  io::BinReader in(path);
  in.expect_magic(kCkptMagic);
  in.expect_version(kCkptVersion);
  const std::uint64_t header_len = in.u64();
  json j;
  try {
    j = json::parse(in.str(header_len));
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "': bad JSON header at offset 20: " +
                      e.what());
  }

  Checkpoint ckpt;
  std::size_t members = 0, per = 0;
  config_from_json(j, ckpt, members, per);
  if (members == 0)
    throw FormatError("'" + path + "': checkpoint declares zero members");

  for (std::size_t m = 0; m < members; ++m) {
    Checkpoint::Member member;
    for (std::size_t t = 0; t < per; ++t) {
      const std::uint64_t rec_at = in.offset();
      const std::uint16_t name_len = in.u16();
      member.names.push_back(in.str(name_len));
      const std::uint8_t rank = in.u8();
      if (rank == 0 || rank > 4)
        throw FormatError("'" + path + "': tensor '" + member.names.back() +
                          "' at offset " + std::to_string(rec_at) +
                          " has rank " + std::to_string(rank));
      std::vector<int> shape;
      for (int d = 0; d < rank; ++d) {
        const std::uint32_t extent = in.u32();
        if (extent == 0 || extent > (1u << 24))
          throw FormatError("'" + path + "': tensor '" + member.names.back() +
                            "' at offset " + std::to_string(rec_at) +
                            " has bad extent " + std::to_string(extent));
        shape.push_back(static_cast<int>(extent));
      }
      Tensor tensor = Tensor::zeros(shape);
      in.f32s(tensor.vec());
      member.tensors.push_back(tensor);
    }
    ckpt.members.push_back(std::move(member));
  }
  in.expect_eof();
  return ckpt;
}

std::vector<Model> models_from_checkpoint(const Checkpoint& ckpt) {
  std::vector<Model> models;
  for (std::size_t i = 0; i < ckpt.members.size(); ++i) {
    ModelConfig mc = ckpt.model_config;
    mc.seed = ckpt.model_config.seed + i;
    Model model(mc);
    const auto& member = ckpt.members[i];
    if (member.names != model.param_names())
      throw FormatError("checkpoint member " + std::to_string(i) +
                        " does not match the model architecture");
    for (std::size_t t = 0; t < member.tensors.size(); ++t) {
      Tensor& dst = model.params()[t];
      const Tensor& src = member.tensors[t];
      if (src.shape() != dst.shape())
        throw FormatError("checkpoint tensor '" + member.names[t] +
                          "' has shape " + shape_str(src.shape()) +
                          ", the model expects " + shape_str(dst.shape()));
      dst.vec() = src.vec();
    }
    models.push_back(std::move(model));
  }
  return models;
}

}  // namespace care
