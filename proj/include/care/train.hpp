#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "care/data.hpp"
#include "care/losses.hpp"
#include "care/model.hpp"

namespace care {

struct TrainConfig {
  double eta = 0.8;
  double lambda = 1.0;
  int phase0_epochs = 6;   // lambda forced to 0
  int phase1_epochs = 9;   // lambda as configured
  int batch_size = 8;      // tiles per mini-batch
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  BaselineSpec baseline;
  SortScope sort_scope = SortScope::Pixel;
};

void validate_train_config(const TrainConfig& tc);

struct EpochLog {
  int epoch = 0;  // global index across both phases
  int phase = 0;  // 0 while lambda is held at zero
  double l0 = 0.0;
  double l1 = 0.0;
  double total = 0.0;
};

std::string log_to_csv(const std::vector<EpochLog>& log);

struct Checkpoint {
  ModelConfig model_config;  // seed of member i is model_config.seed + i
  TrainConfig train_config;
  std::vector<EpochLog> log;

  struct Member {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
  };
  std::vector<Member> members;  // one entry unless baseline is ensemble:M
};

// Two-phase SGD training: phase0_epochs at lambda=0, then phase1_epochs at
// config.lambda, seeded shuffles each epoch, per-epoch mean losses logged.
// Non-finite losses abort with epoch/batch context. baseline=ensemble:M
// trains M gaussian members on member-specific seeds.
Checkpoint train(const Dataset& ds, const ModelConfig& mc,
                 const TrainConfig& tc);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds runnable models carrying the checkpoint weights.
std::vector<Model> models_from_checkpoint(const Checkpoint& ckpt);

}  // namespace care
