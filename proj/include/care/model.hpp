#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "care/tensor.hpp"

namespace care {

enum class HeadKind { DualConfidence, Gaussian };

struct ModelConfig {
  int in_channels = 4;
  int base_width = 8;
  int depth = 2;
  HeadKind head = HeadKind::DualConfidence;
  std::uint64_t seed = 0;
};

struct DualPrediction {
  Tensor y;  // B x 1 x H x W, sigmoid range
  Tensor c;  // B x 1 x H x W, sigmoid range
};

struct GaussianPrediction {
  Tensor mu;       // B x 1 x H x W, unconstrained
  Tensor log_var;  // B x 1 x H x W, clamped to [-10, 10]
};

// Encoder-decoder with skip connections: `depth` stages of
// (3x3 conv pad 1, relu, 2x2 maxpool) at widths base_width*2^stage, mirrored
// by (nearest upsample, concat skip, 3x3 conv pad 1, relu), then two parallel
// 1x1 heads. Weights are fan-in-scaled uniform from config.seed, biases zero.
class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return cfg_; }
  DualPrediction forward_dual(const Tensor& batch) const;
  GaussianPrediction forward_gaussian(const Tensor& batch) const;

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return names_; }
  std::size_t param_count() const;

 private:
  Tensor trunk(const Tensor& batch) const;

  ModelConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

constexpr float kLogVarClampLo = -10.f;
constexpr float kLogVarClampHi = 10.f;

// Uniform Gaussian-mixture moments over the members:
// mu_bar = mean of member means, var_total = mean variance + variance of means.
std::pair<Tensor, Tensor> ensemble_predict(const std::vector<Model>& members,
                                           const Tensor& batch);

}  // namespace care
