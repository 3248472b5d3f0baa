#include "care/model.hpp"

#include <cmath>
#include <cstdint>

#include "care/error.hpp"
#include "care/rng.hpp"

namespace care {
namespace {

Tensor init_conv_weight(Rng& rng, int cout, int cin, int k) {
  const float bound = 1.f / std::sqrt(static_cast<float>(k * k * cin));
  Tensor w = Tensor::zeros({cout, cin, k, k}, /*requires_grad=*/true);
  for (float& v : w.vec()) v = rng.uniform(-bound, bound);
  return w;
}

}  // namespace

Model::Model(const ModelConfig& config) : cfg_(config) {
  if (cfg_.in_channels < 1)
    throw ConfigError("model: in_channels must be >= 1, got " +
                      std::to_string(cfg_.in_channels));
  if (cfg_.base_width < 2)
    throw ConfigError("model: base_width must be >= 2, got " +
                      std::to_string(cfg_.base_width));
  if (cfg_.depth < 1)
    throw ConfigError("model: depth must be >= 1, got " +
                      std::to_string(cfg_.depth));

  Rng rng(cfg_.seed);
  auto width = [&](int stage) { return cfg_.base_width << stage; };
  auto push = [&](const std::string& name, int cout, int cin, int k) {
    params_.push_back(init_conv_weight(rng, cout, cin, k));
    names_.push_back(name + ".weight");
    params_.push_back(Tensor::zeros({cout}, /*requires_grad=*/true));
    names_.push_back(name + ".bias");
  };

  for (int s = 0; s < cfg_.depth; ++s) {
    const int cin = s == 0 ? cfg_.in_channels : width(s - 1);
    push("enc" + std::to_string(s), width(s), cin, 3);
  }
  for (int s = cfg_.depth - 1; s >= 0; --s) {
    const int below = s == cfg_.depth - 1 ? width(cfg_.depth - 1) : width(s + 1);
    push("dec" + std::to_string(s), width(s), below + width(s), 3);
  }
  const bool dual = cfg_.head == HeadKind::DualConfidence;
  push(dual ? "head_y" : "head_mu", 1, width(0), 1);
  push(dual ? "head_c" : "head_logvar", 1, width(0), 1);
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const Tensor& p : params_) n += p.numel();
  return n;
}

Tensor Model::trunk(const Tensor& batch) const {
  const auto& shape = batch.shape();
  if (shape.size() != 4)
    throw ShapeError("model: expected a rank-4 batch, got " + shape_str(shape));
  if (shape[1] != cfg_.in_channels)
    throw ShapeError("model: expected " + std::to_string(cfg_.in_channels) +
                     " input channels, got " + std::to_string(shape[1]));
  const int div = 1 << cfg_.depth;
  if (shape[2] % div != 0 || shape[3] % div != 0)
    throw ShapeError("model: spatial extent " + std::to_string(shape[2]) + "x" +
                     std::to_string(shape[3]) + " not divisible by " +
                     std::to_string(div));

  std::vector<Tensor> skips;
  Tensor h = batch;
  for (int s = 0; s < cfg_.depth; ++s) {
    h = relu(conv2d(h, params_[2 * s], params_[2 * s + 1], 1, 1));
    skips.push_back(h);
    h = maxpool2(h);
  }
  for (int s = cfg_.depth - 1; s >= 0; --s) {
    const int base = 2 * cfg_.depth + 2 * (cfg_.depth - 1 - s);
    h = concat_channels({upsample2(h), skips[s]});
    h = relu(conv2d(h, params_[base], params_[base + 1], 1, 1));
  }
  return h;
}

DualPrediction Model::forward_dual(const Tensor& batch) const {
  if (cfg_.head != HeadKind::DualConfidence)
    throw ConfigError("forward_dual called on a gaussian-head model");
  const Tensor f = trunk(batch);
  const int base = 4 * cfg_.depth;
  Tensor y = sigmoid(conv2d(f, params_[base], params_[base + 1]));
  Tensor c = sigmoid(conv2d(f, params_[base + 2], params_[base + 3]));
  return {y, c};
}

GaussianPrediction Model::forward_gaussian(const Tensor& batch) const {
  if (cfg_.head != HeadKind::Gaussian)
    throw ConfigError("forward_gaussian called on a dual-confidence model");
  const Tensor f = trunk(batch);
  const int base = 4 * cfg_.depth;
  Tensor mu = conv2d(f, params_[base], params_[base + 1]);
  Tensor log_var = clamp(conv2d(f, params_[base + 2], params_[base + 3]),
                         kLogVarClampLo, kLogVarClampHi);
  return {mu, log_var};
}

std::pair<Tensor, Tensor> ensemble_predict(const std::vector<Model>& members,
                                           const Tensor& batch) {
  if (members.empty()) throw ConfigError("ensemble_predict: no members");
  for (const Model& m : members) {
    if (m.config().head != HeadKind::Gaussian)
      throw ConfigError("ensemble_predict: all members must be gaussian-head");
  }

  NoGrad guard;
  const double m_count = static_cast<double>(members.size());
  std::vector<double> sum_mu, sum_mu2, sum_var;
  std::vector<int> out_shape;
  for (const Model& m : members) {
    GaussianPrediction pred = m.forward_gaussian(batch);
    const auto& mu = pred.mu.vec();
    const auto& lv = pred.log_var.vec();
    if (sum_mu.empty()) {
      out_shape = pred.mu.shape();
      sum_mu.assign(mu.size(), 0.0);
      sum_mu2.assign(mu.size(), 0.0);
      sum_var.assign(mu.size(), 0.0);
    }
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double v = mu[i];
      sum_mu[i] += v;
      sum_mu2[i] += v * v;
      sum_var[i] += std::exp(static_cast<double>(lv[i]));
    }
  }

  Tensor mu_bar = Tensor::zeros(out_shape);
  Tensor var_total = Tensor::zeros(out_shape);
  for (std::size_t i = 0; i < sum_mu.size(); ++i) {
    const double mean_mu = sum_mu[i] / m_count;
    const double spread = sum_mu2[i] / m_count - mean_mu * mean_mu;
    mu_bar.vec()[i] = static_cast<float>(mean_mu);
    var_total.vec()[i] =
        static_cast<float>(sum_var[i] / m_count + (spread > 0.0 ? spread : 0.0));
  }
  return {mu_bar, var_total};
}

}  // namespace care
