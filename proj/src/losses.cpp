#include "care/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>

#include "care/error.hpp"

namespace care {

BaselineSpec parse_baseline(const std::string& text) {
  if (text == "care") return {Baseline::Care, 1};
  if (text == "gaussian_nll") return {Baseline::GaussianNll, 1};
  if (text == "error_sorting") return {Baseline::ErrorSorting, 1};
  if (text == "absolute_error") return {Baseline::AbsoluteError, 1};
  if (text.rfind("ensemble:", 0) == 0) {
    const std::string arg = text.substr(9);
    std::size_t used = 0;
    int m = 0;
    try {
      m = std::stoi(arg, &used);
    } catch (const std::exception&) {
      throw ConfigError("baseline: bad ensemble size in '" + text + "'");
    }
    if (used != arg.size() || m < 1)
      throw ConfigError("baseline: bad ensemble size in '" + text + "'");
    return {Baseline::Ensemble, m};
  }
  throw ConfigError("baseline: unknown value '" + text +
                    "' (expected care, gaussian_nll, error_sorting, "
                    "absolute_error, or ensemble:M)");
}

std::string baseline_name(const BaselineSpec& spec) {
  switch (spec.kind) {
    case Baseline::Care: return "care";
    case Baseline::GaussianNll: return "gaussian_nll";
    case Baseline::ErrorSorting: return "error_sorting";
    case Baseline::AbsoluteError: return "absolute_error";
    case Baseline::Ensemble:
      return "ensemble:" + std::to_string(spec.ensemble_m);
  }
  throw ConfigError("baseline: unknown enum value");
}

bool baseline_uses_dual_head(Baseline kind) {
  return kind == Baseline::Care || kind == Baseline::ErrorSorting ||
         kind == Baseline::AbsoluteError;
}

std::vector<float> assign_confidence_targets(const std::vector<float>& errors,
                                             double eta) {
  if (errors.size() < 2)
    throw ConfigError("assign_confidence_targets: need at least 2 errors, got " +
                      std::to_string(errors.size()));
  if (!(eta > 0.0 && eta < 1.0))
    throw ConfigError("assign_confidence_targets: eta must lie in (0,1), got " +
                      std::to_string(eta));
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!std::isfinite(errors[i]))
      throw NumericError("assign_confidence_targets: non-finite error at index " +
                         std::to_string(i));
    if (errors[i] < 0.f)
      throw ConfigError("assign_confidence_targets: negative error at index " +
                        std::to_string(i));
  }

  const std::size_t n = errors.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (errors[a] != errors[b]) return errors[a] < errors[b];
    return a < b;
  });

  // The nudge keeps floor() exact when eta*n lands on an integer that double
  // rounding would place a hair below it (e.g. 0.7 * 10).
  const auto keep =
      static_cast<std::size_t>(std::floor(eta * static_cast<double>(n) + 1e-9));
  std::vector<float> c_star(n, 0.f);
  for (std::size_t r = 0; r < keep; ++r) c_star[order[r]] = 1.f;
  return c_star;
}

Tensor loss_regression(const Tensor& y, const Tensor& y_star) {
  return mean(square(sub(y, y_star)));
}

Tensor loss_confidence(const Tensor& y, const Tensor& y_star, const Tensor& c,
                       const Tensor& c_star) {
  for (float v : c_star.vec()) {
    if (v != 0.f && v != 1.f)
      throw ConfigError("loss_confidence: c_star must be binary");
  }
  return mean(mul(abs(sub(y, y_star)), square(sub(c, c_star))));
}

Tensor loss_gaussian_nll(const Tensor& mu, const Tensor& log_var,
                         const Tensor& y_star) {
  const float log_2pi =
      static_cast<float>(std::log(2.0 * 3.14159265358979323846));
  Tensor residual_term =
      mul(square(sub(y_star, mu)), exp(mul_scalar(log_var, -1.f)));
  Tensor per_pixel =
      mul_scalar(add_scalar(add(log_var, residual_term), log_2pi), 0.5f);
  return mean(per_pixel);
}

namespace {

// Detached |y - y*| per pixel, flattened in storage order.
std::vector<float> detached_errors(const Tensor& y, const Tensor& y_star) {
  NoGrad guard;
  return abs(sub(y, y_star)).vec();
}

Tensor targets_for(const DualPrediction& pred, const Tensor& y_star, double eta,
                   SortScope scope) {
  const std::vector<float> err = detached_errors(pred.y, y_star);
  Tensor c_star = Tensor::zeros(pred.c.shape());

  if (scope == SortScope::Pixel) {
    c_star.vec() = assign_confidence_targets(err, eta);
    return c_star;
  }

  // Image scope: rank each batch item by its mean error and assign a
  // constant target per item.
  const auto& shape = pred.c.shape();
  if (shape.empty())
    throw ShapeError("loss_combined: image-scope sorting needs a batch axis");
  const std::size_t batch = static_cast<std::size_t>(shape[0]);
  const std::size_t per_item = err.size() / batch;
  std::vector<float> item_err(batch, 0.f);
  for (std::size_t b = 0; b < batch; ++b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < per_item; ++i) acc += err[b * per_item + i];
    item_err[b] = static_cast<float>(acc / static_cast<double>(per_item));
  }
  const std::vector<float> item_target = assign_confidence_targets(item_err, eta);
  for (std::size_t b = 0; b < batch; ++b)
    std::fill_n(c_star.vec().begin() + b * per_item, per_item, item_target[b]);
  return c_star;
}

}  // namespace

CombinedLoss combined_from_predictions(const DualPrediction& pred,
                                       const Tensor& y_star,
                                       const BaselineSpec& baseline, double eta,
                                       double lambda, SortScope scope) {
  if (!baseline_uses_dual_head(baseline.kind))
    throw ConfigError("loss_combined: baseline " + baseline_name(baseline) +
                      " does not use dual-head predictions");
  if (lambda < 0.0)
    throw ConfigError("loss_combined: lambda must be nonnegative");

  CombinedLoss out;
  Tensor l0 = loss_regression(pred.y, y_star);
  out.l0 = l0.item();
  if (lambda == 0.0) {
    out.total = l0;
    return out;
  }

  Tensor c_star = targets_for(pred, y_star, eta, scope);
  Tensor l1;
  switch (baseline.kind) {
    case Baseline::Care:
      l1 = loss_confidence(pred.y, y_star, pred.c, c_star);
      break;
    case Baseline::ErrorSorting:
      l1 = mean(square(sub(pred.c, c_star)));
      break;
    case Baseline::AbsoluteError: {
      Tensor err_target = Tensor::zeros(pred.c.shape());
      err_target.vec() = detached_errors(pred.y, y_star);
      l1 = mean(square(sub(rsub_scalar(1.f, pred.c), err_target)));
      break;
    }
    default:
      throw ConfigError("loss_combined: unreachable baseline");
  }
  out.l1 = l1.item();
  out.total = add(l0, mul_scalar(l1, static_cast<float>(lambda)));
  return out;
}

CombinedLoss loss_combined(const Model& model, const Tensor& batch_x,
                           const Tensor& batch_y_star,
                           const BaselineSpec& baseline, double eta,
                           double lambda, SortScope scope) {
  if (baseline_uses_dual_head(baseline.kind)) {
    DualPrediction pred = model.forward_dual(batch_x);
    return combined_from_predictions(pred, batch_y_star, baseline, eta, lambda,
                                     scope);
  }

  GaussianPrediction pred = model.forward_gaussian(batch_x);
  CombinedLoss out;
  out.total = loss_gaussian_nll(pred.mu, pred.log_var, batch_y_star);
  {
    NoGrad guard;
    out.l0 = loss_regression(pred.mu, batch_y_star).item();
  }
  out.l1 = 0.0;
  return out;
}

}  // namespace care
