#pragma once

#include <string>
#include <vector>

#include "care/model.hpp"
#include "care/tensor.hpp"

namespace care {

enum class Baseline { Care, GaussianNll, ErrorSorting, AbsoluteError, Ensemble };

struct BaselineSpec {
  Baseline kind = Baseline::Care;
  int ensemble_m = 1;
};

// Accepts "care", "gaussian_nll", "error_sorting", "absolute_error",
// "ensemble:M" with M >= 1.
BaselineSpec parse_baseline(const std::string& text);
std::string baseline_name(const BaselineSpec& spec);
bool baseline_uses_dual_head(Baseline kind);

enum class SortScope { Pixel, Image };

// Sorted-error labeler: stable ascending sort of (error, index), the first
// floor(eta * len) pixels get target 1, the rest 0, returned in input order.
std::vector<float> assign_confidence_targets(const std::vector<float>& errors,
                                             double eta);

Tensor loss_regression(const Tensor& y, const Tensor& y_star);
Tensor loss_confidence(const Tensor& y, const Tensor& y_star, const Tensor& c,
                       const Tensor& c_star);
Tensor loss_gaussian_nll(const Tensor& mu, const Tensor& log_var,
                         const Tensor& y_star);

struct CombinedLoss {
  Tensor total;
  double l0 = 0.0;  // detached values for the training log
  double l1 = 0.0;
};

// Assembles L0 + lambda * L1 for a dual-head prediction. Target assignment is
// detached; the |y - y*| weight inside the care L1 stays live. lambda == 0
// returns loss_regression itself, bit-for-bit.
CombinedLoss combined_from_predictions(const DualPrediction& pred,
                                       const Tensor& y_star,
                                       const BaselineSpec& baseline, double eta,
                                       double lambda,
                                       SortScope scope = SortScope::Pixel);

// Forwards the model and dispatches on the baseline. Gaussian-family
// baselines ignore eta/lambda and return the NLL (l0 logs the detached MSE).
CombinedLoss loss_combined(const Model& model, const Tensor& batch_x,
                           const Tensor& batch_y_star,
                           const BaselineSpec& baseline, double eta,
                           double lambda, SortScope scope = SortScope::Pixel);

}  // namespace care
