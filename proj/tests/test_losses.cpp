#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <vector>

#include "care/error.hpp"
#include "care/losses.hpp"
#include "care/model.hpp"
#include "care/rng.hpp"
#include "care/tensor.hpp"
#include "doctest.h"
#include "gradcheck_util.hpp"

using namespace care;

namespace {

Tensor from(const std::vector<float>& v, std::vector<int> shape = {}) {
  if (shape.empty()) shape = {static_cast<int>(v.size())};
  Tensor t = Tensor::zeros(shape);
  t.vec() = v;
  return t;
}

}  // namespace

TEST_CASE("baseline parsing round-trips") {
  CHECK(parse_baseline("care").kind == Baseline::Care);
  CHECK(parse_baseline("gaussian_nll").kind == Baseline::GaussianNll);
  CHECK(parse_baseline("error_sorting").kind == Baseline::ErrorSorting);
  CHECK(parse_baseline("absolute_error").kind == Baseline::AbsoluteError);
  BaselineSpec ens = parse_baseline("ensemble:5");
  CHECK(ens.kind == Baseline::Ensemble);
  CHECK(ens.ensemble_m == 5);
  CHECK(baseline_name(ens) == "ensemble:5");
  CHECK(baseline_name(parse_baseline("care")) == "care");

  CHECK_THROWS_AS(parse_baseline("ensemble:0"), ConfigError);
  CHECK_THROWS_AS(parse_baseline("ensemble:two"), ConfigError);
  CHECK_THROWS_AS(parse_baseline("ensemble:3x"), ConfigError);
  CHECK_THROWS_AS(parse_baseline("dropout"), ConfigError);
}

TEST_CASE("confidence targets follow the sorted-error rule") {
  auto c = assign_confidence_targets({0.1f, 0.5f, 0.2f, 0.3f, 0.4f}, 0.8);
  CHECK(c == std::vector<float>{1, 0, 1, 1, 1});

  c = assign_confidence_targets({0.5f, 0.5f, 0.5f, 0.5f}, 0.5);
  CHECK(c == std::vector<float>{1, 1, 0, 0});

  std::vector<float> rising(10);
  for (int i = 0; i < 10; ++i) rising[i] = 0.1f * static_cast<float>(i + 1);
  c = assign_confidence_targets(rising, 0.8);
  for (int i = 0; i < 8; ++i) CHECK(c[i] == 1.f);
  for (int i = 8; i < 10; ++i) CHECK(c[i] == 0.f);
}

TEST_CASE("confidence target preconditions") {
  CHECK_THROWS_AS(assign_confidence_targets({}, 0.8), ConfigError);
  CHECK_THROWS_AS(assign_confidence_targets({0.5f}, 0.8), ConfigError);
  CHECK_THROWS_AS(assign_confidence_targets({0.1f, -0.1f}, 0.8), ConfigError);
  CHECK_THROWS_AS(assign_confidence_targets({0.1f, 0.2f}, 0.0), ConfigError);
  CHECK_THROWS_AS(assign_confidence_targets({0.1f, 0.2f}, 1.0), ConfigError);
  const float inf = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(assign_confidence_targets({0.1f, inf}, 0.5), NumericError);
}

TEST_CASE("cardinality and monotonicity over random batches") {
  Rng rng(404);
  const int tenths[] = {5, 8, 9};
  for (int trial = 0; trial < 100; ++trial) {
    const int p = rng.uniform_int(2, 400);
    std::vector<float> err(p);
    for (float& e : err) e = rng.uniform(0.f, 1.f);
    for (int k : tenths) {
      const double eta = k / 10.0;
      auto c = assign_confidence_targets(err, eta);
      std::size_t ones = 0;
      float max_kept = -1.f, min_dropped = 2.f;
      for (int i = 0; i < p; ++i) {
        if (c[i] == 1.f) {
          ++ones;
          max_kept = std::max(max_kept, err[i]);
        } else {
          min_dropped = std::min(min_dropped, err[i]);
        }
      }
      CHECK(ones == static_cast<std::size_t>(p * k / 10));
      if (ones > 0 && ones < static_cast<std::size_t>(p))
        CHECK(max_kept <= min_dropped);
    }
  }
}

TEST_CASE("regression loss hand values") {
  CHECK(loss_regression(from({0.3f, 0.9f}), from({0.3f, 0.9f})).item() == 0.f);
  CHECK(loss_regression(from({0.5f, 0.0f}), from({0.0f, 0.0f})).item() ==
        doctest::Approx(0.125).epsilon(1e-7));
  CHECK(loss_regression(from({1.f}), from({0.f})).item() ==
        doctest::Approx(1.0).epsilon(1e-7));
  CHECK_THROWS_AS(loss_regression(from({1.f, 2.f}), from({1.f})), ShapeError);
}

TEST_CASE("confidence loss hand values") {
  Tensor y = from({0.2f, 0.8f});
  Tensor ys = from({0.4f, 0.5f});
  Tensor cs = from({1.f, 0.f});
  CHECK(loss_confidence(y, ys, cs, cs).item() == 0.f);
  CHECK(loss_confidence(ys, ys, from({0.3f, 0.9f}), cs).item() == 0.f);

  const double v =
      loss_confidence(from({0.7f}), from({0.5f}), from({0.7f}), from({1.f}))
          .item();
  CHECK(std::fabs(v - 0.018) < 1e-7);

  CHECK_THROWS_AS(loss_confidence(y, ys, cs, from({0.5f, 1.f})), ConfigError);
}

TEST_CASE("gaussian NLL closed-form values") {
  Tensor zero = from({0.f, 0.f, 0.f});
  const double at_min = loss_gaussian_nll(zero, zero, zero).item();
  CHECK(std::fabs(at_min - 0.5 * std::log(2.0 * 3.14159265358979323846)) <
        1e-6);

  const double unit_res =
      loss_gaussian_nll(from({0.f}), from({0.f}), from({1.f})).item();
  CHECK(std::fabs(unit_res - (at_min + 0.5)) < 1e-6);

  // For a fixed residual r the per-pixel NLL is minimized at log_var = log(r^2).
  const float r = 0.5f;
  auto nll_at = [&](float lv) {
    return loss_gaussian_nll(from({0.f}), from({lv}), from({r})).item();
  };
  const float best = std::log(r * r);
  CHECK(nll_at(best) < nll_at(best + 0.3f));
  CHECK(nll_at(best) < nll_at(best - 0.3f));

  CHECK_THROWS_AS(loss_gaussian_nll(zero, zero, from({0.f})), ShapeError);
}

TEST_CASE("combined loss two-pixel hand example") {
  DualPrediction pred{from({0.5f, 0.5f}), from({1.f, 0.f})};
  Tensor ys = from({0.5f, 0.1f});
  CombinedLoss out =
      combined_from_predictions(pred, ys, {Baseline::Care, 1}, 0.5, 1.0);
  CHECK(std::fabs(out.total.item() - 0.08) < 1e-7);
  CHECK(std::fabs(out.l0 - 0.08) < 1e-7);
  CHECK(out.l1 == 0.0);
}

TEST_CASE("lambda zero reduces to regression bit-for-bit") {
  ModelConfig mc;
  mc.seed = 5;
  Model model(mc);
  Rng rng(6);
  Tensor x = Tensor::zeros({2, 4, 16, 16});
  for (float& v : x.vec()) v = rng.uniform(0.f, 1.f);
  Tensor ys = Tensor::zeros({2, 1, 16, 16});
  for (float& v : ys.vec()) v = rng.uniform(0.f, 1.f);

  CombinedLoss out = loss_combined(model, x, ys, {Baseline::Care, 1}, 0.8, 0.0);
  NoGrad guard;
  const float direct = loss_regression(model.forward_dual(x).y, ys).item();
  CHECK(out.total.item() == direct);
}

TEST_CASE("perfect predictor separates care from error_sorting") {
  Rng rng(7);
  Tensor ys = Tensor::zeros({1, 1, 4, 4});
  for (float& v : ys.vec()) v = rng.uniform(0.1f, 0.9f);
  DualPrediction pred{ys, Tensor::full({1, 1, 4, 4}, 1.f)};

  CombinedLoss care =
      combined_from_predictions(pred, ys, {Baseline::Care, 1}, 0.75, 1.0);
  CHECK(care.total.item() == 0.f);
  CHECK(care.l1 == 0.0);

  CombinedLoss es = combined_from_predictions(pred, ys,
                                              {Baseline::ErrorSorting, 1},
                                              0.75, 1.0);
  CHECK(es.l1 > 0.0);
  CHECK(es.total.item() > 0.f);
  // 4 of 16 pixels are forced to target 0 while c == 1.
  CHECK(std::fabs(es.l1 - 0.25) < 1e-6);
}

TEST_CASE("absolute_error baseline regresses 1 - c onto the error") {
  DualPrediction pred{from({0.5f, 0.5f}), from({0.8f, 0.2f})};
  Tensor ys = from({0.5f, 0.1f});
  CombinedLoss out = combined_from_predictions(
      pred, ys, {Baseline::AbsoluteError, 1}, 0.5, 1.0);
  // u = [0.2, 0.8], errors = [0, 0.4]; L1 = (0.04 + 0.16) / 2 = 0.1.
  CHECK(std::fabs(out.l1 - 0.1) < 1e-6);
  CHECK(std::fabs(out.total.item() - (0.08 + 0.1)) < 1e-6);
}

TEST_CASE("permuting the batch permutes targets and keeps the loss") {
  Rng rng(11);
  const int pixels = 512;
  std::vector<float> yv(pixels), ysv(pixels), cv(pixels);
  for (int i = 0; i < pixels; ++i) {
    yv[i] = rng.uniform(0.f, 1.f);
    ysv[i] = rng.uniform(0.f, 1.f);
    cv[i] = rng.uniform(0.05f, 0.95f);
  }

  DualPrediction pred{from(yv, {2, 1, 16, 16}), from(cv, {2, 1, 16, 16})};
  Tensor ys = from(ysv, {2, 1, 16, 16});
  CombinedLoss base =
      combined_from_predictions(pred, ys, {Baseline::Care, 1}, 0.8, 1.0);

  // Swap the two batch items.
  auto swapped = [&](const std::vector<float>& v) {
    std::vector<float> w(v.begin() + pixels / 2, v.end());
    w.insert(w.end(), v.begin(), v.begin() + pixels / 2);
    return w;
  };
  DualPrediction pred2{from(swapped(yv), {2, 1, 16, 16}),
                       from(swapped(cv), {2, 1, 16, 16})};
  Tensor ys2 = from(swapped(ysv), {2, 1, 16, 16});
  CombinedLoss perm =
      combined_from_predictions(pred2, ys2, {Baseline::Care, 1}, 0.8, 1.0);

  CHECK(base.total.item() == perm.total.item());
  CHECK(base.l1 == perm.l1);
}

TEST_CASE("gaussian path of loss_combined returns the NLL") {
  ModelConfig mc;
  mc.head = HeadKind::Gaussian;
  mc.seed = 12;
  Model model(mc);
  Rng rng(13);
  Tensor x = Tensor::zeros({1, 4, 16, 16});
  for (float& v : x.vec()) v = rng.uniform(0.f, 1.f);
  Tensor ys = Tensor::zeros({1, 1, 16, 16});
  for (float& v : ys.vec()) v = rng.uniform(0.f, 1.f);

  CombinedLoss out =
      loss_combined(model, x, ys, {Baseline::GaussianNll, 1}, 0.8, 1.0);
  NoGrad guard;
  GaussianPrediction pred = model.forward_gaussian(x);
  CHECK(out.total.item() ==
        loss_gaussian_nll(pred.mu, pred.log_var, ys).item());
  CHECK(out.l0 == doctest::Approx(loss_regression(pred.mu, ys).item()));
  CHECK(out.l1 == 0.0);

  CHECK_THROWS_AS(
      loss_combined(model, x, ys, {Baseline::Care, 1}, 0.8, 1.0), ConfigError);
}

TEST_CASE("combined care loss gradient matches finite differences") {
  // Two-pixel toy: y and c come through sigmoids of two leaf weights each,
  // errors stay distinct and away from the sort boundary and the abs kink.
  Tensor ys = from({0.0f, 1.0f});
  auto make_fn = [&](BaselineSpec spec, double lambda) {
    return [=](const std::vector<Tensor>& leaves) {
      DualPrediction pred{sigmoid(leaves[0]), sigmoid(leaves[1])};
      return combined_from_predictions(pred, ys, spec, 0.5, lambda).total;
    };
  };

  std::vector<Tensor> leaves;
  leaves.push_back(from({0.3f, -0.4f}));
  leaves.push_back(from({0.2f, -0.3f}));
  for (Tensor& t : leaves) t.set_requires_grad(true);

  CHECK(gradcheck::max_rel_err(make_fn({Baseline::Care, 1}, 1.0), leaves) <
        1e-3);
  CHECK(gradcheck::max_rel_err(make_fn({Baseline::Care, 1}, 0.7), leaves) <
        1e-3);
  CHECK(gradcheck::max_rel_err(make_fn({Baseline::ErrorSorting, 1}, 1.0),
                               leaves) < 1e-3);

  // absolute_error detaches |y - y*| as the target for u = 1 - c, so finite
  // differences only agree along the confidence path; hold y fixed.
  Tensor wy_fixed = from({0.3f, -0.4f});
  auto abs_fn = [&](const std::vector<Tensor>& ls) {
    DualPrediction pred{sigmoid(wy_fixed), sigmoid(ls[0])};
    return combined_from_predictions(pred, ys, {Baseline::AbsoluteError, 1},
                                     0.5, 1.0)
        .total;
  };
  std::vector<Tensor> c_leaf;
  c_leaf.push_back(from({0.2f, -0.3f}));
  c_leaf[0].set_requires_grad(true);
  CHECK(gradcheck::max_rel_err(abs_fn, c_leaf) < 1e-3);
}

TEST_CASE("gaussian NLL gradient matches finite differences") {
  Tensor ys = from({0.2f, 0.9f});
  auto fn = [&](const std::vector<Tensor>& leaves) {
    return loss_gaussian_nll(leaves[0], leaves[1], ys);
  };
  std::vector<Tensor> leaves;
  leaves.push_back(from({0.5f, 0.4f}));
  leaves.push_back(from({-0.3f, 0.6f}));
  for (Tensor& t : leaves) t.set_requires_grad(true);
  CHECK(gradcheck::max_rel_err(fn, leaves) < 1e-3);
}
