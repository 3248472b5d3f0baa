#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "care/kernels.hpp"
#include "care/rng.hpp"
#include "care/tensor.hpp"
#include "doctest.h"

using namespace care;
namespace k = care::kernels;

namespace {

struct BackendScope {
  k::BackendKind saved;
  explicit BackendScope(k::BackendKind kind) : saved(k::active_backend_kind()) {
    k::set_active_backend(kind);
  }
  ~BackendScope() { k::set_active_backend(saved); }
};

std::vector<float> random_vec(std::size_t n, std::uint64_t seed, float lo = -2.f, float hi = 2.f) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Runs the same tensor graph under the requested backend.
template <typename Fn>
auto run_graph(k::BackendKind kind, Fn&& fn) {
  BackendScope scope(kind);
  return fn();
}

}  // namespace

TEST_CASE("elementwise kernels are bit-identical across backends") {
  // Large enough to cross the parallel threshold.
  const std::size_t n = 100000;
  const std::vector<float> a = random_vec(n, 11), b = random_vec(n, 12);
  for (k::Binary op : {k::Binary::Add, k::Binary::Sub, k::Binary::Mul}) {
    std::vector<float> s(n), p(n);
    k::serial_backend().binary_ew(op, a.data(), b.data(), s.data(), n);
    k::parallel_backend().binary_ew(op, a.data(), b.data(), p.data(), n);
    CHECK(s == p);
  }
  for (k::Unary op : {k::Unary::Relu, k::Unary::Sigmoid, k::Unary::Exp, k::Unary::Square,
                      k::Unary::Abs, k::Unary::Clamp}) {
    std::vector<float> s(n), p(n);
    k::serial_backend().unary_ew(op, a.data(), s.data(), n, -0.5f, 0.5f);
    k::parallel_backend().unary_ew(op, a.data(), p.data(), n, -0.5f, 0.5f);
    CHECK(s == p);
  }
}

TEST_CASE("blocked reduction is bit-identical across backends and block seams") {
  for (std::size_t n : {std::size_t{1}, std::size_t{4095}, std::size_t{4096}, std::size_t{4097},
                        std::size_t{100003}}) {
    const std::vector<float> x = random_vec(n, 21 + n);
    const double s = k::serial_backend().reduce_sum(x.data(), n);
    const double p = k::parallel_backend().reduce_sum(x.data(), n);
    CHECK(s == p);
  }
}

TEST_CASE("sgd update is bit-identical across backends") {
  const std::size_t n = 50000;
  const std::vector<float> g = random_vec(n, 31);
  std::vector<float> ps = random_vec(n, 32), pp = ps;
  std::vector<float> vs(n, 0.f), vp(n, 0.f);
  for (int step = 0; step < 3; ++step) {
    k::serial_backend().sgd_update(ps.data(), vs.data(), g.data(), 0.05f, 0.9f, n);
    k::parallel_backend().sgd_update(pp.data(), vp.data(), g.data(), 0.05f, 0.9f, n);
  }
  CHECK(ps == pp);
  CHECK(vs == vp);
}

TEST_CASE("full forward-backward graph is bit-identical across backends") {
  auto build = [] {
    Tensor x({2, 3, 16, 16}, random_vec(2 * 3 * 16 * 16, 41, -1.f, 1.f));
    Tensor w1({6, 3, 3, 3}, random_vec(6 * 3 * 3 * 3, 42, -0.4f, 0.4f), true);
    Tensor b1({6}, random_vec(6, 43, -0.2f, 0.2f), true);
    Tensor w2({1, 12, 3, 3}, random_vec(12 * 3 * 3, 44, -0.4f, 0.4f), true);
    Tensor b2({1}, random_vec(1, 45, -0.2f, 0.2f), true);
    GradTape tape;
    Tensor h = relu(conv2d(x, w1, b1, 1, 1));
    Tensor pooled = maxpool2(h);
    Tensor up = upsample2(pooled);
    Tensor cat = concat_channels({up, h});
    Tensor out = sigmoid(conv2d(cat, w2, b2, 1, 1));
    Tensor loss = mean(square(sub_scalar(out, 0.3f)));
    GradMap grads = tape.backward(loss);
    std::vector<std::vector<float>> gv{grads.at(w1.id()).vec(), grads.at(b1.id()).vec(),
                                       grads.at(w2.id()).vec(), grads.at(b2.id()).vec()};
    return std::make_pair(loss.item(), gv);
  };
  auto serial = run_graph(k::BackendKind::Serial, build);
  auto parallel = run_graph(k::BackendKind::Parallel, build);
  CHECK(serial.first == parallel.first);
  REQUIRE(serial.second.size() == parallel.second.size());
  for (std::size_t i = 0; i < serial.second.size(); ++i) CHECK(serial.second[i] == parallel.second[i]);
}

TEST_CASE("strided and padded conv agrees across backends") {
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      auto build = [&] {
        Tensor x({3, 4, 9, 11}, random_vec(3 * 4 * 9 * 11, 51, -1.f, 1.f));
        Tensor w({5, 4, 3, 3}, random_vec(5 * 4 * 3 * 3, 52, -0.5f, 0.5f), true);
        Tensor bias({5}, random_vec(5, 53, -0.2f, 0.2f), true);
        GradTape tape;
        Tensor y = conv2d(x, w, bias, stride, pad);
        Tensor loss = mean(square(y));
        GradMap grads = tape.backward(loss);
        return std::make_tuple(y.vec(), grads.at(w.id()).vec(), grads.at(bias.id()).vec());
      };
      auto s = run_graph(k::BackendKind::Serial, build);
      auto p = run_graph(k::BackendKind::Parallel, build);
      CHECK(std::get<0>(s) == std::get<0>(p));
      CHECK(std::get<1>(s) == std::get<1>(p));
      CHECK(std::get<2>(s) == std::get<2>(p));
    }
  }
}

TEST_CASE("matmul and transpose agree across backends") {
  const int m = 37, kk = 29, n = 41;
  const std::vector<float> a = random_vec(static_cast<std::size_t>(m) * kk, 61);
  const std::vector<float> b = random_vec(static_cast<std::size_t>(kk) * n, 62);
  std::vector<float> cs(static_cast<std::size_t>(m) * n), cp(cs.size());
  k::serial_backend().matmul(a.data(), b.data(), cs.data(), m, kk, n, false);
  k::parallel_backend().matmul(a.data(), b.data(), cp.data(), m, kk, n, false);
  CHECK(cs == cp);
  std::vector<float> ts(a.size()), tp(a.size());
  k::serial_backend().transpose2d(a.data(), ts.data(), m, kk);
  k::parallel_backend().transpose2d(a.data(), tp.data(), m, kk);
  CHECK(ts == tp);
}
