// Times the serial reference kernels against the OpenMP backend and verifies
// that both produce bit-identical results.

#include <chrono>
#include <cstdio>
#include <vector>

#include "care/kernels.hpp"
#include "care/rng.hpp"

namespace k = care::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  care::Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = rng.uniform(-1.f, 1.f);
  return v;
}

template <typename Fn>
double time_ms(int iters, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-18s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   %s\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  int failures = 0;

  {
    const std::size_t n = 1 << 22;
    const std::vector<float> a = random_vec(n, 1), b = random_vec(n, 2);
    std::vector<float> outs(n), outp(n);
    const double ts = time_ms(10, [&] {
      k::serial_backend().binary_ew(k::Binary::Mul, a.data(), b.data(), outs.data(), n);
    });
    const double tp = time_ms(10, [&] {
      k::parallel_backend().binary_ew(k::Binary::Mul, a.data(), b.data(), outp.data(), n);
    });
    const bool same = outs == outp;
    failures += !same;
    report("elementwise mul", ts, tp, same);
  }

  {
    const std::size_t n = 1 << 22;
    const std::vector<float> a = random_vec(n, 3);
    double rs = 0, rp = 0;
    const double ts = time_ms(10, [&] { rs = k::serial_backend().reduce_sum(a.data(), n); });
    const double tp = time_ms(10, [&] { rp = k::parallel_backend().reduce_sum(a.data(), n); });
    const bool same = rs == rp;
    failures += !same;
    report("reduce_sum", ts, tp, same);
  }

  {
    k::Conv2dShape s;
    s.batch = 8;
    s.cin = 8;
    s.cout = 16;
    s.h = s.w = 64;
    s.kh = s.kw = 3;
    s.stride = 1;
    s.pad = 1;
    s.oh = s.ow = 64;
    const std::vector<float> x = random_vec(static_cast<std::size_t>(s.batch) * s.cin * s.h * s.w, 4);
    const std::vector<float> w =
        random_vec(static_cast<std::size_t>(s.cout) * s.cin * s.kh * s.kw, 5);
    const std::vector<float> bias = random_vec(static_cast<std::size_t>(s.cout), 6);
    const std::size_t yn = static_cast<std::size_t>(s.batch) * s.cout * s.oh * s.ow;
    std::vector<float> ys(yn), yp(yn);
    const double ts = time_ms(5, [&] {
      k::serial_backend().conv2d_fwd(s, x.data(), w.data(), bias.data(), ys.data());
    });
    const double tp = time_ms(5, [&] {
      k::parallel_backend().conv2d_fwd(s, x.data(), w.data(), bias.data(), yp.data());
    });
    const bool same = ys == yp;
    failures += !same;
    report("conv2d fwd", ts, tp, same);

    const std::vector<float> dy = random_vec(yn, 7);
    std::vector<float> dws(w.size(), 0.f), dwp(w.size(), 0.f);
    const double tsw = time_ms(5, [&] {
      std::fill(dws.begin(), dws.end(), 0.f);
      k::serial_backend().conv2d_bwd_weight(s, dy.data(), x.data(), dws.data());
    });
    const double tpw = time_ms(5, [&] {
      std::fill(dwp.begin(), dwp.end(), 0.f);
      k::parallel_backend().conv2d_bwd_weight(s, dy.data(), x.data(), dwp.data());
    });
    const bool samew = dws == dwp;
    failures += !samew;
    report("conv2d bwd weight", tsw, tpw, samew);

    std::vector<float> dxs(x.size(), 0.f), dxp(x.size(), 0.f);
    const double tsx = time_ms(5, [&] {
      std::fill(dxs.begin(), dxs.end(), 0.f);
      k::serial_backend().conv2d_bwd_input(s, dy.data(), w.data(), dxs.data());
    });
    const double tpx = time_ms(5, [&] {
      std::fill(dxp.begin(), dxp.end(), 0.f);
      k::parallel_backend().conv2d_bwd_input(s, dy.data(), w.data(), dxp.data());
    });
    const bool samex = dxs == dxp;
    failures += !samex;
    report("conv2d bwd input", tsx, tpx, samex);
  }

  if (failures) {
    std::printf("%d kernel(s) diverged between backends\n", failures);
    return 1;
  }
  return 0;
}
