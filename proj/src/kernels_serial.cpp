#include <cmath>

#include "care/kernels.hpp"

// Serial reference implementation. The OpenMP backend must keep these loop
// nests (and therefore the per-element accumulation order) unchanged; the
// kernels test asserts bit-identical outputs between the two.

namespace care::kernels {
namespace {

void binary_ew_serial(Binary op, const float* a, const float* b, float* out, std::size_t n) {
  switch (op) {
    case Binary::Add:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
      break;
    case Binary::Sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
      break;
    case Binary::Mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
      break;
  }
}

void binary_scalar_serial(Binary op, const float* a, float s, bool scalar_left, float* out,
                          std::size_t n) {
  switch (op) {
    case Binary::Add:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + s;
      break;
    case Binary::Sub:
      if (scalar_left)
        for (std::size_t i = 0; i < n; ++i) out[i] = s - a[i];
      else
        for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - s;
      break;
    case Binary::Mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
      break;
  }
}

inline float sigmoid_stable(float v) {
  if (v >= 0.f) return 1.f / (1.f + std::exp(-v));
  const float e = std::exp(v);
  return e / (1.f + e);
}

void unary_ew_serial(Unary op, const float* x, float* out, std::size_t n, float lo, float hi) {
  switch (op) {
    case Unary::Relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.f ? x[i] : 0.f;
      break;
    case Unary::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid_stable(x[i]);
      break;
    case Unary::Exp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
      break;
    case Unary::Square:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * x[i];
      break;
    case Unary::Abs:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(x[i]);
      break;
    case Unary::Clamp:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] < lo ? lo : (x[i] > hi ? hi : x[i]);
      break;
  }
}

void unary_bwd_serial(Unary op, const float* dy, const float* x, const float* y, float* dx,
                      std::size_t n, float lo, float hi) {
  switch (op) {
    case Unary::Relu:
      for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0.f) dx[i] += dy[i];
      break;
    case Unary::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) dx[i] += y[i] * (1.f - y[i]) * dy[i];
      break;
    case Unary::Exp:
      for (std::size_t i = 0; i < n; ++i) dx[i] += y[i] * dy[i];
      break;
    case Unary::Square:
      for (std::size_t i = 0; i < n; ++i) dx[i] += 2.f * x[i] * dy[i];
      break;
    case Unary::Abs:
      for (std::size_t i = 0; i < n; ++i)
        dx[i] += (x[i] > 0.f ? 1.f : (x[i] < 0.f ? -1.f : 0.f)) * dy[i];
      break;
    case Unary::Clamp:
      for (std::size_t i = 0; i < n; ++i)
        if (x[i] >= lo && x[i] <= hi) dx[i] += dy[i];
      break;
  }
}

void scale_serial(const float* x, float s, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * s;
}

void axpy_serial(float* dst, float alpha, const float* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += alpha * src[i];
}

void mul_acc_serial(float* dst, const float* a, const float* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}

void add_scalar_acc_serial(float* dst, float s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += s;
}

double reduce_sum_serial(const float* x, std::size_t n) {
  // Block-wise accumulation; the combine order matches the parallel backend.
  const std::size_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
  double total = 0.0;
  for (std::size_t blk = 0; blk < nblocks; ++blk) {
    const std::size_t lo = blk * kReduceBlock;
    const std::size_t hi = lo + kReduceBlock < n ? lo + kReduceBlock : n;
    double part = 0.0;
    for (std::size_t i = lo; i < hi; ++i) part += static_cast<double>(x[i]);
    total += part;
  }
  return total;
}

void matmul_serial(const float* a, const float* b, float* c, int m, int k, int n,
                   bool accumulate) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) crow[j] = 0.f;
    for (int l = 0; l < k; ++l) {
      const float av = a[static_cast<std::size_t>(i) * k + l];
      const float* brow = b + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void transpose2d_serial(const float* in, float* out, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(c) * rows + r] = in[static_cast<std::size_t>(r) * cols + c];
}

void conv2d_fwd_serial(const Conv2dShape& s, const float* x, const float* w, const float* bias,
                       float* y) {
  const std::size_t xplane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t yplane = static_cast<std::size_t>(s.oh) * s.ow;
  for (int b = 0; b < s.batch; ++b) {
    for (int oc = 0; oc < s.cout; ++oc) {
      float* yp = y + (static_cast<std::size_t>(b) * s.cout + oc) * yplane;
      const float bv = bias ? bias[oc] : 0.f;
      for (std::size_t i = 0; i < yplane; ++i) yp[i] = bv;
      for (int ci = 0; ci < s.cin; ++ci) {
        const float* xp = x + (static_cast<std::size_t>(b) * s.cin + ci) * xplane;
        for (int kh = 0; kh < s.kh; ++kh) {
          for (int kw = 0; kw < s.kw; ++kw) {
            const float wv = w[((static_cast<std::size_t>(oc) * s.cin + ci) * s.kh + kh) * s.kw + kw];
            for (int oh = 0; oh < s.oh; ++oh) {
              const int ih = oh * s.stride - s.pad + kh;
              if (ih < 0 || ih >= s.h) continue;
              const float* xrow = xp + static_cast<std::size_t>(ih) * s.w;
              float* yrow = yp + static_cast<std::size_t>(oh) * s.ow;
              for (int ow = 0; ow < s.ow; ++ow) {
                const int iw = ow * s.stride - s.pad + kw;
                if (iw < 0 || iw >= s.w) continue;
                yrow[ow] += wv * xrow[iw];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_bwd_input_serial(const Conv2dShape& s, const float* dy, const float* w, float* dx) {
  const std::size_t xplane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t yplane = static_cast<std::size_t>(s.oh) * s.ow;
  for (int b = 0; b < s.batch; ++b) {
    for (int ci = 0; ci < s.cin; ++ci) {
      float* dxp = dx + (static_cast<std::size_t>(b) * s.cin + ci) * xplane;
      for (int oc = 0; oc < s.cout; ++oc) {
        const float* dyp = dy + (static_cast<std::size_t>(b) * s.cout + oc) * yplane;
        for (int kh = 0; kh < s.kh; ++kh) {
          for (int kw = 0; kw < s.kw; ++kw) {
            const float wv = w[((static_cast<std::size_t>(oc) * s.cin + ci) * s.kh + kh) * s.kw + kw];
            for (int oh = 0; oh < s.oh; ++oh) {
              const int ih = oh * s.stride - s.pad + kh;
              if (ih < 0 || ih >= s.h) continue;
              const float* dyrow = dyp + static_cast<std::size_t>(oh) * s.ow;
              float* dxrow = dxp + static_cast<std::size_t>(ih) * s.w;
              for (int ow = 0; ow < s.ow; ++ow) {
                const int iw = ow * s.stride - s.pad + kw;
                if (iw < 0 || iw >= s.w) continue;
                dxrow[iw] += wv * dyrow[ow];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_bwd_weight_serial(const Conv2dShape& s, const float* dy, const float* x, float* dw) {
  const std::size_t xplane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t yplane = static_cast<std::size_t>(s.oh) * s.ow;
  for (int oc = 0; oc < s.cout; ++oc) {
    for (int ci = 0; ci < s.cin; ++ci) {
      for (int kh = 0; kh < s.kh; ++kh) {
        for (int kw = 0; kw < s.kw; ++kw) {
          float acc = 0.f;
          for (int b = 0; b < s.batch; ++b) {
            const float* dyp = dy + (static_cast<std::size_t>(b) * s.cout + oc) * yplane;
            const float* xp = x + (static_cast<std::size_t>(b) * s.cin + ci) * xplane;
            for (int oh = 0; oh < s.oh; ++oh) {
              const int ih = oh * s.stride - s.pad + kh;
              if (ih < 0 || ih >= s.h) continue;
              const float* dyrow = dyp + static_cast<std::size_t>(oh) * s.ow;
              const float* xrow = xp + static_cast<std::size_t>(ih) * s.w;
              for (int ow = 0; ow < s.ow; ++ow) {
                const int iw = ow * s.stride - s.pad + kw;
                if (iw < 0 || iw >= s.w) continue;
                acc += dyrow[ow] * xrow[iw];
              }
            }
          }
          dw[((static_cast<std::size_t>(oc) * s.cin + ci) * s.kh + kh) * s.kw + kw] += acc;
        }
      }
    }
  }
}

void conv2d_bwd_bias_serial(const Conv2dShape& s, const float* dy, float* db) {
  const std::size_t yplane = static_cast<std::size_t>(s.oh) * s.ow;
  for (int oc = 0; oc < s.cout; ++oc) {
    float acc = 0.f;
    for (int b = 0; b < s.batch; ++b) {
      const float* dyp = dy + (static_cast<std::size_t>(b) * s.cout + oc) * yplane;
      for (std::size_t i = 0; i < yplane; ++i) acc += dyp[i];
    }
    db[oc] += acc;
  }
}

void maxpool2_fwd_serial(int b, int c, int h, int w, const float* x, float* y,
                         std::int32_t* argmax) {
  const int oh = h / 2, ow = w / 2;
  for (int bi = 0; bi < b * c; ++bi) {
    const float* xp = x + static_cast<std::size_t>(bi) * h * w;
    float* yp = y + static_cast<std::size_t>(bi) * oh * ow;
    std::int32_t* ap = argmax + static_cast<std::size_t>(bi) * oh * ow;
    const std::int32_t base_off = bi * h * w;
    for (int r = 0; r < oh; ++r) {
      for (int col = 0; col < ow; ++col) {
        const int i0 = (2 * r) * w + 2 * col;
        // Ties keep the first candidate in scan order.
        int best = i0;
        float bv = xp[i0];
        if (xp[i0 + 1] > bv) { bv = xp[i0 + 1]; best = i0 + 1; }
        if (xp[i0 + w] > bv) { bv = xp[i0 + w]; best = i0 + w; }
        if (xp[i0 + w + 1] > bv) { bv = xp[i0 + w + 1]; best = i0 + w + 1; }
        yp[r * ow + col] = bv;
        ap[r * ow + col] = base_off + best;
      }
    }
  }
}

void maxpool2_bwd_serial(int b, int c, int h, int w, const float* dy, const std::int32_t* argmax,
                         float* dx) {
  const std::size_t on = static_cast<std::size_t>(b) * c * (h / 2) * (w / 2);
  // Pool windows are disjoint, so each dx element is written at most once.
  for (std::size_t i = 0; i < on; ++i) dx[argmax[i]] += dy[i];
}

void upsample2_fwd_serial(int b, int c, int h, int w, const float* x, float* y) {
  for (int bi = 0; bi < b * c; ++bi) {
    const float* xp = x + static_cast<std::size_t>(bi) * h * w;
    float* yp = y + static_cast<std::size_t>(bi) * (2 * h) * (2 * w);
    for (int r = 0; r < 2 * h; ++r)
      for (int col = 0; col < 2 * w; ++col) yp[r * (2 * w) + col] = xp[(r / 2) * w + col / 2];
  }
}

void upsample2_bwd_serial(int b, int c, int h, int w, const float* dy, float* dx) {
  for (int bi = 0; bi < b * c; ++bi) {
    const float* dyp = dy + static_cast<std::size_t>(bi) * (2 * h) * (2 * w);
    float* dxp = dx + static_cast<std::size_t>(bi) * h * w;
    const int w2 = 2 * w;
    for (int r = 0; r < h; ++r) {
      for (int col = 0; col < w; ++col) {
        const int o = (2 * r) * w2 + 2 * col;
        dxp[r * w + col] += dyp[o] + dyp[o + 1] + dyp[o + w2] + dyp[o + w2 + 1];
      }
    }
  }
}

bool all_finite_serial(const float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

void sgd_update_serial(float* p, float* v, const float* g, float lr, float momentum,
                       std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = momentum * v[i] + g[i];
    p[i] -= lr * v[i];
  }
}

}  // namespace

const Backend& serial_backend() {
  static const Backend backend = {
      "serial",
      binary_ew_serial,
      binary_scalar_serial,
      unary_ew_serial,
      unary_bwd_serial,
      scale_serial,
      axpy_serial,
      mul_acc_serial,
      add_scalar_acc_serial,
      reduce_sum_serial,
      matmul_serial,
      transpose2d_serial,
      conv2d_fwd_serial,
      conv2d_bwd_input_serial,
      conv2d_bwd_weight_serial,
      conv2d_bwd_bias_serial,
      maxpool2_fwd_serial,
      maxpool2_bwd_serial,
      upsample2_fwd_serial,
      upsample2_bwd_serial,
      all_finite_serial,
      sgd_update_serial,
  };
  return backend;
}

}  // namespace care::kernels
