#pragma once

#include <cstddef>
#include <cstdint>

namespace care::kernels {

// Two interchangeable implementations of the numeric inner loops: a plain
// serial reference and an OpenMP version. Both must produce bit-identical
// results for any thread count: parallel loops only split work across
// independent output elements, and every accumulation runs in a fixed order.

enum class Unary { Relu, Sigmoid, Exp, Square, Abs, Clamp };
enum class Binary { Add, Sub, Mul };

struct Conv2dShape {
  int batch, cin, cout, h, w, kh, kw, stride, pad, oh, ow;
};

/// Reductions accumulate per fixed-size block so the combine order does not
/// depend on the thread count.
inline constexpr std::size_t kReduceBlock = 4096;

struct Backend {
  const char* name;

  void (*binary_ew)(Binary op, const float* a, const float* b, float* out, std::size_t n);
  // Scalar-tensor broadcast; scalar_left selects s op a[i] vs a[i] op s.
  void (*binary_scalar)(Binary op, const float* a, float s, bool scalar_left, float* out,
                        std::size_t n);
  void (*unary_ew)(Unary op, const float* x, float* out, std::size_t n, float lo, float hi);
  // dx[i] += f'(x[i]) * dy[i]; receives both input x and output y, each op
  // reads whichever it needs.
  void (*unary_bwd)(Unary op, const float* dy, const float* x, const float* y, float* dx,
                    std::size_t n, float lo, float hi);
  void (*scale)(const float* x, float s, float* out, std::size_t n);
  void (*axpy)(float* dst, float alpha, const float* src, std::size_t n);  // dst += alpha*src
  void (*mul_acc)(float* dst, const float* a, const float* b, std::size_t n);  // dst += a*b
  void (*add_scalar_acc)(float* dst, float s, std::size_t n);                  // dst += s
  double (*reduce_sum)(const float* x, std::size_t n);

  void (*matmul)(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);
  void (*transpose2d)(const float* in, float* out, int rows, int cols);

  void (*conv2d_fwd)(const Conv2dShape& s, const float* x, const float* w, const float* bias,
                     float* y);
  void (*conv2d_bwd_input)(const Conv2dShape& s, const float* dy, const float* w, float* dx);
  void (*conv2d_bwd_weight)(const Conv2dShape& s, const float* dy, const float* x, float* dw);
  void (*conv2d_bwd_bias)(const Conv2dShape& s, const float* dy, float* db);

  void (*maxpool2_fwd)(int b, int c, int h, int w, const float* x, float* y, std::int32_t* argmax);
  void (*maxpool2_bwd)(int b, int c, int h, int w, const float* dy, const std::int32_t* argmax,
                       float* dx);
  void (*upsample2_fwd)(int b, int c, int h, int w, const float* x, float* y);
  void (*upsample2_bwd)(int b, int c, int h, int w, const float* dy, float* dx);

  bool (*all_finite)(const float* x, std::size_t n);
  // v = momentum*v + g; p -= lr*v
  void (*sgd_update)(float* p, float* v, const float* g, float lr, float momentum, std::size_t n);
};

const Backend& serial_backend();
const Backend& parallel_backend();

enum class BackendKind { Serial, Parallel };

const Backend& active_backend();
BackendKind active_backend_kind();
void set_active_backend(BackendKind kind);

}  // namespace care::kernels
