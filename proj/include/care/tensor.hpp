#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace care {

// Dense row-major float32 tensor. The handle has value semantics; the buffer
// is shared, so copies alias. Buffers are treated as immutable once created,
// except for parameter updates applied through SgdOptimizer.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
  static Tensor scalar(float value);

  bool defined() const { return static_cast<bool>(data_); }
  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return data_ ? data_->size() : 0; }

  float* data() { return data_->data(); }
  const float* data() const { return data_->data(); }
  std::vector<float>& vec() { return *data_; }
  const std::vector<float>& vec() const { return *data_; }

  std::uint64_t id() const { return id_; }
  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }
  bool tracked() const { return tracked_; }
  void mark_tracked() { tracked_ = true; }

  // Same buffer under a fresh identity with gradient tracking severed.
  Tensor detach() const;
  float item() const;

 private:
  std::shared_ptr<std::vector<float>> data_;
  std::vector<int> shape_;
  std::uint64_t id_ = 0;
  bool requires_grad_ = false;
  bool tracked_ = false;
};

std::string shape_str(const std::vector<int>& shape);

enum class OpKind {
  Add,
  Sub,
  Mul,
  ScalarAdd,
  ScalarSub,
  ScalarMul,
  Matmul,
  Conv2d,
  Relu,
  Sigmoid,
  Exp,
  Square,
  Abs,
  Clamp,
  Mean,
  MeanAxis,
  Sum,
  Concat,
  Upsample2,
  Maxpool2,
};

const char* op_name(OpKind kind);

struct OpAttrs {
  float scalar = 0.f;
  bool scalar_left = false;
  int stride = 1;
  int pad = 0;
  float lo = 0.f;
  float hi = 0.f;
  int axis = -1;
};

// Gradients keyed by the id of the tensor they belong to.
using GradMap = std::unordered_map<std::uint64_t, Tensor>;

struct TapeEntry {
  OpKind op;
  OpAttrs attrs;
  std::vector<Tensor> inputs;
  Tensor output;
  std::shared_ptr<std::vector<std::int32_t>> argmax;  // Maxpool2 only
};

// Ordered record of primitive applications. Constructing a tape makes it the
// active one for the current thread; destruction restores the previous tape,
// so tapes nest lexically. backward() may run once per tape.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  GradMap backward(const Tensor& output);
  std::size_t size() const { return entries_.size(); }

  static GradTape* active();
  static void record(TapeEntry entry);

 private:
  GradTape* prev_ = nullptr;
  std::vector<TapeEntry> entries_;
  bool consumed_ = false;
};

// Suspends tape recording for the enclosing scope.
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  GradTape* saved_;
};

Tensor apply_primitive(OpKind kind, const std::vector<Tensor>& operands, const OpAttrs& attrs);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float s);
Tensor sub_scalar(const Tensor& a, float s);   // a - s
Tensor rsub_scalar(float s, const Tensor& a);  // s - a
Tensor mul_scalar(const Tensor& a, float s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride = 1, int pad = 0);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor clamp(const Tensor& x, float lo, float hi);
Tensor mean(const Tensor& x);
Tensor mean_axis(const Tensor& x, int axis);
Tensor sum(const Tensor& x);
Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor upsample2(const Tensor& x);
Tensor maxpool2(const Tensor& x);

// p <- p - lr*v with v <- momentum*v + g; velocity buffers are keyed by
// parameter id and persist for the optimizer's lifetime.
class SgdOptimizer {
 public:
  void sgd_step(std::vector<Tensor>& params, const GradMap& grads, float lr, float momentum);

 private:
  std::unordered_map<std::uint64_t, std::vector<float>> velocity_;
};

}  // namespace care
