#include "care/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "care/error.hpp"
#include "care/kernels.hpp"

namespace care {
namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local GradTape* t_active = nullptr;

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

[[noreturn]] void shape_fail(OpKind kind, const std::string& detail) {
  throw ShapeError(std::string(op_name(kind)) + ": " + detail);
}

void require_equal_shapes(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_fail(kind, "operand shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
}

kernels::Conv2dShape conv_shape(const std::vector<Tensor>& operands, const OpAttrs& attrs) {
  const Tensor& x = operands[0];
  const Tensor& w = operands[1];
  if (x.rank() != 4 || w.rank() != 4)
    shape_fail(OpKind::Conv2d, "expected rank-4 input and kernel, got " + shape_str(x.shape()) +
                                   " and " + shape_str(w.shape()));
  if (x.dim(1) != w.dim(1))
    shape_fail(OpKind::Conv2d, "input channels " + shape_str(x.shape()) +
                                   " do not match kernel " + shape_str(w.shape()));
  if (operands.size() == 3 &&
      (operands[2].rank() != 1 || operands[2].dim(0) != w.dim(0)))
    shape_fail(OpKind::Conv2d, "bias shape " + shape_str(operands[2].shape()) +
                                   " does not match kernel " + shape_str(w.shape()));
  if (attrs.stride < 1 || attrs.pad < 0)
    throw ConfigError("conv2d: stride must be >= 1 and pad >= 0");
  kernels::Conv2dShape s;
  s.batch = x.dim(0);
  s.cin = x.dim(1);
  s.h = x.dim(2);
  s.w = x.dim(3);
  s.cout = w.dim(0);
  s.kh = w.dim(2);
  s.kw = w.dim(3);
  s.stride = attrs.stride;
  s.pad = attrs.pad;
  s.oh = (s.h + 2 * s.pad - s.kh) / s.stride + 1;
  s.ow = (s.w + 2 * s.pad - s.kw) / s.stride + 1;
  if (s.h + 2 * s.pad < s.kh || s.w + 2 * s.pad < s.kw)
    shape_fail(OpKind::Conv2d, "kernel " + shape_str(w.shape()) + " larger than padded input " +
                                   shape_str(x.shape()));
  return s;
}

kernels::Unary unary_of(OpKind kind) {
  switch (kind) {
    case OpKind::Relu: return kernels::Unary::Relu;
    case OpKind::Sigmoid: return kernels::Unary::Sigmoid;
    case OpKind::Exp: return kernels::Unary::Exp;
    case OpKind::Square: return kernels::Unary::Square;
    case OpKind::Abs: return kernels::Unary::Abs;
    default: return kernels::Unary::Clamp;
  }
}

kernels::Binary binary_of(OpKind kind) {
  switch (kind) {
    case OpKind::Add:
    case OpKind::ScalarAdd: return kernels::Binary::Add;
    case OpKind::Sub:
    case OpKind::ScalarSub: return kernels::Binary::Sub;
    default: return kernels::Binary::Mul;
  }
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
  for (int d : shape)
    if (d < 1) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match buffer of " +
                     std::to_string(data.size()) + " values");
  shape_ = std::move(shape);
  data_ = std::make_shared<std::vector<float>>(std::move(data));
  id_ = g_next_id.fetch_add(1, std::memory_order_relaxed);
  requires_grad_ = requires_grad;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::vector<float> data(shape_numel(shape), 0.f);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
  std::vector<float> data(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(float value) { return Tensor({}, {value}); }

Tensor Tensor::detach() const {
  Tensor t;
  t.data_ = data_;
  t.shape_ = shape_;
  t.id_ = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return t;
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape_));
  return (*data_)[0];
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::ScalarAdd: return "scalar-add";
    case OpKind::ScalarSub: return "scalar-sub";
    case OpKind::ScalarMul: return "scalar-mul";
    case OpKind::Matmul: return "matmul";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Exp: return "exp";
    case OpKind::Square: return "square";
    case OpKind::Abs: return "abs";
    case OpKind::Clamp: return "clamp";
    case OpKind::Mean: return "mean";
    case OpKind::MeanAxis: return "mean-axis";
    case OpKind::Sum: return "sum";
    case OpKind::Concat: return "concat";
    case OpKind::Upsample2: return "upsample2";
    case OpKind::Maxpool2: return "maxpool2";
  }
  return "?";
}

GradTape::GradTape() {
  prev_ = t_active;
  t_active = this;
}

GradTape::~GradTape() { t_active = prev_; }

GradTape* GradTape::active() { return t_active; }

void GradTape::record(TapeEntry entry) {
  if (t_active) t_active->entries_.push_back(std::move(entry));
}

NoGrad::NoGrad() {
  saved_ = t_active;
  t_active = nullptr;
}

NoGrad::~NoGrad() { t_active = saved_; }

Tensor apply_primitive(OpKind kind, const std::vector<Tensor>& operands, const OpAttrs& attrs) {
  const kernels::Backend& be = kernels::active_backend();
  Tensor out;
  std::shared_ptr<std::vector<std::int32_t>> argmax;

  switch (kind) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      const Tensor& a = operands[0];
      const Tensor& b = operands[1];
      require_equal_shapes(kind, a, b);
      out = Tensor::zeros(a.shape());
      be.binary_ew(binary_of(kind), a.data(), b.data(), out.data(), a.numel());
      break;
    }
    case OpKind::ScalarAdd:
    case OpKind::ScalarSub:
    case OpKind::ScalarMul: {
      const Tensor& a = operands[0];
      out = Tensor::zeros(a.shape());
      be.binary_scalar(binary_of(kind), a.data(), attrs.scalar, attrs.scalar_left, out.data(),
                       a.numel());
      break;
    }
    case OpKind::Matmul: {
      const Tensor& a = operands[0];
      const Tensor& b = operands[1];
      if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        shape_fail(kind, "expected [m,k] x [k,n], got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
      out = Tensor::zeros({a.dim(0), b.dim(1)});
      be.matmul(a.data(), b.data(), out.data(), a.dim(0), a.dim(1), b.dim(1), false);
      break;
    }
    case OpKind::Conv2d: {
      const kernels::Conv2dShape s = conv_shape(operands, attrs);
      out = Tensor::zeros({s.batch, s.cout, s.oh, s.ow});
      be.conv2d_fwd(s, operands[0].data(), operands[1].data(),
                    operands.size() == 3 ? operands[2].data() : nullptr, out.data());
      break;
    }
    case OpKind::Relu:
    case OpKind::Sigmoid:
    case OpKind::Exp:
    case OpKind::Square:
    case OpKind::Abs:
    case OpKind::Clamp: {
      const Tensor& x = operands[0];
      if (kind == OpKind::Clamp && !(attrs.lo <= attrs.hi))
        throw ConfigError("clamp: lo must not exceed hi");
      out = Tensor::zeros(x.shape());
      be.unary_ew(unary_of(kind), x.data(), out.data(), x.numel(), attrs.lo, attrs.hi);
      break;
    }
    case OpKind::Mean: {
      const Tensor& x = operands[0];
      out = Tensor::scalar(
          static_cast<float>(be.reduce_sum(x.data(), x.numel()) / static_cast<double>(x.numel())));
      break;
    }
    case OpKind::Sum: {
      const Tensor& x = operands[0];
      out = Tensor::scalar(static_cast<float>(be.reduce_sum(x.data(), x.numel())));
      break;
    }
    case OpKind::MeanAxis: {
      const Tensor& x = operands[0];
      if (attrs.axis < 0 || attrs.axis >= x.rank())
        shape_fail(kind, "axis " + std::to_string(attrs.axis) + " out of range for " +
                             shape_str(x.shape()));
      std::size_t outer = 1, inner = 1;
      for (int i = 0; i < attrs.axis; ++i) outer *= static_cast<std::size_t>(x.dim(i));
      for (int i = attrs.axis + 1; i < x.rank(); ++i) inner *= static_cast<std::size_t>(x.dim(i));
      const std::size_t len = static_cast<std::size_t>(x.dim(attrs.axis));
      std::vector<int> oshape;
      for (int i = 0; i < x.rank(); ++i)
        if (i != attrs.axis) oshape.push_back(x.dim(i));
      out = Tensor::zeros(oshape);
      const float* xd = x.data();
      float* od = out.data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          double acc = 0.0;
          for (std::size_t k = 0; k < len; ++k) acc += xd[(o * len + k) * inner + i];
          od[o * inner + i] = static_cast<float>(acc / static_cast<double>(len));
        }
      }
      break;
    }
    case OpKind::Concat: {
      if (operands.empty()) shape_fail(kind, "no operands");
      const Tensor& first = operands[0];
      if (first.rank() != 4) shape_fail(kind, "expected rank-4 operands, got " + shape_str(first.shape()));
      int ctot = 0;
      for (const Tensor& t : operands) {
        if (t.rank() != 4 || t.dim(0) != first.dim(0) || t.dim(2) != first.dim(2) ||
            t.dim(3) != first.dim(3))
          shape_fail(kind, "operand shapes " + shape_str(first.shape()) + " and " +
                               shape_str(t.shape()) + " differ outside the channel axis");
        ctot += t.dim(1);
      }
      const int b = first.dim(0), h = first.dim(2), w = first.dim(3);
      const std::size_t hw = static_cast<std::size_t>(h) * w;
      out = Tensor::zeros({b, ctot, h, w});
      int off = 0;
      for (const Tensor& t : operands) {
        const int cj = t.dim(1);
        for (int bi = 0; bi < b; ++bi)
          std::memcpy(out.data() + (static_cast<std::size_t>(bi) * ctot + off) * hw,
                      t.data() + static_cast<std::size_t>(bi) * cj * hw,
                      cj * hw * sizeof(float));
        off += cj;
      }
      break;
    }
    case OpKind::Upsample2: {
      const Tensor& x = operands[0];
      if (x.rank() != 4) shape_fail(kind, "expected rank-4 input, got " + shape_str(x.shape()));
      out = Tensor::zeros({x.dim(0), x.dim(1), 2 * x.dim(2), 2 * x.dim(3)});
      be.upsample2_fwd(x.dim(0), x.dim(1), x.dim(2), x.dim(3), x.data(), out.data());
      break;
    }
    case OpKind::Maxpool2: {
      const Tensor& x = operands[0];
      if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
        shape_fail(kind, "expected rank-4 input with even spatial extents, got " +
                             shape_str(x.shape()));
      out = Tensor::zeros({x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2});
      argmax = std::make_shared<std::vector<std::int32_t>>(out.numel());
      be.maxpool2_fwd(x.dim(0), x.dim(1), x.dim(2), x.dim(3), x.data(), out.data(),
                      argmax->data());
      break;
    }
  }

  if (!be.all_finite(out.data(), out.numel()))
    throw NumericError(std::string(op_name(kind)) + " produced a non-finite value");

  if (GradTape::active()) {
    bool tracked = false;
    for (const Tensor& t : operands)
      if (t.requires_grad() || t.tracked()) {
        tracked = true;
        break;
      }
    if (tracked) {
      out.mark_tracked();
      GradTape::record({kind, attrs, operands, out, argmax});
    }
  }
  return out;
}

GradMap GradTape::backward(const Tensor& output) {
  if (consumed_) throw TapeError("backward: tape already consumed");
  consumed_ = true;
  if (!output.defined() || output.numel() != 1)
    throw ShapeError("backward: output must be a scalar, got shape " + shape_str(output.shape()));

  // Which tensors can reach a grad-requiring leaf: leaves themselves plus, in
  // forward order, every op output fed by one.
  std::unordered_set<std::uint64_t> needs;
  for (const TapeEntry& e : entries_) {
    for (const Tensor& in : e.inputs) {
      if (in.requires_grad() || needs.count(in.id())) {
        needs.insert(e.output.id());
        break;
      }
    }
  }

  std::unordered_map<std::uint64_t, std::vector<float>> adj;
  adj.emplace(output.id(), std::vector<float>(1, 1.f));

  const kernels::Backend& be = kernels::active_backend();
  auto buf = [&adj](const Tensor& t) -> float* {
    auto it = adj.find(t.id());
    if (it == adj.end()) it = adj.emplace(t.id(), std::vector<float>(t.numel(), 0.f)).first;
    return it->second.data();
  };

  for (auto rit = entries_.rbegin(); rit != entries_.rend(); ++rit) {
    const TapeEntry& e = *rit;
    auto oit = adj.find(e.output.id());
    if (oit == adj.end()) continue;
    const float* dy = oit->second.data();
    auto wants = [&](std::size_t i) {
      return e.inputs[i].requires_grad() || needs.count(e.inputs[i].id()) > 0;
    };

    switch (e.op) {
      case OpKind::Add: {
        const std::size_t n = e.inputs[0].numel();
        if (wants(0)) be.axpy(buf(e.inputs[0]), 1.f, dy, n);
        if (wants(1)) be.axpy(buf(e.inputs[1]), 1.f, dy, n);
        break;
      }
      case OpKind::Sub: {
        const std::size_t n = e.inputs[0].numel();
        if (wants(0)) be.axpy(buf(e.inputs[0]), 1.f, dy, n);
        if (wants(1)) be.axpy(buf(e.inputs[1]), -1.f, dy, n);
        break;
      }
      case OpKind::Mul: {
        const std::size_t n = e.inputs[0].numel();
        if (wants(0)) be.mul_acc(buf(e.inputs[0]), dy, e.inputs[1].data(), n);
        if (wants(1)) be.mul_acc(buf(e.inputs[1]), dy, e.inputs[0].data(), n);
        break;
      }
      case OpKind::ScalarAdd: {
        if (wants(0)) be.axpy(buf(e.inputs[0]), 1.f, dy, e.inputs[0].numel());
        break;
      }
      case OpKind::ScalarSub: {
        if (wants(0))
          be.axpy(buf(e.inputs[0]), e.attrs.scalar_left ? -1.f : 1.f, dy, e.inputs[0].numel());
        break;
      }
      case OpKind::ScalarMul: {
        if (wants(0)) be.axpy(buf(e.inputs[0]), e.attrs.scalar, dy, e.inputs[0].numel());
        break;
      }
      case OpKind::Matmul: {
        const int m = e.inputs[0].dim(0), k = e.inputs[0].dim(1), n = e.inputs[1].dim(1);
        if (wants(0)) {
          std::vector<float> bt(static_cast<std::size_t>(n) * k);
          be.transpose2d(e.inputs[1].data(), bt.data(), k, n);
          be.matmul(dy, bt.data(), buf(e.inputs[0]), m, n, k, true);
        }
        if (wants(1)) {
          std::vector<float> at(static_cast<std::size_t>(k) * m);
          be.transpose2d(e.inputs[0].data(), at.data(), m, k);
          be.matmul(at.data(), dy, buf(e.inputs[1]), k, m, n, true);
        }
        break;
      }
      case OpKind::Conv2d: {
        const kernels::Conv2dShape s = conv_shape(e.inputs, e.attrs);
        if (wants(0)) be.conv2d_bwd_input(s, dy, e.inputs[1].data(), buf(e.inputs[0]));
        if (wants(1)) be.conv2d_bwd_weight(s, dy, e.inputs[0].data(), buf(e.inputs[1]));
        if (e.inputs.size() == 3 && wants(2)) be.conv2d_bwd_bias(s, dy, buf(e.inputs[2]));
        break;
      }
      case OpKind::Relu:
      case OpKind::Sigmoid:
      case OpKind::Exp:
      case OpKind::Square:
      case OpKind::Abs:
      case OpKind::Clamp: {
        if (wants(0))
          be.unary_bwd(unary_of(e.op), dy, e.inputs[0].data(), e.output.data(),
                       buf(e.inputs[0]), e.inputs[0].numel(), e.attrs.lo, e.attrs.hi);
        break;
      }
      case OpKind::Mean: {
        if (wants(0)) {
          const std::size_t n = e.inputs[0].numel();
          be.add_scalar_acc(buf(e.inputs[0]), dy[0] / static_cast<float>(n), n);
        }
        break;
      }
      case OpKind::Sum: {
        if (wants(0)) be.add_scalar_acc(buf(e.inputs[0]), dy[0], e.inputs[0].numel());
        break;
      }
      case OpKind::MeanAxis: {
        if (wants(0)) {
          const Tensor& x = e.inputs[0];
          std::size_t outer = 1, inner = 1;
          for (int i = 0; i < e.attrs.axis; ++i) outer *= static_cast<std::size_t>(x.dim(i));
          for (int i = e.attrs.axis + 1; i < x.rank(); ++i)
            inner *= static_cast<std::size_t>(x.dim(i));
          const std::size_t len = static_cast<std::size_t>(x.dim(e.attrs.axis));
          float* dx = buf(x);
          const float inv = 1.f / static_cast<float>(len);
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t k = 0; k < len; ++k)
              for (std::size_t i = 0; i < inner; ++i)
                dx[(o * len + k) * inner + i] += dy[o * inner + i] * inv;
        }
        break;
      }
      case OpKind::Concat: {
        const int b = e.output.dim(0), ctot = e.output.dim(1);
        const std::size_t hw = static_cast<std::size_t>(e.output.dim(2)) * e.output.dim(3);
        int off = 0;
        for (std::size_t j = 0; j < e.inputs.size(); ++j) {
          const int cj = e.inputs[j].dim(1);
          if (wants(j)) {
            float* dx = buf(e.inputs[j]);
            for (int bi = 0; bi < b; ++bi)
              be.axpy(dx + static_cast<std::size_t>(bi) * cj * hw, 1.f,
                      dy + (static_cast<std::size_t>(bi) * ctot + off) * hw, cj * hw);
          }
          off += cj;
        }
        break;
      }
      case OpKind::Upsample2: {
        if (wants(0)) {
          const Tensor& x = e.inputs[0];
          be.upsample2_bwd(x.dim(0), x.dim(1), x.dim(2), x.dim(3), dy, buf(x));
        }
        break;
      }
      case OpKind::Maxpool2: {
        if (wants(0)) {
          const Tensor& x = e.inputs[0];
          be.maxpool2_bwd(x.dim(0), x.dim(1), x.dim(2), x.dim(3), dy, e.argmax->data(), buf(x));
        }
        break;
      }
    }
  }

  GradMap grads;
  for (const TapeEntry& e : entries_) {
    for (const Tensor& in : e.inputs) {
      if (!in.requires_grad() || grads.count(in.id())) continue;
      auto ait = adj.find(in.id());
      if (ait == adj.end()) continue;
      grads.emplace(in.id(), Tensor(in.shape(), std::move(ait->second)));
      ait->second.clear();
    }
  }
  if (output.requires_grad() && !grads.count(output.id()))
    grads.emplace(output.id(), Tensor(output.shape(), std::vector<float>(1, 1.f)));
  return grads;
}

Tensor add(const Tensor& a, const Tensor& b) { return apply_primitive(OpKind::Add, {a, b}, {}); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply_primitive(OpKind::Sub, {a, b}, {}); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply_primitive(OpKind::Mul, {a, b}, {}); }

Tensor add_scalar(const Tensor& a, float s) {
  OpAttrs attrs;
  attrs.scalar = s;
  return apply_primitive(OpKind::ScalarAdd, {a}, attrs);
}

Tensor sub_scalar(const Tensor& a, float s) {
  OpAttrs attrs;
  attrs.scalar = s;
  return apply_primitive(OpKind::ScalarSub, {a}, attrs);
}

Tensor rsub_scalar(float s, const Tensor& a) {
  OpAttrs attrs;
  attrs.scalar = s;
  attrs.scalar_left = true;
  return apply_primitive(OpKind::ScalarSub, {a}, attrs);
}

Tensor mul_scalar(const Tensor& a, float s) {
  OpAttrs attrs;
  attrs.scalar = s;
  return apply_primitive(OpKind::ScalarMul, {a}, attrs);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  return apply_primitive(OpKind::Matmul, {a, b}, {});
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  if (bias.defined()) return apply_primitive(OpKind::Conv2d, {x, w, bias}, attrs);
  return apply_primitive(OpKind::Conv2d, {x, w}, attrs);
}

Tensor relu(const Tensor& x) { return apply_primitive(OpKind::Relu, {x}, {}); }
Tensor sigmoid(const Tensor& x) { return apply_primitive(OpKind::Sigmoid, {x}, {}); }
Tensor exp(const Tensor& x) { return apply_primitive(OpKind::Exp, {x}, {}); }
Tensor square(const Tensor& x) { return apply_primitive(OpKind::Square, {x}, {}); }
Tensor abs(const Tensor& x) { return apply_primitive(OpKind::Abs, {x}, {}); }

Tensor clamp(const Tensor& x, float lo, float hi) {
  OpAttrs attrs;
  attrs.lo = lo;
  attrs.hi = hi;
  return apply_primitive(OpKind::Clamp, {x}, attrs);
}

Tensor mean(const Tensor& x) { return apply_primitive(OpKind::Mean, {x}, {}); }

Tensor mean_axis(const Tensor& x, int axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return apply_primitive(OpKind::MeanAxis, {x}, attrs);
}

Tensor sum(const Tensor& x) { return apply_primitive(OpKind::Sum, {x}, {}); }

Tensor concat_channels(const std::vector<Tensor>& xs) {
  return apply_primitive(OpKind::Concat, xs, {});
}

Tensor upsample2(const Tensor& x) { return apply_primitive(OpKind::Upsample2, {x}, {}); }
Tensor maxpool2(const Tensor& x) { return apply_primitive(OpKind::Maxpool2, {x}, {}); }

void SgdOptimizer::sgd_step(std::vector<Tensor>& params, const GradMap& grads, float lr,
                            float momentum) {
  if (!(lr > 0.f)) throw ConfigError("sgd_step: lr must be positive");
  if (momentum < 0.f || momentum >= 1.f) throw ConfigError("sgd_step: momentum must be in [0,1)");
  const kernels::Backend& be = kernels::active_backend();
  for (Tensor& p : params) {
    auto git = grads.find(p.id());
    if (git == grads.end())
      throw ConfigError("sgd_step: missing gradient for parameter id " + std::to_string(p.id()));
    std::vector<float>& v = velocity_[p.id()];
    if (v.size() != p.numel()) v.assign(p.numel(), 0.f);
    be.sgd_update(p.data(), v.data(), git->second.data(), lr, momentum, p.numel());
    if (!be.all_finite(p.data(), p.numel()))
      throw NumericError("sgd_step: non-finite parameter update");
  }
}

}  // namespace care
