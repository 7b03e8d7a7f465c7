#include "dssm/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dssm::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(Primitive op, const Shape& a, const Shape& b) {
  std::ostringstream os;
  os << primitive_name(op) << ": shape mismatch " << shape_str(a) << " vs " << shape_str(b);
  throw std::invalid_argument(os.str());
}

[[noreturn]] void shape_error(Primitive op, const Shape& a, const std::string& why) {
  std::ostringstream os;
  os << primitive_name(op) << ": invalid shape " << shape_str(a) << " (" << why << ")";
  throw std::invalid_argument(os.str());
}

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis) {
  if (axis == kAllAxes) return {1};
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

void accumulate(std::vector<double>& dst, std::size_t n) {
  if (dst.empty()) dst.assign(n, 0.0);
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor --------------------------------------------------------------

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape.empty()) throw std::invalid_argument("Tensor: shape must have at least one axis");
  for (auto n : shape) {
    if (n == 0) throw std::invalid_argument("Tensor: zero-sized axis in " + shape_str(shape));
  }
  if (numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " elements");
  }
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape.size()) throw std::out_of_range("Tensor::dim: axis out of range");
  return shape[axis];
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

double Tensor::item() const {
  if (data.size() != 1) {
    throw std::invalid_argument("Tensor::item: tensor " + shape_str(shape) + " is not a scalar");
  }
  return data[0];
}

std::string_view primitive_name(Primitive op) {
  switch (op) {
    case Primitive::kLeaf: return "leaf";
    case Primitive::kConstant: return "constant";
    case Primitive::kMatMul: return "matmul";
    case Primitive::kAdd: return "add";
    case Primitive::kSubtract: return "subtract";
    case Primitive::kMultiply: return "multiply";
    case Primitive::kConcat: return "concat";
    case Primitive::kSlice: return "slice";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kTanh: return "tanh";
    case Primitive::kRelu: return "relu";
    case Primitive::kExp: return "exp";
    case Primitive::kLog: return "log";
    case Primitive::kSquare: return "square";
    case Primitive::kSum: return "sum";
    case Primitive::kMean: return "mean";
    case Primitive::kAddBias: return "add_bias";
  }
  return "unknown";
}

// ---- Var -----------------------------------------------------------------

bool Var::valid() const { return tape_ != nullptr && tape_->epoch_ == epoch_ && id_ < tape_->nodes_.size(); }

const Tensor& Var::value() const { return tape().node(*this).val(); }

bool Var::requires_grad() const { return tape().node(*this).needs_grad; }

Tape& Var::tape() const {
  if (tape_ == nullptr) throw std::logic_error("Var: not bound to a tape");
  return *tape_;
}

// ---- Tape ----------------------------------------------------------------

Tape::Tape(DomainPolicy policy) : policy_(policy) { nodes_.reserve(1024); }

const Tape::Node& Tape::node(const Var& v) const {
  if (v.tape_ != this) throw std::logic_error("Var: belongs to a different tape");
  if (v.epoch_ != epoch_ || v.id_ >= nodes_.size()) {
    throw std::logic_error("Var: stale handle (tape was cleared by backward or clear)");
  }
  return nodes_[v.id_];
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1), epoch_);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Primitive::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.op = Primitive::kConstant;
  n.external = &value;
  return push(std::move(n));
}

Var Tape::leaf(Tensor& param) {
  Node n;
  n.op = Primitive::kLeaf;
  n.external = &param;
  n.sink = &param;
  n.needs_grad = true;
  return push(std::move(n));
}

void Tape::clear() {
  nodes_.clear();
  ++epoch_;
}

Var Tape::apply(Primitive op, std::span<const Var> inputs, const Attrs& attrs) {
  std::vector<const Tensor*> in;
  in.reserve(inputs.size());
  bool needs_grad = false;
  for (const auto& v : inputs) {
    const Node& n = node(v);
    in.push_back(&n.val());
    needs_grad = needs_grad || n.needs_grad;
  }

  auto expect_arity = [&](std::size_t k) {
    if (in.size() != k) {
      throw std::invalid_argument(std::string(primitive_name(op)) + ": expected " + std::to_string(k) +
                                  " inputs, got " + std::to_string(in.size()));
    }
  };

  Tensor out;
  switch (op) {
    case Primitive::kMatMul: {
      expect_arity(2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) shape_error(op, a.shape, b.shape);
      out = Tensor::zeros({a.shape[0], b.shape[1]});
      MutMap(out.data.data(), a.shape[0], b.shape[1]).noalias() =
          ConstMap(a.data.data(), a.shape[0], a.shape[1]) * ConstMap(b.data.data(), b.shape[0], b.shape[1]);
      break;
    }
    case Primitive::kAdd:
    case Primitive::kSubtract:
    case Primitive::kMultiply: {
      expect_arity(2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.shape != b.shape) shape_error(op, a.shape, b.shape);
      out.shape = a.shape;
      out.data.resize(a.size());
      const double* pa = a.data.data();
      const double* pb = b.data.data();
      double* po = out.data.data();
      const std::size_t n = a.size();
      if (op == Primitive::kAdd) {
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      } else if (op == Primitive::kSubtract) {
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      }
      break;
    }
    case Primitive::kConcat: {
      if (in.empty()) throw std::invalid_argument("concat: no inputs");
      const Shape& ref = in[0]->shape;
      if (attrs.axis >= ref.size()) shape_error(op, ref, "axis out of range");
      Shape shape = ref;
      shape[attrs.axis] = 0;
      for (const Tensor* t : in) {
        if (t->rank() != ref.size()) shape_error(op, ref, t->shape);
        for (std::size_t i = 0; i < ref.size(); ++i) {
          if (i != attrs.axis && t->shape[i] != ref[i]) shape_error(op, ref, t->shape);
        }
        shape[attrs.axis] += t->shape[attrs.axis];
      }
      out.shape = shape;
      out.data.resize(numel(shape));
      const AxisSplit os = split_at(shape, attrs.axis);
      std::size_t offset = 0;
      for (const Tensor* t : in) {
        const std::size_t block = t->shape[attrs.axis] * os.inner;
        for (std::size_t o = 0; o < os.outer; ++o) {
          std::copy_n(t->data.data() + o * block, block, out.data.data() + o * os.extent * os.inner + offset);
        }
        offset += block;
      }
      break;
    }
    case Primitive::kSlice: {
      expect_arity(1);
      const Tensor& x = *in[0];
      if (attrs.axis >= x.rank()) shape_error(op, x.shape, "axis out of range");
      if (attrs.begin >= attrs.end || attrs.end > x.shape[attrs.axis]) {
        shape_error(op, x.shape,
                    "range [" + std::to_string(attrs.begin) + "," + std::to_string(attrs.end) + ") on axis " +
                        std::to_string(attrs.axis));
      }
      const AxisSplit s = split_at(x.shape, attrs.axis);
      out.shape = x.shape;
      out.shape[attrs.axis] = attrs.end - attrs.begin;
      out.data.resize(numel(out.shape));
      const std::size_t block = (attrs.end - attrs.begin) * s.inner;
      for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(x.data.data() + (o * s.extent + attrs.begin) * s.inner, block, out.data.data() + o * block);
      }
      break;
    }
    case Primitive::kSigmoid:
    case Primitive::kTanh:
    case Primitive::kRelu:
    case Primitive::kExp:
    case Primitive::kLog:
    case Primitive::kSquare: {
      expect_arity(1);
      const Tensor& x = *in[0];
      out.shape = x.shape;
      out.data.resize(x.size());
      const double* px = x.data.data();
      double* po = out.data.data();
      const std::size_t n = x.size();
      switch (op) {
        case Primitive::kSigmoid:
          for (std::size_t i = 0; i < n; ++i) po[i] = sigmoid_scalar(px[i]);
          break;
        case Primitive::kTanh:
          for (std::size_t i = 0; i < n; ++i) po[i] = std::tanh(px[i]);
          break;
        case Primitive::kRelu:
          for (std::size_t i = 0; i < n; ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
          break;
        case Primitive::kExp:
          for (std::size_t i = 0; i < n; ++i) po[i] = std::exp(px[i]);
          break;
        case Primitive::kLog:
          for (std::size_t i = 0; i < n; ++i) {
            if (!(px[i] > 0.0) && policy_ == DomainPolicy::kReject) {
              throw std::domain_error("log: non-positive input " + std::to_string(px[i]) + " at element " +
                                      std::to_string(i) + " of " + shape_str(x.shape));
            }
            po[i] = std::log(px[i]);
          }
          break;
        default:
          for (std::size_t i = 0; i < n; ++i) po[i] = px[i] * px[i];
          break;
      }
      break;
    }
    case Primitive::kSum:
    case Primitive::kMean: {
      expect_arity(1);
      const Tensor& x = *in[0];
      if (attrs.axis == kAllAxes) {
        double s = 0.0;
        for (double v : x.data) s += v;
        if (op == Primitive::kMean) s /= static_cast<double>(x.size());
        out = Tensor::scalar(s);
      } else {
        if (attrs.axis >= x.rank()) shape_error(op, x.shape, "axis out of range");
        const AxisSplit s = split_at(x.shape, attrs.axis);
        out = Tensor::zeros(reduced_shape(x.shape, attrs.axis));
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t e = 0; e < s.extent; ++e) {
            const double* src = x.data.data() + (o * s.extent + e) * s.inner;
            double* dst = out.data.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
          }
        }
        if (op == Primitive::kMean) {
          const double inv = 1.0 / static_cast<double>(s.extent);
          for (double& v : out.data) v *= inv;
        }
      }
      break;
    }
    case Primitive::kAddBias: {
      expect_arity(2);
      const Tensor& x = *in[0];
      const Tensor& b = *in[1];
      if (x.shape[0] != b.size() || b.size() != b.shape[0]) shape_error(op, x.shape, b.shape);
      out.shape = x.shape;
      out.data.resize(x.size());
      const std::size_t inner = x.size() / x.shape[0];
      for (std::size_t r = 0; r < x.shape[0]; ++r) {
        const double bias = b.data[r];
        const double* src = x.data.data() + r * inner;
        double* dst = out.data.data() + r * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] + bias;
      }
      break;
    }
    case Primitive::kLeaf:
    case Primitive::kConstant:
      throw std::invalid_argument("apply: leaf/constant are created through Tape::leaf/constant");
  }

  Node n;
  n.op = op;
  n.value = std::move(out);
  n.attrs = attrs;
  n.needs_grad = needs_grad;
  if (needs_grad) {
    n.inputs.reserve(inputs.size());
    for (const auto& v : inputs) n.inputs.push_back(v.id_);
  }
  return push(std::move(n));
}

void Tape::backward(const Var& loss) {
  const Node& root = node(loss);
  if (root.val().size() != 1) {
    throw std::invalid_argument("backward: loss must have exactly one element, got shape " +
                                shape_str(root.val().shape));
  }
  std::vector<std::vector<double>> grads(nodes_.size());
  grads[loss.id_] = {1.0};
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || grads[id].empty()) continue;
    if (n.op == Primitive::kLeaf) {
      auto& g = n.sink->grad;
      accumulate(g, grads[id].size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += grads[id][i];
    } else {
      propagate(n, grads[id], grads);
    }
    std::vector<double>().swap(grads[id]);
  }
  clear();
}

void Tape::propagate(const Node& n, const std::vector<double>& go, std::vector<std::vector<double>>& grads) {
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
  auto input_val = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].val(); };
  auto grad_of = [&](std::size_t k) -> std::vector<double>& {
    auto& g = grads[n.inputs[k]];
    accumulate(g, input_val(k).size());
    return g;
  };
  const Tensor& y = n.val();
  const std::size_t count = y.size();

  switch (n.op) {
    case Primitive::kMatMul: {
      const Tensor& a = input_val(0);
      const Tensor& b = input_val(1);
      ConstMap dc(go.data(), y.shape[0], y.shape[1]);
      if (wants(0)) {
        MutMap(grad_of(0).data(), a.shape[0], a.shape[1]).noalias() +=
            dc * ConstMap(b.data.data(), b.shape[0], b.shape[1]).transpose();
      }
      if (wants(1)) {
        MutMap(grad_of(1).data(), b.shape[0], b.shape[1]).noalias() +=
            ConstMap(a.data.data(), a.shape[0], a.shape[1]).transpose() * dc;
      }
      break;
    }
    case Primitive::kAdd:
    case Primitive::kSubtract: {
      if (wants(0)) {
        auto& g = grad_of(0);
        for (std::size_t i = 0; i < count; ++i) g[i] += go[i];
      }
      if (wants(1)) {
        auto& g = grad_of(1);
        if (n.op == Primitive::kAdd) {
          for (std::size_t i = 0; i < count; ++i) g[i] += go[i];
        } else {
          for (std::size_t i = 0; i < count; ++i) g[i] -= go[i];
        }
      }
      break;
    }
    case Primitive::kMultiply: {
      const Tensor& a = input_val(0);
      const Tensor& b = input_val(1);
      if (wants(0)) {
        auto& g = grad_of(0);
        for (std::size_t i = 0; i < count; ++i) g[i] += go[i] * b.data[i];
      }
      if (wants(1)) {
        auto& g = grad_of(1);
        for (std::size_t i = 0; i < count; ++i) g[i] += go[i] * a.data[i];
      }
      break;
    }
    case Primitive::kConcat: {
      const AxisSplit os = split_at(y.shape, n.attrs.axis);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t block = input_val(k).shape[n.attrs.axis] * os.inner;
        if (wants(k)) {
          auto& g = grad_of(k);
          for (std::size_t o = 0; o < os.outer; ++o) {
            const double* src = go.data() + o * os.extent * os.inner + offset;
            double* dst = g.data() + o * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        offset += block;
      }
      break;
    }
    case Primitive::kSlice: {
      const Tensor& x = input_val(0);
      const AxisSplit s = split_at(x.shape, n.attrs.axis);
      const std::size_t block = (n.attrs.end - n.attrs.begin) * s.inner;
      auto& g = grad_of(0);
      for (std::size_t o = 0; o < s.outer; ++o) {
        double* dst = g.data() + (o * s.extent + n.attrs.begin) * s.inner;
        const double* src = go.data() + o * block;
        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
      }
      break;
    }
    case Primitive::kSigmoid: {
      auto& g = grad_of(0);
      for (std::size_t i = 0; i < count; ++i) g[i] += go[i] * y.data[i] * (1.0 - y.data[i]);
      break;
    }
    case Primitive::kTanh: {
      auto& g = grad_of(0);
      for (std::size_t i = 0; i < count; ++i) g[i] += go[i] * (1.0 - y.data[i] * y.data[i]);
      break;
    }
    case Primitive::kRelu: {
      const Tensor& x = input_val(0);
      auto& g = grad_of(0);
      for (std::size_t i = 0; i < count; ++i) g[i] += x.data[i] > 0.0 ? go[i] : 0.0;
      break;
    }
    case Primitive::kExp: {
      auto& g = grad_of(0);
      for (std::size_t i = 0; i < count; ++i) g[i] += go[i] * y.data[i];
      break;
    }
    case Primitive::kLog: {
      const Tensor& x = input_val(0);
      auto& g = grad_of(0);
      for (std::size_t i = 0; i < count; ++i) g[i] += go[i] / x.data[i];
      break;
    }
    case Primitive::kSquare: {
      const Tensor& x = input_val(0);
      auto& g = grad_of(0);
      for (std::size_t i = 0; i < count; ++i) g[i] += 2.0 * go[i] * x.data[i];
      break;
    }
    case Primitive::kSum:
    case Primitive::kMean: {
      const Tensor& x = input_val(0);
      auto& g = grad_of(0);
      if (n.attrs.axis == kAllAxes) {
        const double v = n.op == Primitive::kMean ? go[0] / static_cast<double>(x.size()) : go[0];
        for (double& e : g) e += v;
      } else {
        const AxisSplit s = split_at(x.shape, n.attrs.axis);
        const double k = n.op == Primitive::kMean ? 1.0 / static_cast<double>(s.extent) : 1.0;
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = go.data() + o * s.inner;
          for (std::size_t e = 0; e < s.extent; ++e) {
            double* dst = g.data() + (o * s.extent + e) * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += k * src[i];
          }
        }
      }
      break;
    }
    case Primitive::kAddBias: {
      const std::size_t rows = y.shape[0];
      const std::size_t inner = count / rows;
      if (wants(0)) {
        auto& g = grad_of(0);
        for (std::size_t i = 0; i < count; ++i) g[i] += go[i];
      }
      if (wants(1)) {
        auto& g = grad_of(1);
        for (std::size_t r = 0; r < rows; ++r) {
          double acc = 0.0;
          const double* src = go.data() + r * inner;
          for (std::size_t i = 0; i < inner; ++i) acc += src[i];
          g[r] += acc;
        }
      }
      break;
    }
    case Primitive::kLeaf:
    case Primitive::kConstant:
      break;
  }
}

// ---- free functions --------------------------------------------------------

namespace {

Var unary(Primitive op, const Var& x, const Attrs& attrs = {}) {
  const Var in[] = {x};
  return x.tape().apply(op, in, attrs);
}

Var binary(Primitive op, const Var& a, const Var& b) {
  const Var in[] = {a, b};
  return a.tape().apply(op, in);
}

}  // namespace

Var matmul(const Var& a, const Var& b) { return binary(Primitive::kMatMul, a, b); }
Var add(const Var& a, const Var& b) { return binary(Primitive::kAdd, a, b); }
Var subtract(const Var& a, const Var& b) { return binary(Primitive::kSubtract, a, b); }
Var multiply(const Var& a, const Var& b) { return binary(Primitive::kMultiply, a, b); }
Var add_bias(const Var& x, const Var& bias) { return binary(Primitive::kAddBias, x, bias); }

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Attrs attrs;
  attrs.axis = axis;
  return parts.front().tape().apply(Primitive::kConcat, parts, attrs);
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  return unary(Primitive::kSlice, x, Attrs{axis, begin, end});
}

Var sigmoid(const Var& x) { return unary(Primitive::kSigmoid, x); }
Var tanh(const Var& x) { return unary(Primitive::kTanh, x); }
Var relu(const Var& x) { return unary(Primitive::kRelu, x); }
Var exp(const Var& x) { return unary(Primitive::kExp, x); }
Var log(const Var& x) { return unary(Primitive::kLog, x); }
Var square(const Var& x) { return unary(Primitive::kSquare, x); }

Var sum(const Var& x, std::size_t axis) {
  Attrs attrs;
  attrs.axis = axis;
  return unary(Primitive::kSum, x, attrs);
}

Var mean(const Var& x, std::size_t axis) {
  Attrs attrs;
  attrs.axis = axis;
  return unary(Primitive::kMean, x, attrs);
}

Var scale(const Var& x, double factor) {
  return multiply(x, x.tape().constant(Tensor::full(x.shape(), factor)));
}

Var add_scalar(const Var& x, double offset) {
  return add(x, x.tape().constant(Tensor::full(x.shape(), offset)));
}

Var negate(const Var& x) { return scale(x, -1.0); }

Var softplus(const Var& x) {
  // softplus(x) = relu(x) + log(1 + exp(-|x|)); the exp argument is <= 0.
  const Var abs_x = add(relu(x), relu(negate(x)));
  return add(relu(x), log(add_scalar(exp(negate(abs_x)), 1.0)));
}

// ---- gradient checking ------------------------------------------------------

namespace {

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double scalar_of(const Var& v, const char* who) {
  if (v.size() != 1) {
    throw std::invalid_argument(std::string(who) + ": function output " + shape_str(v.shape()) +
                                " is not a scalar");
  }
  return v.item();
}

}  // namespace

double grad_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x, double eps) {
  Tensor* p = nullptr;
  Tensor copy = x;
  p = &copy;
  const std::function<Var(Tape&)> g = [&](Tape& tape) { return f(tape, tape.leaf(*p)); };
  Tensor* params[] = {p};
  return grad_check(g, params, eps);
}

double grad_check(const std::function<Var(Tape&)>& f, std::span<Tensor* const> params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");

  std::vector<std::vector<double>> saved;
  saved.reserve(params.size());
  for (Tensor* p : params) {
    saved.push_back(p->grad);
    p->grad.assign(p->size(), 0.0);
  }

  {
    Tape tape;
    const Var out = f(tape);
    scalar_of(out, "grad_check");
    tape.backward(out);
  }

  double worst = 0.0;
  for (Tensor* p : params) {
    const std::vector<double> analytic = p->grad;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double orig = p->data[i];
      p->data[i] = orig + eps;
      double plus = 0.0;
      {
        Tape tape;
        plus = scalar_of(f(tape), "grad_check");
      }
      p->data[i] = orig - eps;
      double minus = 0.0;
      {
        Tape tape;
        minus = scalar_of(f(tape), "grad_check");
      }
      p->data[i] = orig;
      worst = std::max(worst, rel_error(analytic[i], (plus - minus) / (2.0 * eps)));
    }
  }

  for (std::size_t k = 0; k < params.size(); ++k) params[k]->grad = std::move(saved[k]);
  return worst;
}

}  // namespace dssm::ad
