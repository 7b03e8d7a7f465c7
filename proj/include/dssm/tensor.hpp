#pragma once

// Dense float64 tensors and a dynamic reverse-mode gradient tape.
//
// Layout convention used throughout the library: batched quantities are
// stored feature-major, i.e. a batch of B vectors of size n is an n x B
// matrix, so an affine layer is W * X + b with the bias broadcast across
// columns.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dssm::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;
  // Empty until a backward pass (or zero_grad) populates it.
  std::vector<double> grad;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const;
  bool has_grad() const { return !grad.empty(); }
  void zero_grad();

  // Row-major element access for rank-2 tensors.
  double& at(std::size_t row, std::size_t col) { return data[row * shape[1] + col]; }
  double at(std::size_t row, std::size_t col) const { return data[row * shape[1] + col]; }

  // The single element of a one-element tensor.
  double item() const;
};

enum class Primitive : std::uint8_t {
  kLeaf,
  kConstant,
  kMatMul,
  kAdd,
  kSubtract,
  kMultiply,
  kConcat,
  kSlice,
  kSigmoid,
  kTanh,
  kRelu,
  kExp,
  kLog,
  kSquare,
  kSum,
  kMean,
  kAddBias,
};

std::string_view primitive_name(Primitive op);

// Reduce over every axis when passed as Attrs::axis to sum/mean.
inline constexpr std::size_t kAllAxes = static_cast<std::size_t>(-1);

struct Attrs {
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// What log() does with non-positive input.
enum class DomainPolicy { kReject, kPropagate };

class Tape;

// Handle to a value recorded on a Tape. Invalidated when the tape is
// cleared, which backward() does.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  Tape& tape() const;
  bool valid() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id, std::uint32_t epoch) : tape_(tape), id_(id), epoch_(epoch) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
  std::uint32_t epoch_ = 0;
};

class Tape {
 public:
  explicit Tape(DomainPolicy policy = DomainPolicy::kReject);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Value with no gradient; the tape owns a copy.
  Var constant(Tensor value);
  // Value with no gradient, referenced in place. Must outlive the tape's use.
  Var constant_ref(const Tensor& value);
  // Trainable leaf. backward() accumulates d(loss)/d(param) into param.grad.
  Var leaf(Tensor& param);

  Var apply(Primitive op, std::span<const Var> inputs, const Attrs& attrs = {});

  // Requires a one-element loss recorded on this tape. Clears the tape.
  void backward(const Var& loss);
  void clear();

  std::size_t size() const { return nodes_.size(); }
  DomainPolicy policy() const { return policy_; }

 private:
  friend class Var;

  struct Node {
    Primitive op = Primitive::kConstant;
    Tensor value;
    const Tensor* external = nullptr;
    Tensor* sink = nullptr;
    std::vector<std::uint32_t> inputs;
    Attrs attrs;
    bool needs_grad = false;

    const Tensor& val() const { return external != nullptr ? *external : value; }
  };

  const Node& node(const Var& v) const;
  Var push(Node node);
  void propagate(const Node& node, const std::vector<double>& grad_out,
                 std::vector<std::vector<double>>& grads);

  std::vector<Node> nodes_;
  std::uint32_t epoch_ = 1;
  DomainPolicy policy_;
};

// ---- primitives --------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var subtract(const Var& a, const Var& b);
Var multiply(const Var& a, const Var& b);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);
Var sum(const Var& x, std::size_t axis = kAllAxes);
Var mean(const Var& x, std::size_t axis = kAllAxes);
// x: (m x ...) plus bias of m elements, broadcast over the trailing dims.
Var add_bias(const Var& x, const Var& bias);

// ---- composites built from the primitives -------------------------------

Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double offset);
Var negate(const Var& x);
// log(1 + exp(x)) evaluated without overflow.
Var softplus(const Var& x);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return subtract(a, b); }
inline Var operator*(const Var& a, const Var& b) { return multiply(a, b); }

// ---- gradient checking --------------------------------------------------

// Max over elements of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// with central differences of step eps. f must return a one-element Var.
double grad_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x, double eps);

// Same, over every element of every tensor in params. f binds them with
// Tape::leaf itself.
double grad_check(const std::function<Var(Tape&)>& f, std::span<Tensor* const> params, double eps);

}  // namespace dssm::ad
