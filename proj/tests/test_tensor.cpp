#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dssm/tensor.hpp"
#include "test_util.hpp"

namespace ad = dssm::ad;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using dssm::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kEps = 1e-5;

Tensor vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), std::invalid_argument);
  const Tensor t({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(ad::numel(t.shape), 6u);
}

TEST(Primitives, SigmoidAtZero) {
  Tape tape;
  EXPECT_DOUBLE_EQ(ad::sigmoid(tape.constant(vec({0.0}))).item(), 0.5);
}

TEST(Primitives, MatmulOfOnes) {
  Tape tape;
  const Var y = ad::matmul(tape.constant(Tensor::full({2, 3}, 1.0)), tape.constant(Tensor::full({3, 1}, 1.0)));
  ASSERT_EQ(y.shape(), (ad::Shape{2, 1}));
  EXPECT_DOUBLE_EQ(y.value().data[0], 3.0);
  EXPECT_DOUBLE_EQ(y.value().data[1], 3.0);
}

TEST(Primitives, ExpLogRoundTrip) {
  Tape tape;
  EXPECT_NEAR(ad::exp(ad::log(tape.constant(vec({2.5})))).item(), 2.5, 1e-15);
}

TEST(Primitives, ShapeErrorNamesPrimitiveAndShapes) {
  Tape tape;
  const Var a = tape.constant(Tensor::zeros({2, 3}));
  const Var b = tape.constant(Tensor::zeros({2, 3}));
  try {
    ad::matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
  EXPECT_THROW(ad::add(a, tape.constant(Tensor::zeros({3, 2}))), std::invalid_argument);
}

TEST(Primitives, LogDomainPolicy) {
  Tape strict;
  EXPECT_THROW(ad::log(strict.constant(vec({0.0}))), std::domain_error);
  EXPECT_THROW(ad::log(strict.constant(vec({-1.0}))), std::domain_error);
  Tape lenient(ad::DomainPolicy::kPropagate);
  EXPECT_FALSE(std::isfinite(ad::log(lenient.constant(vec({0.0}))).item()));
  EXPECT_TRUE(std::isnan(ad::log(lenient.constant(vec({-1.0}))).item()));
}

TEST(Primitives, ConcatSliceAndReductions) {
  Tape tape;
  const Var a = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  const Var b = tape.constant(Tensor({1, 2}, {5, 6}));
  const Var parts[] = {a, b};
  const Var c = ad::concat(parts, 0);
  EXPECT_EQ(c.shape(), (ad::Shape{3, 2}));
  EXPECT_EQ(c.value().data, (std::vector<double>{1, 2, 3, 4, 5, 6}));
  const Var s = ad::slice(c, 1, 1, 2);
  EXPECT_EQ(s.shape(), (ad::Shape{3, 1}));
  EXPECT_EQ(s.value().data, (std::vector<double>{2, 4, 6}));
  EXPECT_EQ(ad::sum(c, 0).value().data, (std::vector<double>{9, 12}));
  EXPECT_EQ(ad::mean(c, 1).value().data, (std::vector<double>{1.5, 3.5, 5.5}));
  EXPECT_DOUBLE_EQ(ad::sum(c).item(), 21.0);
  EXPECT_THROW(ad::slice(c, 0, 2, 4), std::invalid_argument);
}

TEST(Primitives, AddBiasBroadcastsOverColumns) {
  Tape tape;
  const Var x = tape.constant(Tensor({2, 3}, {0, 0, 0, 1, 1, 1}));
  const Var y = ad::add_bias(x, tape.constant(vec({10, 20})));
  EXPECT_EQ(y.value().data, (std::vector<double>{10, 10, 10, 21, 21, 21}));
  EXPECT_THROW(ad::add_bias(x, tape.constant(vec({1, 2, 3}))), std::invalid_argument);
}

TEST(Backward, SumOfSquares) {
  Tensor x = vec({1, 2, 3});
  Tape tape;
  tape.backward(ad::sum(ad::square(tape.leaf(x))));
  EXPECT_EQ(x.grad, (std::vector<double>{2, 4, 6}));
}

TEST(Backward, SigmoidSlopeAtZero) {
  Tensor w = vec({0.0});
  Tape tape;
  tape.backward(ad::sigmoid(tape.leaf(w)));
  EXPECT_DOUBLE_EQ(w.grad[0], 0.25);
}

TEST(Backward, MeanTanhMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  Tensor w = random_tensor({4, 4}, rng);
  Tensor x = random_tensor({4, 1}, rng);
  Tensor* params[] = {&w, &x};
  const double err = ad::grad_check(
      [&](Tape& t) { return ad::mean(ad::tanh(ad::matmul(t.leaf(w), t.leaf(x)))); }, params, kEps);
  EXPECT_LE(err, kGradTol);
}

TEST(Backward, RejectsNonScalarAndReuse) {
  Tensor x = vec({1, 2});
  Tape tape;
  const Var v = tape.leaf(x);
  EXPECT_THROW(tape.backward(ad::square(v)), std::invalid_argument);
  const Var loss = ad::sum(ad::square(v));
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), std::logic_error);
  EXPECT_FALSE(loss.valid());
}

TEST(Backward, AccumulatesAcrossUses) {
  Tensor x = vec({0.7, -1.3});
  Tape tape;
  const Var v = tape.leaf(x);
  tape.backward(ad::sum(v * v + ad::tanh(v) + v));
  for (std::size_t i = 0; i < 2; ++i) {
    const double t = std::tanh(x.data[i]);
    EXPECT_NEAR(x.grad[i], 2 * x.data[i] + (1 - t * t) + 1, 1e-12);
  }
}

TEST(Backward, LinearInLoss) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor w = random_tensor({3, 3}, rng);
    Tensor x = random_tensor({3, 2}, rng);
    std::uniform_real_distribution<double> u(-3, 3);
    const double a = u(rng);
    const double b = u(rng);
    auto l1 = [&](const Var& wv) { return ad::sum(ad::sigmoid(ad::matmul(wv, wv.tape().constant(x)))); };
    auto l2 = [&](const Var& wv) { return ad::mean(ad::square(ad::tanh(wv))); };
    auto grad_of = [&](auto&& f) {
      Tensor copy = w;
      Tape t;
      t.backward(f(t.leaf(copy)));
      return copy.grad;
    };
    const auto g1 = grad_of(l1);
    const auto g2 = grad_of(l2);
    const auto g = grad_of([&](const Var& wv) { return ad::scale(l1(wv), a) + ad::scale(l2(wv), b); });
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], a * g1[i] + b * g2[i], 1e-12);
  }
}

TEST(Backward, Deterministic) {
  std::mt19937_64 rng(5);
  const Tensor w0 = random_tensor({5, 5}, rng);
  const Tensor x0 = random_tensor({5, 3}, rng);
  auto run = [&] {
    Tensor w = w0;
    Tape t;
    const Var y = ad::sum(ad::relu(ad::matmul(t.leaf(w), t.constant(x0))));
    const double v = y.item();
    t.backward(y);
    return std::make_pair(v, w.grad);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(GradCheck, SumWithinRounding) {
  std::mt19937_64 rng(1);
  EXPECT_LE(ad::grad_check([](Tape&, const Var& x) { return ad::sum(x); }, random_tensor({3, 2}, rng), kEps), 1e-9);
}

TEST(GradCheck, SquareNearExact) {
  EXPECT_LE(ad::grad_check([](Tape&, const Var& x) { return ad::sum(ad::square(x)); }, vec({1, 2}), kEps), 1e-8);
}

TEST(GradCheck, RejectsNonScalar) {
  EXPECT_THROW(ad::grad_check([](Tape&, const Var& x) { return ad::square(x); }, vec({1, 2}), kEps),
               std::invalid_argument);
  EXPECT_THROW(ad::grad_check([](Tape&, const Var& x) { return ad::sum(x); }, vec({1}), 0.0), std::invalid_argument);
}

// Every primitive against central differences, with inputs in [-2, 2]
// (shifted to [0.5, 2] for log). Each output is contracted with a fixed
// random weighting so no gradient component is trivially uniform.
class PrimitiveGradient : public ::testing::TestWithParam<ad::Primitive> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  const ad::Primitive op = GetParam();
  std::mt19937_64 rng(100 + static_cast<int>(op));
  for (int trial = 0; trial < 5; ++trial) {
    const bool positive = op == ad::Primitive::kLog;
    Tensor a = random_tensor({3, 4}, rng, positive ? 0.5 : -2.0, 2.0);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor m = random_tensor({4, 2}, rng);
    Tensor c = random_tensor({2, 4}, rng);
    Tensor bias = random_tensor({3}, rng);
    // Keep relu inputs away from the kink.
    if (op == ad::Primitive::kRelu) {
      for (double& v : a.data) v = std::abs(v) < 0.05 ? 0.3 : v;
    }
    auto body = [&](Tape& t) -> Var {
      const Var va = t.leaf(a);
      switch (op) {
        case ad::Primitive::kMatMul: return ad::matmul(va, t.leaf(m));
        case ad::Primitive::kAdd: return ad::add(va, t.leaf(b));
        case ad::Primitive::kSubtract: return ad::subtract(va, t.leaf(b));
        case ad::Primitive::kMultiply: return ad::multiply(va, t.leaf(b));
        case ad::Primitive::kConcat: {
          const Var parts[] = {va, t.leaf(c)};
          return ad::concat(parts, 0);
        }
        case ad::Primitive::kSlice: return ad::slice(va, 1, 1, 3);
        case ad::Primitive::kSigmoid: return ad::sigmoid(va);
        case ad::Primitive::kTanh: return ad::tanh(va);
        case ad::Primitive::kRelu: return ad::relu(va);
        case ad::Primitive::kExp: return ad::exp(va);
        case ad::Primitive::kLog: return ad::log(va);
        case ad::Primitive::kSquare: return ad::square(va);
        case ad::Primitive::kSum: return ad::sum(va, 1);
        case ad::Primitive::kMean: return ad::mean(va, 0);
        case ad::Primitive::kAddBias: return ad::add_bias(va, t.leaf(bias));
        default: throw std::logic_error("unexpected primitive");
      }
    };
    std::vector<double> weights;
    auto f = [&](Tape& t) {
      const Var y = body(t);
      if (weights.size() != y.size()) {
        std::mt19937_64 wr(7);
        weights = random_tensor({y.size()}, wr).data;
      }
      Tensor w(y.shape(), weights);
      return ad::sum(y * t.constant(std::move(w)));
    };
    Tensor* params[] = {&a, &b, &m, &c, &bias};
    const double err = ad::grad_check(f, params, kEps);
    EXPECT_LE(err, kGradTol) << ad::primitive_name(op) << " trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(
    All, PrimitiveGradient,
    ::testing::Values(ad::Primitive::kMatMul, ad::Primitive::kAdd, ad::Primitive::kSubtract,
                      ad::Primitive::kMultiply, ad::Primitive::kConcat, ad::Primitive::kSlice,
                      ad::Primitive::kSigmoid, ad::Primitive::kTanh, ad::Primitive::kRelu, ad::Primitive::kExp,
                      ad::Primitive::kLog, ad::Primitive::kSquare, ad::Primitive::kSum, ad::Primitive::kMean,
                      ad::Primitive::kAddBias),
    [](const auto& info) { return std::string(ad::primitive_name(info.param)); });

TEST(Composites, SoftplusIsStableAndCorrect) {
  Tape tape;
  const Var y = ad::softplus(tape.constant(vec({-800.0, -1.0, 0.0, 2.0, 800.0})));
  const auto& v = y.value().data;
  EXPECT_NEAR(v[0], 0.0, 1e-300);
  EXPECT_NEAR(v[1], std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(v[2], std::log(2.0), 1e-15);
  EXPECT_NEAR(v[3], std::log1p(std::exp(2.0)), 1e-14);
  EXPECT_DOUBLE_EQ(v[4], 800.0);
  std::mt19937_64 rng(9);
  Tensor x = random_tensor({6}, rng, -3.0, 3.0);
  EXPECT_LE(ad::grad_check([](Tape&, const Var& v) { return ad::sum(ad::softplus(v)); }, x, kEps), kGradTol);
}
