#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "dssm/bouncing_ball.hpp"
#include "dssm/dataset.hpp"
#include "dssm/lotka_volterra.hpp"

namespace data = dssm::data;
using data::BallState;
using data::LVParams;

namespace {

const LVParams kBench{{2.0, 1.0, 4.0, 1.0}};

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

// ---- Lotka-Volterra --------------------------------------------------------------

TEST(LotkaVolterra, DerivativeHandValues) {
  EXPECT_EQ(data::lv_derivative({4, 2}, kBench), (data::Vec2{0, 0}));
  EXPECT_EQ(data::lv_derivative({5, 3}, kBench), (data::Vec2{-5, 3}));
  EXPECT_EQ(data::lv_derivative({0, 0}, kBench), (data::Vec2{0, 0}));
}

TEST(LotkaVolterra, DerivativeSigns) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> a(0.5, 4.5);
  std::uniform_real_distribution<double> x(0.01, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const LVParams p{{a(rng), a(rng), a(rng), a(rng)}};
    EXPECT_GT(data::lv_derivative({x(rng), 0.0}, p)[0], 0.0);
    EXPECT_LT(data::lv_derivative({0.0, x(rng)}, p)[1], 0.0);
  }
}

TEST(RungeKutta, ZeroDerivativeIsConstant) {
  const double x0[] = {1.5, -2.0};
  const auto traj = data::rk_integrate([](auto, std::span<double> dx) { dx[0] = dx[1] = 0.0; }, x0, 0.1, 10);
  ASSERT_EQ(traj.size(), 11u);
  for (const auto& s : traj) EXPECT_EQ(s, (std::vector<double>{1.5, -2.0}));
}

TEST(RungeKutta, OneClassicalStepOfExponential) {
  const double x0[] = {1.0};
  const auto traj = data::rk_integrate([](std::span<const double> x, std::span<double> dx) { dx[0] = x[0]; }, x0,
                                       0.1, 1);
  // 1 + h + h^2/2 + h^3/6 + h^4/24 at h = 0.1
  EXPECT_NEAR(traj[1][0], 1.10517083333333, 1e-13);
  EXPECT_NEAR(traj[1][0], std::exp(0.1), 1e-7);
}

TEST(RungeKutta, DormandPrinceIsFifthOrder) {
  const double x0[] = {1.0};
  auto err = [&](double h) {
    const auto n = static_cast<std::size_t>(std::llround(1.0 / h));
    const auto traj = data::rk_integrate([](std::span<const double> x, std::span<double> dx) { dx[0] = x[0]; }, x0,
                                         h, n, data::RkScheme::kDormandPrince5);
    return std::abs(traj.back()[0] - std::exp(1.0));
  };
  const double ratio = err(0.1) / err(0.05);
  EXPECT_GT(ratio, 24.0);
  EXPECT_LT(ratio, 40.0);
}

TEST(RungeKutta, NonFiniteStateNamesStep) {
  const double x0[] = {1.0};
  try {
    data::rk_integrate([](std::span<const double> x, std::span<double> dx) { dx[0] = x[0] * x[0] * 1e200; }, x0,
                       0.1, 50);
    FAIL() << "expected blow-up";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
  EXPECT_THROW(data::rk_integrate([](auto, auto) {}, x0, 0.0, 1), std::invalid_argument);
}

TEST(LotkaVolterra, FirstIntegralConservedOverBenchmarkWindow) {
  for (auto scheme : {data::RkScheme::kClassic4, data::RkScheme::kDormandPrince5}) {
    const double x0[] = {5.0, 3.0};
    const data::Derivative f = [](std::span<const double> x, std::span<double> dx) {
      const auto r = data::lv_derivative({x[0], x[1]}, kBench);
      dx[0] = r[0];
      dx[1] = r[1];
    };
    // 50 time units at dt = 0.01.
    const auto traj = data::rk_integrate(f, x0, 0.01, 5000, scheme);
    const double v0 = data::lv_first_integral({5, 3}, kBench);
    double drift = 0.0;
    for (const auto& s : traj) drift = std::max(drift, std::abs(data::lv_first_integral({s[0], s[1]}, kBench) - v0));
    EXPECT_LT(drift, 1e-6);
  }
}

TEST(LotkaVolterra, ProtocolSampling) {
  const data::LVProtocol p;
  EXPECT_EQ(p.stride(), 20u);
  const auto traj = data::lv_trajectory(kBench, p, 200);
  ASSERT_EQ(traj.size(), 400u);
  EXPECT_EQ(traj[0], 5.0);
  EXPECT_EQ(traj[1], 3.0);
}

TEST(LotkaVolterra, DatasetShapeAndDeterminism) {
  const auto a = data::make_lv_dataset(30, 7, 0.5);
  EXPECT_NO_THROW(a.validate());
  EXPECT_EQ(a.n, 30u);
  EXPECT_EQ(a.steps, 50u);
  EXPECT_EQ(a.obs_dim, 2u);
  EXPECT_EQ(a.n_factors, 4u);
  EXPECT_TRUE(a == data::make_lv_dataset(30, 7, 0.5));
  EXPECT_TRUE(a == data::make_lv_dataset(30, 7, 0.5, {}, 4));
  EXPECT_FALSE(a == data::make_lv_dataset(30, 8, 0.5));
  for (double v : a.factors) {
    EXPECT_GE(v, 0.5);
    EXPECT_LE(v, 4.5);
  }
  EXPECT_EQ(a.indices(data::Split::kTrain).size(), 30u);
}

TEST(LotkaVolterra, NoiselessDatasetLiesOnTrajectory) {
  const auto ds = data::make_lv_dataset(3, 11, 0.0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const auto f = ds.factor_row(i);
    const LVParams p{{f[0], f[1], f[2], f[3]}};
    const auto traj = data::lv_trajectory(p, {}, 50);
    const auto seq = ds.sequence(i);
    for (std::size_t k = 0; k < traj.size(); ++k) EXPECT_EQ(seq[k], traj[k]);
  }
}

TEST(LotkaVolterra, FactorMarginalsAreUniform) {
  data::LVProtocol p;
  p.points = 2;  // factors are all that is needed here
  p.horizon = 0.4;
  const auto ds = data::make_lv_dataset(10000, 3, 0.0, p);
  for (int k = 0; k < 4; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < ds.n; ++i) s += ds.factor_row(i)[k];
    EXPECT_NEAR(s / 10000.0, 2.5, 0.05) << k;
  }
}

TEST(LotkaVolterra, BlowUpIsResampled) {
  data::LVProtocol p;
  p.blowup_limit = 8.0;
  data::LVGenerationStats stats;
  const auto ds = data::make_lv_dataset(40, 5, 0.0, p, 1, &stats);
  EXPECT_GT(stats.resampled, 0u);
  for (double v : ds.observations) EXPECT_LE(std::abs(v), 8.0);
}

TEST(LotkaVolterra, Benchmark) {
  dssm::Rng rng(4);
  const auto clean = data::make_lv_benchmark(0.0, rng);
  ASSERT_EQ(clean.prefix.size(), 100u);
  ASSERT_EQ(clean.truth.size(), 300u);
  EXPECT_EQ(clean.prefix[0], 5.0);
  EXPECT_EQ(clean.prefix[1], 3.0);
  for (std::size_t k = 0; k < 100; ++k) EXPECT_EQ(clean.prefix[k], clean.clean[k]);

  const auto noisy = data::make_lv_benchmark(0.1, rng);
  EXPECT_NEAR(noisy.prefix[0], 5.0, 0.6);
  EXPECT_NE(noisy.prefix[0], 5.0);
  EXPECT_EQ(noisy.truth, clean.truth);

  double closest = 1e9;
  for (std::size_t k = 10; k < 200; ++k) {
    closest = std::min(closest, std::hypot(clean.clean[2 * k] - 5.0, clean.clean[2 * k + 1] - 3.0));
  }
  EXPECT_LT(closest, 0.05);
}

// ---- bouncing ball -----------------------------------------------------------------

TEST(Ball, RestingStateUnchanged) {
  BallState s;
  s.position = {0.4, 0.6};
  const auto n = data::ball_step(s, 1.0);
  EXPECT_EQ(n.position, s.position);
  EXPECT_EQ(n.velocity, s.velocity);
}

TEST(Ball, ReflectsOffFloor) {
  BallState s;
  s.position = {0.5, s.radius};
  s.velocity = {0.0, -0.03};
  const auto n = data::ball_step(s, 1.0);
  EXPECT_DOUBLE_EQ(n.velocity[1], 0.03);
  EXPECT_GE(n.position[1], s.radius);
}

TEST(Ball, EnergyAwayFromWalls) {
  BallState s;
  s.radius = 0.01;
  s.position = {0.5, 0.9};
  s.velocity = {0.02, 0.1};
  const double g = data::BallProtocol{}.gravity_magnitude();
  s.gravity = {0.0, -g};
  const double dt = 0.1;
  auto energy = [g](const BallState& b) {
    return b.velocity[0] * b.velocity[0] + b.velocity[1] * b.velocity[1] + 2.0 * g * b.position[1];
  };
  for (int i = 0; i < 5; ++i) {
    const auto n = data::ball_step(s, dt);
    ASSERT_GT(n.position[1], n.radius);
    EXPECT_LT(std::abs(energy(n) - energy(s)), 1e-3);
    // Velocity-first Euler loses exactly (g dt)^2 per free-flight step.
    EXPECT_NEAR(energy(s) - energy(n), g * g * dt * dt, 1e-15);
    s = n;
  }
}

TEST(Ball, StaysInsideBox) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const data::BallProtocol proto;
  const double r = proto.radius();
  for (int run = 0; run < 100; ++run) {
    BallState s;
    s.radius = r;
    s.position = {r + (1 - 2 * r) * u(rng), r + (1 - 2 * r) * u(rng)};
    s.velocity = {0.2 * (u(rng) - 0.5), 0.2 * (u(rng) - 0.5)};
    const double angle = 2 * M_PI * u(rng);
    s.gravity = {0.01 * std::cos(angle), 0.01 * std::sin(angle)};
    for (int i = 0; i < 100; ++i) {
      s = data::ball_step(s, 1.0);
      for (int a = 0; a < 2; ++a) {
        ASSERT_GE(s.position[a], r);
        ASSERT_LE(s.position[a], 1 - r);
      }
    }
  }
}

TEST(Ball, RenderCenteredBlob) {
  BallState s;
  s.radius = 2.0 / 16.0;
  s.position = {0.5 + 0.5 / 16, 0.5 + 0.5 / 16};
  const auto f = data::render_frame(s, 16);
  const auto px = data::to_pixel(s.position, 16);
  const auto row = static_cast<std::size_t>(std::lround(px[1]));
  const auto col = static_cast<std::size_t>(std::lround(px[0]));
  EXPECT_EQ(f[row * 16 + col], 1.0);
  const auto d = data::detect_ball_position(f, 16);
  ASSERT_TRUE(d.has_value());
  EXPECT_NEAR((*d)[0], px[0], 1e-12);
  EXPECT_NEAR((*d)[1], px[1], 1e-12);
  EXPECT_THROW(data::render_frame(s, 4), std::invalid_argument);
}

TEST(Ball, CornerTouchesTwoBorders) {
  BallState s;
  s.radius = 2.0 / 16.0;
  s.position = {s.radius, s.radius};
  const auto f = data::render_frame(s, 16);
  bool left = false;
  bool bottom = false;
  for (std::size_t r = 0; r < 16; ++r) left = left || f[r * 16] > 0;
  for (std::size_t c = 0; c < 16; ++c) bottom = bottom || f[15 * 16 + c] > 0;
  EXPECT_TRUE(left);
  EXPECT_TRUE(bottom);
}

TEST(Ball, LitAreaStableAlongRollouts) {
  const auto ds = data::make_ball_dataset(4, 5, 3);
  for (std::size_t i = 0; i < ds.n; ++i) {
    std::size_t lo = 1000;
    std::size_t hi = 0;
    for (std::size_t t = 0; t < ds.steps; ++t) {
      const auto f = ds.frame(i, t);
      const auto lit = static_cast<std::size_t>(std::count(f.begin(), f.end(), 1.0));
      lo = std::min(lo, lit);
      hi = std::max(hi, lit);
    }
    EXPECT_LE(hi - lo, 1u) << "sequence " << i;
  }
}

TEST(Detector, SinglePixelAndBlock) {
  std::vector<double> f(256, 0.0);
  f[5 * 16 + 10] = 1.0;
  auto d = data::detect_ball_position(f, 16);
  ASSERT_TRUE(d);
  EXPECT_EQ((*d)[0], 10.0);
  EXPECT_EQ((*d)[1], 5.0);

  std::fill(f.begin(), f.end(), 0.0);
  for (std::size_t r : {4, 5}) {
    for (std::size_t c : {7, 8}) f[r * 16 + c] = 1.0;
  }
  d = data::detect_ball_position(f, 16);
  ASSERT_TRUE(d);
  EXPECT_EQ((*d)[0], 7.5);
  EXPECT_EQ((*d)[1], 4.5);
}

TEST(Detector, EmptyAndTies) {
  std::vector<double> f(256, 0.2);
  EXPECT_FALSE(data::detect_ball_position(f, 16).has_value());
  std::fill(f.begin(), f.end(), 0.0);
  f[10 * 16 + 2] = 1.0;  // later in row-major order
  f[1 * 16 + 12] = 1.0;
  const auto d = data::detect_ball_position(f, 16);
  ASSERT_TRUE(d);
  EXPECT_EQ((*d)[0], 12.0);
  EXPECT_EQ((*d)[1], 1.0);
  // Largest component wins over an earlier smaller one.
  f[10 * 16 + 3] = 1.0;
  EXPECT_EQ((*data::detect_ball_position(f, 16))[1], 10.0);
  // Diagonal neighbours are not connected.
  std::fill(f.begin(), f.end(), 0.0);
  f[3 * 16 + 3] = f[4 * 16 + 4] = 1.0;
  EXPECT_EQ((*data::detect_ball_position(f, 16))[0], 3.0);
}

TEST(Detector, RenderRoundTrip) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t res : {16u, 32u}) {
    const double r = 2.0 / static_cast<double>(res) * (res == 32 ? 2.0 : 1.0);
    for (int i = 0; i < 100; ++i) {
      BallState s;
      s.radius = r;
      s.position = {r + (1 - 2 * r) * u(rng), r + (1 - 2 * r) * u(rng)};
      const auto d = data::detect_ball_position(data::render_frame(s, res), res);
      ASSERT_TRUE(d);
      const auto px = data::to_pixel(s.position, res);
      EXPECT_LE(std::hypot((*d)[0] - px[0], (*d)[1] - px[1]), 1.0);
    }
  }
}

TEST(BallDataset, HoldoutAndFactors) {
  data::BallHoldout h;
  const auto ds = data::make_ball_dataset(16, 10, 5, {}, 1, &h);
  EXPECT_NO_THROW(ds.validate());
  EXPECT_EQ(ds.n, 160u);
  EXPECT_EQ(ds.obs_dim, 256u);
  EXPECT_EQ(ds.steps, 70u);
  EXPECT_EQ(ds.indices(data::Split::kVal).size(), 10u);
  EXPECT_EQ(ds.indices(data::Split::kTest).size(), 10u);
  EXPECT_NE(h.val_direction, h.test_direction);
  const auto mains = data::main_directions(16);
  EXPECT_EQ(mains, (std::array<std::size_t, 4>{2, 6, 10, 14}));
  for (auto m : mains) {
    EXPECT_NE(h.val_direction, m);
    EXPECT_NE(h.test_direction, m);
  }
  const std::size_t gap = (h.val_direction + 16 - h.test_direction) % 16;
  EXPECT_TRUE(gap != 1 && gap != 15);

  const double g = data::BallProtocol{}.gravity_magnitude();
  for (std::size_t i = 0; i < ds.n; ++i) {
    const auto f = ds.factor_row(i);
    EXPECT_NEAR(std::hypot(f[0], f[1]), g, 1e-15);
    const std::size_t dir = i / 10;
    EXPECT_EQ(data::direction_of(f, 16), dir);
    const auto first = ds.factor_row(dir * 10);
    EXPECT_EQ(f[0], first[0]);
    EXPECT_EQ(f[1], first[1]);
    const auto split = ds.splits[i];
    if (dir == h.val_direction) EXPECT_EQ(split, data::Split::kVal);
    else if (dir == h.test_direction) EXPECT_EQ(split, data::Split::kTest);
    else EXPECT_EQ(split, data::Split::kTrain);
  }
}

TEST(BallDataset, DeskScaleCountsAndDeterminism) {
  data::BallProtocol p;
  p.steps = 2;
  const auto ds = data::make_ball_dataset(16, 200, 1, p);
  EXPECT_EQ(ds.n, 3200u);
  EXPECT_EQ(ds.indices(data::Split::kVal).size() + ds.indices(data::Split::kTest).size(), 400u);
  EXPECT_TRUE(ds == data::make_ball_dataset(16, 200, 1, p, 3));
}

TEST(BallDataset, GravityCrossesBoxInConfiguredFrames) {
  const data::BallProtocol p;
  BallState s;
  s.radius = p.radius();
  s.position = {0.5, 1 - s.radius};
  s.gravity = {0.0, -p.gravity_magnitude()};
  int frames = 0;
  while (s.velocity[1] <= 0.0 && frames < 100) {
    s = data::ball_step(s, p.dt);
    ++frames;
  }
  EXPECT_NEAR(frames, p.crossing_frames, 2.0);
}

// ---- dataset files ----------------------------------------------------------------------

TEST(DatasetFile, RoundTripGaussianAndBernoulli) {
  const auto lv = data::make_lv_dataset(5, 1, 0.5);
  const auto ball = data::make_ball_dataset(3, 2, 1);
  for (const auto* ds : {&lv, &ball}) {
    const auto path = temp_file("dssm_roundtrip.dsq");
    data::write_dsq(path, *ds);
    EXPECT_TRUE(data::read_dsq(path) == *ds);
    const auto bytes = slurp(path);
    data::write_dsq(path, *ds);
    EXPECT_EQ(slurp(path), bytes);
    std::filesystem::remove(path);
  }
}

TEST(DatasetFile, BernoulliIsBitPacked) {
  const auto ball = data::make_ball_dataset(3, 2, 1);
  const auto path = temp_file("dssm_packed.dsq");
  data::write_dsq(path, ball);
  const auto size = std::filesystem::file_size(path);
  EXPECT_LT(size, ball.observations.size() / 8 + 1024);
  std::filesystem::remove(path);
}

TEST(DatasetFile, RejectsBadInput) {
  const auto path = temp_file("dssm_bad.dsq");
  {
    std::ofstream out(path, std::ios::binary);
    out << "DSQ2xxxxxxxxxxxxxxxxxxxxxxxx";
  }
  EXPECT_THROW(data::read_dsq(path), std::runtime_error);
  auto lv = data::make_lv_dataset(2, 1, 0.5);
  data::write_dsq(path, lv);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(data::read_dsq(path), std::runtime_error);
  std::filesystem::remove(path);

  lv.observations[3] = std::nan("");
  EXPECT_THROW(lv.validate(), std::invalid_argument);
  auto ball = data::make_ball_dataset(3, 1, 1);
  ball.observations[0] = 0.5;
  EXPECT_THROW(ball.validate(), std::invalid_argument);
}

TEST(DatasetFile, BatchLayout) {
  const auto lv = data::make_lv_dataset(4, 2, 0.5);
  const std::size_t idx[] = {2, 0};
  const auto batch = data::make_batch(lv, idx, 3, 6);
  ASSERT_EQ(batch.size(), 3u);
  EXPECT_EQ(batch[0].shape, (dssm::ad::Shape{2, 2}));
  EXPECT_EQ(batch[1].at(1, 0), lv.frame(2, 4)[1]);
  EXPECT_EQ(batch[2].at(0, 1), lv.frame(0, 5)[0]);
  EXPECT_THROW(data::make_batch(lv, idx, 3, 60), std::invalid_argument);
}
