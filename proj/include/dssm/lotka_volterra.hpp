#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dssm/dataset.hpp"
#include "dssm/rng.hpp"

namespace dssm::data {

using Vec2 = std::array<double, 2>;

struct LVParams {
  std::array<double, 4> alpha{};
};

// Predator-prey rates: [a1 x1 - a2 x1 x2, -a3 x2 + a4 x1 x2].
Vec2 lv_derivative(const Vec2& x, const LVParams& p);

// a4 x1 - a3 ln x1 + a2 x2 - a1 ln x2; constant along exact orbits.
double lv_first_integral(const Vec2& x, const LVParams& p);

enum class RkScheme { kClassic4, kDormandPrince5 };

using Derivative = std::function<void(std::span<const double> x, std::span<double> dxdt)>;

// Fixed-step integration; returns n_steps + 1 states (x0 first), each of
// x0.size() values. Throws std::runtime_error naming the step on a
// non-finite state.
std::vector<std::vector<double>> rk_integrate(const Derivative& deriv, std::span<const double> x0, double dt,
                                              std::size_t n_steps, RkScheme scheme = RkScheme::kClassic4);

struct LVProtocol {
  double dt = 0.01;
  std::size_t points = 50;
  // Time covered by `points` observations; sets the sampling interval.
  double horizon = 10.0;
  Vec2 x0{5.0, 3.0};
  double alpha_min = 0.5;
  double alpha_max = 4.5;
  LVParams benchmark{{2.0, 1.0, 4.0, 1.0}};
  double benchmark_exclusion = 1e-6;
  // States above this magnitude count as a blow-up and the draw is resampled.
  double blowup_limit = 1e4;
  RkScheme scheme = RkScheme::kClassic4;

  std::size_t stride() const;
};

// Noise-free trajectory sampled every protocol.stride() integration steps.
// Returns points x 2 row-major.
std::vector<double> lv_trajectory(const LVParams& p, const LVProtocol& protocol, std::size_t points);

struct LVGenerationStats {
  std::size_t resampled = 0;
};

// n sequences, factors K = 4 (alpha), all tagged train. Each sequence draws
// from derive_rng(seed, i), so any thread count gives identical output.
SequenceDataset make_lv_dataset(std::size_t n, std::uint64_t seed, double noise_sigma,
                                const LVProtocol& protocol = {}, std::size_t threads = 1,
                                LVGenerationStats* stats = nullptr);

struct LVBenchmark {
  std::size_t prefix_steps = 50;
  std::size_t horizon_steps = 150;
  std::vector<double> prefix;  // noisy, prefix_steps x 2
  std::vector<double> truth;   // noise-free continuation, horizon_steps x 2
  std::vector<double> clean;   // noise-free full window, (prefix + horizon) x 2
};

LVBenchmark make_lv_benchmark(double noise_sigma, Rng& rng, const LVProtocol& protocol = {},
                              std::size_t prefix_steps = 50, std::size_t horizon_steps = 150);

}  // namespace dssm::data
