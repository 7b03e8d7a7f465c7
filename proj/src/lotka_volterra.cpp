#include "dssm/lotka_volterra.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

namespace dssm::data {

Vec2 lv_derivative(const Vec2& x, const LVParams& p) {
  const auto& a = p.alpha;
  return {a[0] * x[0] - a[1] * x[0] * x[1], -a[2] * x[1] + a[3] * x[0] * x[1]};
}

double lv_first_integral(const Vec2& x, const LVParams& p) {
  const auto& a = p.alpha;
  return a[3] * x[0] - a[2] * std::log(x[0]) + a[1] * x[1] - a[0] * std::log(x[1]);
}

namespace {

// Dormand-Prince coefficients, fifth-order solution weights.
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB[6] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84};

}  // namespace

std::vector<std::vector<double>> rk_integrate(const Derivative& deriv, std::span<const double> x0, double dt,
                                              std::size_t n_steps, RkScheme scheme) {
  if (!(dt > 0.0)) throw std::invalid_argument("rk_integrate: dt must be positive");
  if (n_steps < 1) throw std::invalid_argument("rk_integrate: n_steps must be at least 1");
  const std::size_t d = x0.size();
  std::vector<std::vector<double>> traj;
  traj.reserve(n_steps + 1);
  traj.emplace_back(x0.begin(), x0.end());

  const std::size_t stages = scheme == RkScheme::kClassic4 ? 4 : 6;
  std::vector<std::vector<double>> k(stages, std::vector<double>(d));
  std::vector<double> tmp(d);
  for (std::size_t step = 1; step <= n_steps; ++step) {
    const std::vector<double>& x = traj.back();
    std::vector<double> next(d);
    if (scheme == RkScheme::kClassic4) {
      deriv(x, k[0]);
      for (std::size_t j = 0; j < d; ++j) tmp[j] = x[j] + 0.5 * dt * k[0][j];
      deriv(tmp, k[1]);
      for (std::size_t j = 0; j < d; ++j) tmp[j] = x[j] + 0.5 * dt * k[1][j];
      deriv(tmp, k[2]);
      for (std::size_t j = 0; j < d; ++j) tmp[j] = x[j] + dt * k[2][j];
      deriv(tmp, k[3]);
      for (std::size_t j = 0; j < d; ++j) {
        next[j] = x[j] + dt / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
      }
    } else {
      for (std::size_t s = 0; s < stages; ++s) {
        for (std::size_t j = 0; j < d; ++j) {
          double acc = x[j];
          for (std::size_t r = 0; r < s; ++r) acc += dt * kA[s][r] * k[r][j];
          tmp[j] = acc;
        }
        deriv(tmp, k[s]);
      }
      for (std::size_t j = 0; j < d; ++j) {
        double acc = x[j];
        for (std::size_t s = 0; s < stages; ++s) acc += dt * kB[s] * k[s][j];
        next[j] = acc;
      }
    }
    for (double v : next) {
      if (!std::isfinite(v)) throw std::runtime_error("rk_integrate: non-finite state at step " + std::to_string(step));
    }
    traj.push_back(std::move(next));
  }
  return traj;
}

std::size_t LVProtocol::stride() const {
  const double interval = horizon / static_cast<double>(points);
  const auto s = static_cast<std::size_t>(std::llround(interval / dt));
  if (s == 0) throw std::invalid_argument("LVProtocol: sampling interval shorter than dt");
  return s;
}

std::vector<double> lv_trajectory(const LVParams& p, const LVProtocol& protocol, std::size_t points) {
  if (points == 0) throw std::invalid_argument("lv_trajectory: need at least one point");
  const std::size_t stride = protocol.stride();
  const Derivative f = [&p](std::span<const double> x, std::span<double> dx) {
    const Vec2 r = lv_derivative({x[0], x[1]}, p);
    dx[0] = r[0];
    dx[1] = r[1];
  };
  const double x0[] = {protocol.x0[0], protocol.x0[1]};
  const auto dense = rk_integrate(f, x0, protocol.dt, std::max<std::size_t>(1, (points - 1) * stride), protocol.scheme);
  std::vector<double> out;
  out.reserve(points * 2);
  for (std::size_t k = 0; k < points; ++k) {
    const auto& s = dense[k * stride];
    if (std::abs(s[0]) > protocol.blowup_limit || std::abs(s[1]) > protocol.blowup_limit) {
      throw std::runtime_error("lv_trajectory: state exceeds blow-up limit at point " + std::to_string(k));
    }
    out.push_back(s[0]);
    out.push_back(s[1]);
  }
  return out;
}

namespace {

bool near_benchmark(const LVParams& p, const LVProtocol& protocol) {
  double dist = 0.0;
  for (int j = 0; j < 4; ++j) dist = std::max(dist, std::abs(p.alpha[j] - protocol.benchmark.alpha[j]));
  return dist < protocol.benchmark_exclusion;
}

}  // namespace

SequenceDataset make_lv_dataset(std::size_t n, std::uint64_t seed, double noise_sigma, const LVProtocol& protocol,
                                std::size_t threads, LVGenerationStats* stats) {
  if (n < 1) throw std::invalid_argument("make_lv_dataset: n must be at least 1");
  if (noise_sigma < 0.0) throw std::invalid_argument("make_lv_dataset: negative noise");
  SequenceDataset ds;
  ds.n = n;
  ds.steps = protocol.points;
  ds.obs_dim = 2;
  ds.n_factors = 4;
  ds.likelihood = Likelihood::kGaussian;
  ds.observations.assign(n * ds.steps * 2, 0.0);
  ds.factors.assign(n * 4, 0.0);
  ds.splits.assign(n, Split::kTrain);
  std::vector<std::size_t> resampled(n, 0);

  auto generate = [&](std::size_t i) {
    Rng rng = derive_rng(seed, i);
    std::uniform_real_distribution<double> uniform(protocol.alpha_min, protocol.alpha_max);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
      LVParams p;
      for (auto& a : p.alpha) a = uniform(rng);
      if (near_benchmark(p, protocol)) {
        ++resampled[i];
        continue;
      }
      std::vector<double> traj;
      try {
        traj = lv_trajectory(p, protocol, protocol.points);
      } catch (const std::runtime_error&) {
        ++resampled[i];
        continue;
      }
      double* obs = ds.observations.data() + i * ds.steps * 2;
      for (std::size_t j = 0; j < traj.size(); ++j) obs[j] = traj[j] + noise_sigma * normal(rng);
      std::copy(p.alpha.begin(), p.alpha.end(), ds.factors.begin() + static_cast<std::ptrdiff_t>(i * 4));
      return;
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) generate(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += threads) generate(i);
      });
    }
  }
  if (stats != nullptr) {
    stats->resampled = 0;
    for (auto r : resampled) stats->resampled += r;
  }
  return ds;
}

LVBenchmark make_lv_benchmark(double noise_sigma, Rng& rng, const LVProtocol& protocol, std::size_t prefix_steps,
                              std::size_t horizon_steps) {
  if (noise_sigma < 0.0) throw std::invalid_argument("make_lv_benchmark: negative noise");
  LVBenchmark b;
  b.prefix_steps = prefix_steps;
  b.horizon_steps = horizon_steps;
  b.clean = lv_trajectory(protocol.benchmark, protocol, prefix_steps + horizon_steps);
  std::normal_distribution<double> normal(0.0, 1.0);
  b.prefix.assign(b.clean.begin(), b.clean.begin() + static_cast<std::ptrdiff_t>(prefix_steps * 2));
  for (double& v : b.prefix) v += noise_sigma * normal(rng);
  b.truth.assign(b.clean.begin() + static_cast<std::ptrdiff_t>(prefix_steps * 2), b.clean.end());
  return b;
}

}  // namespace dssm::data
