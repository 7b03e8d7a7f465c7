#include "dssm/bouncing_ball.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace dssm::data {

BallState ball_step(const BallState& state, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("ball_step: dt must be positive");
  BallState next = state;
  const double lo = state.radius;
  const double hi = 1.0 - state.radius;
  for (int a = 0; a < 2; ++a) {
    double v = state.velocity[a] + state.gravity[a] * dt;
    double p = state.position[a] + v * dt;
    if (p < lo) {
      p = 2.0 * lo - p;
      v = -v;
    } else if (p > hi) {
      p = 2.0 * hi - p;
      v = -v;
    }
    next.position[a] = std::clamp(p, lo, hi);
    next.velocity[a] = v;
  }
  return next;
}

std::array<double, 2> to_pixel(const std::array<double, 2>& position, std::size_t resolution) {
  const double res = static_cast<double>(resolution);
  return {position[0] * res - 0.5, (1.0 - position[1]) * res - 0.5};
}

std::vector<double> render_frame(const BallState& state, std::size_t resolution) {
  if (resolution < 8) throw std::invalid_argument("render_frame: resolution must be at least 8");
  const double res = static_cast<double>(resolution);
  const double r_px = state.radius * res;
  const auto reach = static_cast<long>(std::floor(r_px));
  const long hi = static_cast<long>(resolution) - 1 - reach;
  if (hi < reach) throw std::invalid_argument("render_frame: ball larger than the frame");
  const auto [px, py] = to_pixel(state.position, resolution);
  const long c0 = std::clamp(std::lround(px), reach, hi);
  const long r0 = std::clamp(std::lround(py), reach, hi);
  std::vector<double> frame(resolution * resolution, 0.0);
  for (long dr = -reach; dr <= reach; ++dr) {
    for (long dc = -reach; dc <= reach; ++dc) {
      if (static_cast<double>(dr * dr + dc * dc) <= r_px * r_px) {
        frame[static_cast<std::size_t>((r0 + dr) * static_cast<long>(resolution) + c0 + dc)] = 1.0;
      }
    }
  }
  return frame;
}

std::optional<std::array<double, 2>> detect_ball_position(std::span<const double> frame, std::size_t resolution,
                                                          double threshold) {
  if (frame.size() != resolution * resolution) throw std::invalid_argument("detect_ball_position: frame size");
  std::vector<char> seen(frame.size(), 0);
  std::vector<std::size_t> stack;
  std::size_t best_count = 0;
  double best_col = 0.0;
  double best_row = 0.0;
  for (std::size_t start = 0; start < frame.size(); ++start) {
    if (seen[start] || frame[start] < threshold) continue;
    std::size_t count = 0;
    double sum_col = 0.0;
    double sum_row = 0.0;
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      const std::size_t row = idx / resolution;
      const std::size_t col = idx % resolution;
      ++count;
      sum_col += static_cast<double>(col);
      sum_row += static_cast<double>(row);
      auto visit = [&](std::size_t r, std::size_t c) {
        const std::size_t j = r * resolution + c;
        if (!seen[j] && frame[j] >= threshold) {
          seen[j] = 1;
          stack.push_back(j);
        }
      };
      if (row > 0) visit(row - 1, col);
      if (row + 1 < resolution) visit(row + 1, col);
      if (col > 0) visit(row, col - 1);
      if (col + 1 < resolution) visit(row, col + 1);
    }
    if (count > best_count) {
      best_count = count;
      best_col = sum_col / static_cast<double>(count);
      best_row = sum_row / static_cast<double>(count);
    }
  }
  if (best_count == 0) return std::nullopt;
  return std::array<double, 2>{best_col, best_row};
}

double BallProtocol::gravity_magnitude() const {
  const double travel = 1.0 - 2.0 * radius();
  const double t = crossing_frames * dt;
  return 2.0 * travel / (t * t);
}

std::array<std::size_t, 4> main_directions(std::size_t n_directions) {
  std::array<std::size_t, 4> out{};
  for (std::size_t j = 0; j < 4; ++j) {
    const double deg = 45.0 + 90.0 * static_cast<double>(j);
    out[j] = static_cast<std::size_t>(std::llround(deg / 360.0 * static_cast<double>(n_directions))) % n_directions;
  }
  return out;
}

BallHoldout choose_holdout(std::size_t n_directions, std::uint64_t seed) {
  if (n_directions < 3) throw std::invalid_argument("choose_holdout: need at least 3 directions");
  const auto mains = main_directions(n_directions);
  auto circular = [n_directions](std::size_t a, std::size_t b) {
    const std::size_t d = a > b ? a - b : b - a;
    return std::min(d, n_directions - d);
  };
  std::vector<std::size_t> candidates;
  for (std::size_t k = 0; k < n_directions; ++k) {
    if (std::find(mains.begin(), mains.end(), k) == mains.end()) candidates.push_back(k);
  }
  // Small direction counts cannot avoid the diagonals; fall back to all.
  if (candidates.size() < 2) {
    candidates.clear();
    for (std::size_t k = 0; k < n_directions; ++k) candidates.push_back(k);
  }
  Rng rng = derive_rng(seed, 0, 0x68656c64);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  BallHoldout h;
  h.val_direction = candidates[pick(rng)];
  for (int attempt = 0; attempt < 1000; ++attempt) {
    h.test_direction = candidates[pick(rng)];
    if (h.test_direction != h.val_direction &&
        (circular(h.test_direction, h.val_direction) >= 2 || n_directions < 4)) {
      return h;
    }
  }
  throw std::runtime_error("choose_holdout: no valid test direction");
}

std::array<double, 2> gravity_vector(std::size_t direction, std::size_t n_directions, double magnitude) {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(direction) / static_cast<double>(n_directions);
  return {magnitude * std::cos(angle), magnitude * std::sin(angle)};
}

std::size_t direction_of(std::span<const double> gravity, std::size_t n_directions) {
  double angle = std::atan2(gravity[1], gravity[0]);
  if (angle < 0.0) angle += 2.0 * std::numbers::pi;
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n_directions);
  return static_cast<std::size_t>(std::llround(angle / step)) % n_directions;
}

SequenceDataset make_ball_dataset(std::size_t n_directions, std::size_t seq_per_direction, std::uint64_t seed,
                                  const BallProtocol& protocol, std::size_t threads, BallHoldout* holdout) {
  if (n_directions < 3) throw std::invalid_argument("make_ball_dataset: need at least 3 gravity directions");
  if (seq_per_direction == 0 || protocol.steps == 0) throw std::invalid_argument("make_ball_dataset: empty dataset");
  const std::size_t res = protocol.resolution;
  const double radius = protocol.radius();
  if (radius <= 0.0 || radius >= 0.25) throw std::invalid_argument("make_ball_dataset: radius out of range");

  SequenceDataset ds;
  ds.n = n_directions * seq_per_direction;
  ds.steps = protocol.steps;
  ds.obs_dim = res * res;
  ds.n_factors = 2;
  ds.likelihood = Likelihood::kBernoulli;
  ds.observations.assign(ds.n * ds.steps * ds.obs_dim, 0.0);
  ds.factors.assign(ds.n * 2, 0.0);
  ds.splits.assign(ds.n, Split::kTrain);

  const BallHoldout h = choose_holdout(n_directions, seed);
  if (holdout != nullptr) *holdout = h;
  const double g = protocol.gravity_magnitude();

  auto generate = [&](std::size_t i) {
    const std::size_t direction = i / seq_per_direction;
    Rng rng = derive_rng(seed, i, 1);
    std::uniform_real_distribution<double> pos(radius, 1.0 - radius);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> speed(0.0, protocol.max_initial_speed);
    BallState s;
    s.radius = radius;
    s.position = {pos(rng), pos(rng)};
    const double a = angle(rng);
    const double v = speed(rng);
    s.velocity = {v * std::cos(a), v * std::sin(a)};
    s.gravity = gravity_vector(direction, n_directions, g);
    for (std::size_t t = 0; t < ds.steps; ++t) {
      if (t > 0) s = ball_step(s, protocol.dt);
      const auto frame = render_frame(s, res);
      std::copy(frame.begin(), frame.end(),
                ds.observations.begin() + static_cast<std::ptrdiff_t>((i * ds.steps + t) * ds.obs_dim));
    }
    ds.factors[i * 2] = s.gravity[0];
    ds.factors[i * 2 + 1] = s.gravity[1];
    if (direction == h.val_direction) ds.splits[i] = Split::kVal;
    if (direction == h.test_direction) ds.splits[i] = Split::kTest;
  };

  threads = std::max<std::size_t>(1, std::min(threads, ds.n));
  if (threads == 1) {
    for (std::size_t i = 0; i < ds.n; ++i) generate(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < ds.n; i += threads) generate(i);
      });
    }
  }
  return ds;
}

}  // namespace dssm::data
