#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dssm/dataset.hpp"
#include "dssm/rng.hpp"

namespace dssm::data {

// Box coordinates: [0, 1]^2, y pointing up.
struct BallState {
  std::array<double, 2> position{0.5, 0.5};
  std::array<double, 2> velocity{0.0, 0.0};
  std::array<double, 2> gravity{0.0, 0.0};
  double radius = 0.125;
};

// Semi-implicit Euler (velocity first) with elastic mirror reflection at the
// walls [radius, 1 - radius].
BallState ball_step(const BallState& state, double dt);

// 0/1 pixels, row-major, row 0 at the top of the box. The ball is a fixed
// disc of pixels (offsets within radius * resolution) stamped at the pixel
// nearest to its center, so every frame lights the same number of pixels.
std::vector<double> render_frame(const BallState& state, std::size_t resolution);

// Box position -> (column, row) pixel coordinates.
std::array<double, 2> to_pixel(const std::array<double, 2>& position, std::size_t resolution);

// Centroid (column, row) of the largest 4-connected component of pixels
// >= threshold. Ties go to the component whose first pixel in row-major
// order comes first. nullopt when nothing is lit.
std::optional<std::array<double, 2>> detect_ball_position(std::span<const double> frame, std::size_t resolution,
                                                          double threshold = 0.5);

struct BallProtocol {
  std::size_t resolution = 16;
  std::size_t steps = 70;
  double radius_px = 2.0;
  // Frames for a ball released at rest to fall across the box.
  double crossing_frames = 25.0;
  double max_initial_speed = 0.05;  // box units per frame
  double dt = 1.0;

  double radius() const { return radius_px / static_cast<double>(resolution); }
  double gravity_magnitude() const;
};

struct BallHoldout {
  std::size_t val_direction = 0;
  std::size_t test_direction = 0;
};

// Direction k points at angle 2*pi*k/n_directions. Picks a validation and a
// test direction that are not adjacent to each other and not one of the
// four diagonal ("main") directions.
BallHoldout choose_holdout(std::size_t n_directions, std::uint64_t seed);

// Directions nearest to 45, 135, 225 and 315 degrees.
std::array<std::size_t, 4> main_directions(std::size_t n_directions);

std::array<double, 2> gravity_vector(std::size_t direction, std::size_t n_directions, double magnitude);

// Sequences ordered by direction, factors K = 2 (gravity vector), whole
// held-out directions tagged val/test. O = resolution^2.
SequenceDataset make_ball_dataset(std::size_t n_directions, std::size_t seq_per_direction, std::uint64_t seed,
                                  const BallProtocol& protocol = {}, std::size_t threads = 1,
                                  BallHoldout* holdout = nullptr);

// Direction index of a gravity factor row.
std::size_t direction_of(std::span<const double> gravity, std::size_t n_directions);

}  // namespace dssm::data
