#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dssm/tensor.hpp"

namespace dssm::data {

enum class Likelihood : std::uint32_t { kGaussian = 0, kBernoulli = 1 };
enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

// n sequences x T steps x O observation dims, stored contiguously, plus an
// optional n x K block of ground-truth generative factors.
struct SequenceDataset {
  std::size_t n = 0;
  std::size_t steps = 0;
  std::size_t obs_dim = 0;
  std::size_t n_factors = 0;
  Likelihood likelihood = Likelihood::kGaussian;
  std::vector<double> observations;
  std::vector<double> factors;
  std::vector<Split> splits;

  std::span<const double> sequence(std::size_t i) const;
  std::span<const double> frame(std::size_t i, std::size_t t) const;
  std::span<const double> factor_row(std::size_t i) const;
  std::vector<std::size_t> indices(Split split) const;

  // Throws on inconsistent sizes, non-finite values, or non-binary
  // Bernoulli observations.
  void validate() const;

  bool operator==(const SequenceDataset&) const = default;
};

// ".dsq": "DSQ1", u32 header (n, T, O, K, likelihood), n*K f64 factors,
// n split bytes, then observations (f64 for gaussian; per-frame bit-packed,
// MSB first, padded to a byte boundary for bernoulli). Little-endian.
void write_dsq(const std::filesystem::path& path, const SequenceDataset& ds);
SequenceDataset read_dsq(const std::filesystem::path& path);

// Steps [t_begin, t_end) of the chosen sequences as a list of O x B tensors.
std::vector<ad::Tensor> make_batch(const SequenceDataset& ds, std::span<const std::size_t> indices,
                                   std::size_t t_begin, std::size_t t_end);

// Same for a single row-major T x O buffer.
std::vector<ad::Tensor> sequence_steps(std::span<const double> values, std::size_t steps, std::size_t obs_dim);

}  // namespace dssm::data
