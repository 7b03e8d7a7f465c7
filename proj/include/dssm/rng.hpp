#pragma once

#include <cstdint>
#include <random>

namespace dssm {

using Rng = std::mt19937_64;

// Independent generator for item `index` of stream `stream` under a master
// seed. Lets parallel producers stay bit-identical to a serial run.
inline Rng derive_rng(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace dssm
