#pragma once

#include <cstdint>
#include <random>

namespace alea {

using Engine = std::mt19937_64;

/// Named sub-streams of a single user seed. Each consumer of randomness draws
/// from its own stream so that adding draws in one place never shifts another.
enum class Stream : std::uint64_t {
  CleanTrain = 1,
  CleanVal = 2,
  CleanTest = 3,
  NoiseTrain = 11,
  NoiseVal = 12,
  NoiseTest = 13,
  Init = 21,
  Shuffle = 22,
  MonteCarlo = 31,
};

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Engine(seq);
}

inline Engine make_engine(std::uint64_t seed, Stream stream) {
  return make_engine(seed, static_cast<std::uint64_t>(stream));
}

}  // namespace alea
