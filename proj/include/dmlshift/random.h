#pragma once

#include <cstdint>
#include <random>

namespace dmlshift {

using Rng = std::mt19937_64;

// Independent generator roles derived from one master seed.
enum class StreamRole : std::uint64_t {
  Spec = 1,
  Pilot = 2,
  Train = 3,
  Validate = 4,
  Field = 5,
  Oracle = 6,
  Folds = 7,
  Learner = 8,
  Bootstrap = 9,
  Replication = 10,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Mixes the master seed with a role and up to two indices (e.g. spec and
// replication ids) into a child seed.
inline std::uint64_t derive_seed(std::uint64_t master, StreamRole role, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ static_cast<std::uint64_t>(role));
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ (b + 0x632BE59BD9B4E019ULL));
  return s;
}

inline Rng make_stream(std::uint64_t master, StreamRole role, std::uint64_t a = 0,
                       std::uint64_t b = 0) {
  return Rng(derive_seed(master, role, a, b));
}

}  // namespace dmlshift
