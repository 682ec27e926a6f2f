#ifndef MTSECOM_COMMON_H_
#define MTSECOM_COMMON_H_

#include <algorithm>
#include <cstdint>

namespace mtsecom {

// Independent deterministic sub-stream seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// Counts elementary state touches; used by the complexity probes.
struct OpCounter {
  std::uint64_t touches = 0;
  void add(std::uint64_t n = 1) { touches += n; }
};

inline void count(OpCounter* counter, std::uint64_t n = 1) {
  if (counter != nullptr) counter->add(n);
}

}  // namespace mtsecom

#endif  // MTSECOM_COMMON_H_
