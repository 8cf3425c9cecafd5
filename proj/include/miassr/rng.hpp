#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace miassr {

// Deterministic RNG. The distribution transforms are spelled out here rather
// than taken from <random> because libstdc++/libc++ are free to implement
// std::uniform_real_distribution etc. differently; we want the same draw
// sequence for a given seed everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int64_t below(int64_t n) {
    // multiply-shift; avoids modulo bias
    return static_cast<int64_t>((static_cast<__uint128_t>(next()) * static_cast<__uint128_t>(n)) >> 64);
  }

  // Standard normal via Box-Muller. Stateless (two uniforms per draw, no
  // cached spare) so serialization is just the engine state.
  double normal();

  // Engine state as text; mt19937_64 stream format is portable.
  std::string save_state() const;
  void restore_state(const std::string& s);

 private:
  std::mt19937_64 gen_;
};

}  // namespace miassr
