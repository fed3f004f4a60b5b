#pragma once

// Self-contained PRNG with explicit, serializable state. std:: distributions
// are implementation-defined, so all sampling primitives live here to keep
// corpus generation and training bit-reproducible from a seed.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace dagnmt {

class Rng {
 public:
  Rng() : Rng(0x9e3779b97f4a7c15ULL) {}
  explicit Rng(uint64_t seed) { reseed(seed); }

  void reseed(uint64_t seed) {
    state_ = seed;
    has_spare_ = false;
    spare_ = 0.0;
    // burn a few outputs so nearby seeds decorrelate
    for (int i = 0; i < 4; ++i) next_u64();
  }

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, n)
  uint64_t uniform_u64(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_u64: n must be positive");
    // rejection sampling to avoid modulo bias
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  int uniform_int(int lo, int hi_inclusive) {
    if (hi_inclusive < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
    return lo + static_cast<int>(uniform_u64(static_cast<uint64_t>(hi_inclusive - lo) + 1));
  }

  // uniform in [0, 1)
  double uniform_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller; the spare is part of the serialized state
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform_real();
    double u2 = uniform_real();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  // index sampled proportionally to weights[i]
  size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("Rng::categorical: negative weight");
      total += w;
    }
    if (total <= 0.0) throw std::invalid_argument("Rng::categorical: zero total weight");
    double r = uniform_real() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_u64(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  struct State {
    uint64_t state;
    uint8_t has_spare;
    double spare;
  };
  State save() const { return {state_, static_cast<uint8_t>(has_spare_ ? 1 : 0), spare_}; }
  void restore(const State& s) {
    state_ = s.state;
    has_spare_ = s.has_spare != 0;
    spare_ = s.spare;
  }

 private:
  uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dagnmt
