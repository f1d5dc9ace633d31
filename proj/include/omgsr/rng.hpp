#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "omgsr/tensor.hpp"

namespace omgsr {

// Deterministic generator with a hand-rolled Box-Muller normal sampler so
// sampled streams do not depend on the standard library's distribution
// internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Derive an independent child stream; used to hand sub-seeds to workers
  // and pipeline stages from one master seed.
  Rng fork(std::uint64_t salt) {
    return Rng(mix(engine_(), salt));
  }

  template <typename S>
  Tensor<S> normal_tensor(int c, int h, int w) {
    Tensor<S> t(c, h, w);
    for (Eigen::Index i = 0; i < t.size(); ++i)
      t.data[i] = static_cast<S>(normal());
    return t;
  }

  template <typename S>
  Tensor<S> uniform_tensor(int c, int h, int w, S lo, S hi) {
    Tensor<S> t(c, h, w);
    for (Eigen::Index i = 0; i < t.size(); ++i)
      t.data[i] = static_cast<S>(uniform(lo, hi));
    return t;
  }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace omgsr
