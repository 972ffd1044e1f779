#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "univid/tensor.hpp"

namespace univid {

// Seeded generator. Every random draw in the library goes through one of these;
// there is no global random state. Normal samples use Box-Muller over
// std::mt19937_64 so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0);

  // Independent stream keyed by (seed, stream, index), e.g. one per training step.
  static Rng derive(uint64_t seed, uint64_t stream, uint64_t index = 0);

  uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }
  float normal();

  void fill_normal(Tensor& t, float stddev = 1.0f);
  void fill_uniform(Tensor& t, float lo, float hi);
  Tensor normal_tensor(const Shape& shape, float stddev = 1.0f);

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

uint64_t splitmix64(uint64_t x);

}  // namespace univid
