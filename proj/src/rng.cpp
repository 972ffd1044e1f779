#include "univid/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "univid/error.hpp"

namespace univid {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

Rng Rng::derive(uint64_t seed, uint64_t stream, uint64_t index) {
  return Rng(splitmix64(splitmix64(seed ^ splitmix64(stream)) + index));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw RangeError("uniform_int: empty range");
  const auto span = static_cast<unsigned __int128>(static_cast<uint64_t>(hi - lo) + 1);
  return lo + static_cast<int64_t>((static_cast<unsigned __int128>(engine_()) * span) >> 64);
}

float Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2));
}

void Rng::fill_normal(Tensor& t, float stddev) {
  for (float& v : t.values()) v = stddev * normal();
}

void Rng::fill_uniform(Tensor& t, float lo, float hi) {
  for (float& v : t.values()) v = lo + (hi - lo) * static_cast<float>(uniform());
}

Tensor Rng::normal_tensor(const Shape& shape, float stddev) {
  Tensor t(shape);
  fill_normal(t, stddev);
  return t;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw FormatError("invalid generator state");
}

}  // namespace univid
