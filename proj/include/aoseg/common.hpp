// Shared basics: error types, shapes, deterministic RNG.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace aoseg {

// Runtime failure with a descriptive message.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad invocation or configuration (maps to CLI exit code 1).
struct UsageError : Error {
  using Error::Error;
};

// Tensor extents, outermost first. Image data is [N, C, H, W].
using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  out += ']';
  return out;
}

// Deterministic RNG. Draws are derived from the mt19937_64 stream with
// fixed arithmetic so sequences are reproducible across platforms
// (std::uniform_real_distribution and friends are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * n);
    return v < n ? v : n - 1;
  }

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Child seed for an independent stream (splitmix64 finalizer).
  std::uint64_t derive(std::uint64_t salt) {
    std::uint64_t z = state_mix_ += 0x9e3779b97f4a7c15ull + salt;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t state_mix_ = 0x243f6a8885a308d3ull;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Independent child seed from a master seed and an index.
inline std::uint64_t child_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace aoseg
