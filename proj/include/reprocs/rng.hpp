#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace reprocs {

// Counter-keyed random stream. Each (seed, stream, counter) triple gets its
// own mt19937_64 so a frame's draws do not depend on generation order. The
// uniform and normal transforms are written out by hand because the standard
// distributions are not reproducible across library implementations.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * 3.14159265358979323846 * u2;
    spare_ = rad * std::sin(ang);
    has_spare_ = true;
    return rad * std::cos(ang);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream identifiers used throughout the library.
namespace stream {
inline constexpr std::uint64_t basis = 1;
inline constexpr std::uint64_t coeff = 2;
inline constexpr std::uint64_t support = 3;
inline constexpr std::uint64_t magnitude = 4;
inline constexpr std::uint64_t noise = 5;
inline constexpr std::uint64_t rotation = 6;
inline constexpr std::uint64_t init = 7;
inline constexpr std::uint64_t solver = 8;
}  // namespace stream

}  // namespace reprocs
