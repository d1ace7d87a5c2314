#include "dftc/parallel.hpp"
#include "dftc/rng.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dftc {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stream,
                          std::uint64_t index) {
  return splitmix64(splitmix64(global_seed ^ fnv1a(stream)) ^ splitmix64(index));
}

double Rng::uniform(double lo, double hi) {
  // 53 random mantissa bits, independent of the standard library's
  // distribution implementation.
  const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

long Rng::uniform_int(long lo, long hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return lo + static_cast<long>(r % span);
}

double Rng::normal(double mean, double stddev) {
  // Box-Muller; u1 in (0, 1].
  const double u1 = 1.0 - uniform(0.0, 1.0);
  const double u2 = uniform(0.0, 1.0);
  constexpr double kTwoPi = 6.283185307179586;
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace dftc
