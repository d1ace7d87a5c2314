#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dftc {

// Seed for a named sub-stream ("gen", "augment", "split", "init", "train",
// "eval") and an item index within it. Independent of worker scheduling.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stream,
                          std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer on [lo, hi].
  long uniform_int(long lo, long hi);
  double normal(double mean = 0.0, double stddev = 1.0);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dftc
