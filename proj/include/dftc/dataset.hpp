#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dftc/baseline.hpp"
#include "dftc/parallel.hpp"
#include "dftc/plant.hpp"
#include "dftc/trajectory.hpp"

namespace dftc {

// Box of initial conditions used for data generation and evaluation.
struct InitialBox {
  double theta = 0.7853981633974483;  // pi/4
  double dtheta = 6.8;
  double dphi = 300.0;

  StateVector sample(Rng& rng) const;
};

struct GenerationConfig {
  std::int64_t n_traj = 300;
  double h = 0.01;
  std::int64_t steps = 400;
  InitialBox box;
  // Rollouts whose |theta| exceeds this bound are flagged as diverged.
  double divergence_theta = 3.141592653589793;
};

struct Normalizer {
  SensorVector mean = SensorVector::Zero();
  SensorVector std = SensorVector::Ones();

  bool operator==(const Normalizer&) const = default;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  Normalizer normalizer;
  // Rollouts excluded during generation.
  std::int64_t diverged = 0;

  std::int64_t count(Split split) const;
  std::int64_t total_points() const;
};

struct AugmentationConfig {
  int copies_per_trajectory = 2;
  double fault_window_begin = 0.3;
  double fault_window_end = 2.0;

  void validate(double duration) const;
};

// Window of the last m measurements (rows, oldest first) and the baseline
// action recorded at the final row.
struct SampleWindow {
  StateSeries window;
  ControlInput target;
};

// Closed-loop rollout under the baseline gain from x0.
Trajectory baseline_rollout(const PlantParams& plant, const LqrGain& gain,
                            const StateVector& x0, double h,
                            std::int64_t steps, Rng* noise_rng = nullptr,
                            double divergence_theta = 3.141592653589793);

Dataset generate_trajectories(const PlantParams& plant, const LqrGain& gain,
                              const GenerationConfig& cfg, std::uint64_t seed,
                              Execution exec = Execution::Parallel);

// Draws one fault with the augmentation distribution: uniform sensor,
// fault time on the sample grid inside the window, position sensors
// equiprobable among HoldLast / Zero / Constant(U(-pi, pi)), velocity
// sensors Zero.
FaultSpec sample_fault(const AugmentationConfig& cfg, double h, Rng& rng);

// Copy of a fault-free trajectory with its measurements rewritten by the
// fault.
Trajectory inject_fault(const Trajectory& parent, const FaultSpec& fault,
                        std::int64_t id);

Dataset augment(const Dataset& ds, const AugmentationConfig& cfg,
                std::uint64_t seed, Execution exec = Execution::Parallel);

// 80/10/10 by trajectory groups; an augmented copy shares its parent's split.
Dataset split(const Dataset& ds, std::uint64_t seed);

Normalizer compute_normalizer(const Dataset& ds);

std::vector<SampleWindow> window_samples(const Trajectory& traj, int m = 10);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Bit-exact text formatting with 17 significant digits.
std::string format_double(double v);

}  // namespace dftc
