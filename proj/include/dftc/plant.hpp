#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dftc/types.hpp"

namespace dftc {

class Rng;

// Two decoupled reaction-wheel pendulum axes. Per axis:
//   I_p*ddtheta = ml*g*sin(theta) - k_s*theta - b_th*dtheta - tau + b_ph*dphi
//   ddphi       = (tau - b_ph*dphi)/I_w - ddtheta
// with tau = sat(k_T*i, +-k_T*i_max).
struct PlantParams {
  double I_p = 0.02;      // kg m^2, per axis
  double I_w = 5.12e-4;   // kg m^2, 160 g disc of 160 mm diameter
  double ml = 0.3;        // kg m
  double g = 9.81;        // m/s^2
  double k_s = 5.0;       // N m/rad
  double b_th = 0.01;     // N m s/rad
  double b_ph = 1e-5;     // N m s/rad
  double k_T = 0.0369;    // N m/A
  double i_max = 5.0;     // A
  double noise_std = 0.0; // additive measurement noise, per channel

  // Throws InvalidInput when an invariant does not hold.
  void validate() const;
};

StateVector dynamics(const PlantParams& params, const StateVector& state,
                     const ControlInput& input);

ControlInput saturate(const PlantParams& params, const ControlInput& input);

// Classical RK4 with the input held over the step. Throws DivergenceError
// if the result is not finite.
StateVector step_rk4(const PlantParams& params, const StateVector& state,
                     const ControlInput& input, double h);

// y = x, plus zero-mean Gaussian noise when noise_std > 0 and an rng is given.
SensorVector measure(const StateVector& state, double noise_std = 0.0,
                     Rng* rng = nullptr);

enum class FaultMode { HoldLast, Zero, Constant };

std::string to_string(FaultMode mode);
FaultMode fault_mode_from_string(const std::string& s);

struct FaultSpec {
  int sensor_index = 1;  // 1-based, 1..6
  FaultMode mode = FaultMode::Zero;
  double value = 0.0;    // used by Constant only
  double fault_time = 0.0;

  void validate() const;
  bool operator==(const FaultSpec&) const = default;
};

// Active sensors, 1-based indices.
struct SensorConfig {
  std::vector<int> active;

  static SensorConfig full();
  static SensorConfig drop(int sensor_index);
  void validate() const;
  std::string label() const;  // e.g. "[1,2,4,5,6]"
  bool operator==(const SensorConfig&) const = default;
};

// Corrupts one channel of y once t >= fault_time.
SensorVector apply_fault(const SensorVector& y, double history_value,
                         const FaultSpec& spec, double t);

// Stateful wrapper around apply_fault that remembers the last pre-fault
// reading of the faulted channel.
class FaultInjector {
 public:
  explicit FaultInjector(std::optional<FaultSpec> spec);

  SensorVector operator()(const SensorVector& y, double t);
  void reset();

 private:
  std::optional<FaultSpec> spec_;
  std::optional<double> last_healthy_;
};

}  // namespace dftc
