#include "dftc/plant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dftc/error.hpp"
#include "dftc/rng.hpp"

namespace dftc {

void PlantParams::validate() const {
  const double all[] = {I_p, I_w, ml, g, k_s, b_th, b_ph, k_T, i_max, noise_std};
  for (double v : all) {
    if (!std::isfinite(v)) throw InvalidInput("plant parameter is not finite");
  }
  if (I_p <= 0 || I_w <= 0) throw InvalidInput("inertias must be positive");
  if (k_T <= 0) throw InvalidInput("torque constant must be positive");
  if (i_max <= 0) throw InvalidInput("current limit must be positive");
  if (k_s <= ml * g) {
    throw InvalidInput("spring stiffness must exceed ml*g for a stable upright equilibrium");
  }
  if (b_th < 0 || b_ph < 0 || noise_std < 0) {
    throw InvalidInput("damping and noise must be non-negative");
  }
}

StateVector dynamics(const PlantParams& p, const StateVector& x,
                     const ControlInput& u) {
  if (!x.allFinite() || !u.allFinite()) {
    throw InvalidInput("dynamics: non-finite state or input");
  }
  StateVector dx;
  const double tau_max = p.k_T * p.i_max;
  for (int axis = 0; axis < 2; ++axis) {
    const double theta = x[kTheta1 + axis];
    const double dtheta = x[kDTheta1 + axis];
    const double dphi = x[kDPhi1 + axis];
    const double tau = std::clamp(p.k_T * u[axis], -tau_max, tau_max);
    const double ddtheta = (p.ml * p.g * std::sin(theta) - p.k_s * theta -
                            p.b_th * dtheta - tau + p.b_ph * dphi) /
                           p.I_p;
    dx[kTheta1 + axis] = dtheta;
    dx[kDTheta1 + axis] = ddtheta;
    dx[kDPhi1 + axis] = (tau - p.b_ph * dphi) / p.I_w - ddtheta;
  }
  return dx;
}

ControlInput saturate(const PlantParams& p, const ControlInput& u) {
  return u.cwiseMax(-p.i_max).cwiseMin(p.i_max);
}

StateVector step_rk4(const PlantParams& p, const StateVector& x,
                     const ControlInput& u, double h) {
  if (!(h > 0)) throw InvalidInput("step_rk4: step must be positive");
  auto stage = [&](const StateVector& xs) {
    if (!xs.allFinite()) throw DivergenceError("step_rk4: non-finite stage state", xs);
    return dynamics(p, xs, u);
  };
  const StateVector k1 = dynamics(p, x, u);
  const StateVector k2 = stage(x + 0.5 * h * k1);
  const StateVector k3 = stage(x + 0.5 * h * k2);
  const StateVector k4 = stage(x + h * k3);
  StateVector next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw DivergenceError("step_rk4: non-finite state", next);
  return next;
}

SensorVector measure(const StateVector& x, double noise_std, Rng* rng) {
  SensorVector y = x;
  if (noise_std > 0 && rng != nullptr) {
    for (int i = 0; i < kSensorCount; ++i) y[i] += rng->normal(0.0, noise_std);
  }
  return y;
}

std::string to_string(FaultMode mode) {
  switch (mode) {
    case FaultMode::HoldLast:
      return "hold_last";
    case FaultMode::Zero:
      return "zero";
    case FaultMode::Constant:
      return "constant";
  }
  return "?";
}

FaultMode fault_mode_from_string(const std::string& s) {
  if (s == "hold_last") return FaultMode::HoldLast;
  if (s == "zero") return FaultMode::Zero;
  if (s == "constant") return FaultMode::Constant;
  throw InvalidInput("unknown fault mode '" + s + "'");
}

void FaultSpec::validate() const {
  if (sensor_index < 1 || sensor_index > kSensorCount) {
    throw InvalidInput("fault sensor index must be in 1..6, got " +
                       std::to_string(sensor_index));
  }
  if (!(fault_time >= 0) || !std::isfinite(fault_time)) {
    throw InvalidInput("fault time must be finite and non-negative");
  }
  if (mode == FaultMode::Constant && !std::isfinite(value)) {
    throw InvalidInput("constant fault value must be finite");
  }
}

SensorConfig SensorConfig::full() { return SensorConfig{{1, 2, 3, 4, 5, 6}}; }

SensorConfig SensorConfig::drop(int sensor_index) {
  SensorConfig c;
  for (int i = 1; i <= kSensorCount; ++i) {
    if (i != sensor_index) c.active.push_back(i);
  }
  return c;
}

void SensorConfig::validate() const {
  if (active.empty()) throw InvalidInput("sensor configuration is empty");
  for (std::size_t k = 0; k < active.size(); ++k) {
    if (active[k] < 1 || active[k] > kSensorCount) {
      throw InvalidInput("sensor index out of range in configuration");
    }
    for (std::size_t l = 0; l < k; ++l) {
      if (active[l] == active[k]) throw InvalidInput("duplicate sensor in configuration");
    }
  }
}

std::string SensorConfig::label() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < active.size(); ++k) os << (k ? "," : "") << active[k];
  os << ']';
  return os.str();
}

SensorVector apply_fault(const SensorVector& y, double history_value,
                         const FaultSpec& spec, double t) {
  if (spec.sensor_index < 1 || spec.sensor_index > kSensorCount) {
    throw InvalidInput("apply_fault: sensor index must be in 1..6");
  }
  if (t < spec.fault_time) return y;
  SensorVector out = y;
  double& channel = out[spec.sensor_index - 1];
  switch (spec.mode) {
    case FaultMode::HoldLast:
      channel = history_value;
      break;
    case FaultMode::Zero:
      channel = 0.0;
      break;
    case FaultMode::Constant:
      channel = spec.value;
      break;
  }
  return out;
}

FaultInjector::FaultInjector(std::optional<FaultSpec> spec) : spec_(std::move(spec)) {
  if (spec_) spec_->validate();
}

SensorVector FaultInjector::operator()(const SensorVector& y, double t) {
  if (!spec_) return y;
  const int c = spec_->sensor_index - 1;
  if (t < spec_->fault_time) {
    last_healthy_ = y[c];
    return y;
  }
  // A fault active from the first sample holds that first reading.
  if (!last_healthy_) last_healthy_ = y[c];
  return apply_fault(y, *last_healthy_, *spec_, t);
}

void FaultInjector::reset() { last_healthy_.reset(); }

}  // namespace dftc
