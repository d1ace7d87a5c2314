#include <cmath>

#include "dftc/error.hpp"
#include "dftc/policy.hpp"

namespace dftc {

namespace {

ControlInput clamp_current(const ControlInput& u, double i_max) {
  return u.cwiseMax(-i_max).cwiseMin(i_max);
}

void require_finite(const SensorVector& y) {
  if (!y.allFinite()) throw NumericError("controller received a non-finite measurement");
}

}  // namespace

BaselineController::BaselineController(LqrGain gain, double i_max, bool reference,
                                       std::string name)
    : gain_(std::move(gain)), i_max_(i_max), reference_(reference), name_(std::move(name)) {
  if (!(i_max_ > 0)) throw InvalidInput("i_max must be positive");
}

ControlInput BaselineController::act(const SensorVector& y) {
  require_finite(y);
  return baseline_policy(gain_, y, i_max_);
}

std::unique_ptr<Controller> BaselineController::clone() const {
  return std::make_unique<BaselineController>(*this);
}

DftcController::DftcController(nn::ModelParams model, double i_max)
    : model_(std::move(model)), i_max_(i_max) {
  if (!model_.arch.recurrent()) throw InvalidInput("DFTC controller needs a recurrent model");
  if (!(i_max_ > 0)) throw InvalidInput("i_max must be positive");
  window_.resize(model_.arch.window, kSensorCount);
  reset();
}

ControlInput DftcController::act(const SensorVector& y) { return act(y, nullptr); }

ControlInput DftcController::act(const SensorVector& y, Eigen::VectorXd* features) {
  require_finite(y);
  const Eigen::Index m = window_.rows();
  if (received_ == 0) {
    window_.rowwise() = y.transpose();
  } else {
    window_.topRows(m - 1) = window_.bottomRows(m - 1).eval();
    window_.row(m - 1) = y.transpose();
  }
  ++received_;
  nn::ForwardResult r = nn::model_forward_traced(model_, window_);
  if (features) *features = std::move(r.features);
  return clamp_current(r.u, i_max_);
}

void DftcController::reset() {
  window_.setZero();
  received_ = 0;
}

std::unique_ptr<Controller> DftcController::clone() const {
  return std::make_unique<DftcController>(*this);
}

FnnController::FnnController(nn::ModelParams model, double i_max)
    : model_(std::move(model)), i_max_(i_max) {
  if (model_.arch.recurrent() || model_.arch.window != 1) {
    throw InvalidInput("FNN controller needs a feed-forward model with window 1");
  }
  if (!(i_max_ > 0)) throw InvalidInput("i_max must be positive");
}

ControlInput FnnController::act(const SensorVector& y) {
  require_finite(y);
  const StateSeries row = y.transpose();
  return clamp_current(nn::model_forward(model_, row), i_max_);
}

std::unique_ptr<Controller> FnnController::clone() const {
  return std::make_unique<FnnController>(*this);
}

FnnTraining train_fnn(const Dataset& ds, const nn::TrainConfig& cfg, double i_max,
                      std::uint64_t init_seed, Execution exec) {
  const nn::TrainingData data(ds, 1, /*fault_free_only=*/true);
  const nn::ModelParams init = nn::init_model(nn::Architecture::fnn(), ds.normalizer, init_seed);
  nn::TrainResult r = nn::train(init, data, cfg, exec);
  return FnnTraining{FnnController(std::move(r.model), i_max), std::move(r.curve)};
}

}  // namespace dftc
