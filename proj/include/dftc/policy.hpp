#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dftc/baseline.hpp"
#include "dftc/nn.hpp"

namespace dftc {

// Closed-loop controller fed with (possibly faulty) sensor vectors.
class Controller {
 public:
  virtual ~Controller() = default;

  virtual ControlInput act(const SensorVector& y) = 0;
  virtual void reset() = 0;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<Controller> clone() const = 0;
  // The suite runs reference controllers on fault-free scenarios only.
  virtual bool fault_free_reference() const { return false; }
};

// Full-state LQR acting on the measurement vector.
class BaselineController final : public Controller {
 public:
  BaselineController(LqrGain gain, double i_max, bool reference = true,
                     std::string name = "baseline");

  ControlInput act(const SensorVector& y) override;
  void reset() override {}
  std::string name() const override { return name_; }
  std::unique_ptr<Controller> clone() const override;
  bool fault_free_reference() const override { return reference_; }

 private:
  LqrGain gain_;
  double i_max_;
  bool reference_;
  std::string name_;
};

// Recurrent controller over a sliding window of the last m measurements.
// Until m readings have arrived the window is padded with the first one.
class DftcController final : public Controller {
 public:
  DftcController(nn::ModelParams model, double i_max);

  ControlInput act(const SensorVector& y) override;
  // Same as act, also returning the concatenated LSTM block outputs.
  ControlInput act(const SensorVector& y, Eigen::VectorXd* features);
  void reset() override;
  std::string name() const override { return "dftc"; }
  std::unique_ptr<Controller> clone() const override;

  const StateSeries& window() const { return window_; }
  int received() const { return received_; }
  const nn::ModelParams& model() const { return model_; }

 private:
  nn::ModelParams model_;
  double i_max_;
  StateSeries window_;
  int received_ = 0;
};

// Stateless feed-forward controller on the current measurement.
class FnnController final : public Controller {
 public:
  FnnController(nn::ModelParams model, double i_max);

  ControlInput act(const SensorVector& y) override;
  void reset() override {}
  std::string name() const override { return "fnn"; }
  std::unique_ptr<Controller> clone() const override;

  const nn::ModelParams& model() const { return model_; }

 private:
  nn::ModelParams model_;
  double i_max_;
};

struct FnnTraining {
  FnnController controller;
  std::vector<nn::CurvePoint> curve;
};

// Regression of single measurements onto baseline actions using only the
// fault-free trajectories of a split dataset.
FnnTraining train_fnn(const Dataset& ds, const nn::TrainConfig& cfg,
                      double i_max, std::uint64_t init_seed,
                      Execution exec = Execution::Parallel);

}  // namespace dftc
