#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dftc/baseline.hpp"
#include "dftc/dataset.hpp"
#include "dftc/policy.hpp"

namespace dftc {

struct Scenario {
  std::int64_t id = 0;
  StateVector initial_condition = StateVector::Zero();
  std::optional<FaultSpec> fault;
  double duration = 4.0;
  double h = 0.01;
};

struct RolloutResult {
  Trajectory traj;
  double cost = 0.0;
  bool diverged = false;
  // Per-step LSTM block outputs, filled only when requested for DFTC.
  std::vector<Eigen::VectorXd> features;
};

struct RolloutOptions {
  CostWeights weights;
  double divergence_theta = 3.141592653589793;
  bool record_features = false;
};

// measure -> apply fault -> act -> saturate -> RK4, once per sample.
RolloutResult rollout(const PlantParams& plant, Controller& controller,
                      const Scenario& scenario, const RolloutOptions& opts = {});

// True iff |theta1| and |theta2| stay within tol over the final `hold` seconds.
bool settling_check(const Trajectory& traj, double tol_theta = 0.05,
                    double hold = 0.5);

struct TimingStats {
  double mean_ms = 0.0;
  double worst_ms = 0.0;
  int calls = 0;
};

// Wall-clock latency of act() over n_calls inputs cycled from `inputs`.
TimingStats timing_stats(Controller& controller,
                         const std::vector<SensorVector>& inputs, int n_calls = 1000);

enum class Condition { NoFault = 0, Fault = 1 };
std::string to_string(Condition c);

enum class FaultMix { None, Single };

struct SuiteConfig {
  std::int64_t n_scenarios = 100;
  FaultMix fault_mix = FaultMix::Single;
  AugmentationConfig fault_distribution;
  InitialBox box;
  double duration = 4.0;
  double h = 0.01;
  double settle_tol = 0.05;
  double settle_hold = 0.5;
  RolloutOptions rollout;
};

struct RunRow {
  std::string controller;
  std::int64_t scenario = 0;
  Condition condition = Condition::NoFault;
  std::optional<FaultSpec> fault;
  double J = 0.0;
  double rho = 0.0;
  bool settled = false;
  double max_abs_dphi = 0.0;
  bool diverged = false;
};

struct Aggregate {
  std::string controller;
  Condition condition = Condition::NoFault;
  double mean_rho = std::numeric_limits<double>::quiet_NaN();
  double std_rho = std::numeric_limits<double>::quiet_NaN();
  std::int64_t n = 0;         // runs included in the statistics
  std::int64_t excluded = 0;  // diverged runs
  std::int64_t unsettled = 0;
};

struct EvalReport {
  std::vector<std::string> controllers;
  std::vector<RunRow> rows;             // scenario-major, then controller, then condition
  std::vector<Aggregate> aggregates;    // controller-major, then condition
  std::vector<TimingStats> timing;      // per controller, when measured
  std::vector<Scenario> scenarios;

  const Aggregate& aggregate(const std::string& controller, Condition c) const;
};

std::vector<Scenario> draw_scenarios(const SuiteConfig& cfg, std::uint64_t seed);

// Mean and population standard deviation of rho per controller and
// condition, excluding diverged runs.
std::vector<Aggregate> aggregate_rows(const std::vector<std::string>& controllers,
                                      const std::vector<RunRow>& rows);

// Every controller runs every scenario fault-free and with its fault; the
// normalizing cost is the fault-free baseline run from the same initial
// condition. Reference controllers are always run fault-free.
EvalReport run_suite(const PlantParams& plant, const LqrGain& baseline_gain,
                     const std::vector<const Controller*>& controllers,
                     const SuiteConfig& cfg, std::uint64_t seed,
                     Execution exec = Execution::Parallel);

struct ExportOptions {
  // Trajectories (with LSTM outputs for DFTC) for the first n scenarios.
  std::int64_t dump_scenarios = 0;
  const PlantParams* plant = nullptr;
  const std::vector<const Controller*>* controllers = nullptr;
  const SuiteConfig* suite = nullptr;
};

// Writes report.json, runs.csv, timing.json (when timing was measured) and
// optional traj_<scenario>.csv files holding every controller and condition.
void export_report(const EvalReport& report, const std::filesystem::path& dir,
                   const ExportOptions& opts = {});

std::string report_json(const EvalReport& report);
std::string runs_csv(const EvalReport& report);
std::vector<RunRow> parse_runs_csv(const std::string& text);

}  // namespace dftc
