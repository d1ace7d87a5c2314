#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dftc/baseline.hpp"
#include "dftc/parallel.hpp"
#include "dftc/plant.hpp"

namespace dftc {

enum class ProbePolicy { ClosedLoopBaseline, ZeroInput };

struct GramianConfig {
  double epsilon = 1e-4;
  double horizon = 4.0;         // T_o, seconds
  double step = 1e-3;           // integration and quadrature step
  double control_period = 0.01; // zero-order hold of the probe controller
  std::vector<StateVector> base_points;
  ProbePolicy probe_policy = ProbePolicy::ClosedLoopBaseline;

  void validate() const;
};

// Base points drawn uniformly from the training initial-condition box.
std::vector<StateVector> default_base_points(std::size_t count,
                                             std::uint64_t seed);

// Simulates the output of a system from an initial state; one row per
// quadrature node (t = 0, step, ..., horizon), one column per output channel.
using ProbeSimulator = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

// Per-channel Gramian contributions. W for a sensor subset S is the sum of
// channels[c] over c in S, so dropping a sensor removes a PSD summand.
struct ChannelGramians {
  std::vector<Eigen::MatrixXd> channels;

  Eigen::MatrixXd combine(const std::vector<int>& active_one_based) const;
};

// W_jk = 1/(4 eps^2) * integral (y+j - y-j)'(y+k - y-k) dt by the
// trapezoidal rule, summed over base points. Throws DivergenceError naming
// (j, sign, base point) when a probe rollout fails.
ChannelGramians channel_gramians(const ProbeSimulator& simulate,
                                 const std::vector<Eigen::VectorXd>& base_points,
                                 double epsilon, double step,
                                 Execution exec = Execution::Parallel);

struct GramianResult {
  Eigen::MatrixXd W;
  double J = 0.0;
  bool observable = false;
  SensorConfig config;
};

// J = log det W via Cholesky. Throws UnobservableError when det W is at or
// below 1e-300 (or W is not positive definite).
double observability_measure(const Eigen::MatrixXd& W);

// Probe simulator for the reaction-wheel plant with all six outputs.
ProbeSimulator plant_probe(const PlantParams& plant, const GramianConfig& cfg,
                           const LqrGain* baseline);

GramianResult empirical_gramian(const PlantParams& plant,
                                const SensorConfig& sensors,
                                const GramianConfig& cfg,
                                const LqrGain* baseline,
                                Execution exec = Execution::Parallel);

struct RankingRow {
  SensorConfig config;
  std::string name;  // "y" for the full set, "y(i)" for a single drop
  double J = 0.0;
  bool observable = false;
  bool reference = false;
};

// Rows sorted by descending J; unobservable rows last and flagged.
std::vector<RankingRow> rank_configurations(const PlantParams& plant,
                                            const std::vector<SensorConfig>& configs,
                                            const GramianConfig& cfg,
                                            const LqrGain* baseline,
                                            Execution exec = Execution::Parallel);

// Same ranking from precomputed channel Gramians.
std::vector<RankingRow> rank_configurations(const ChannelGramians& gramians,
                                            const std::vector<SensorConfig>& configs);

// The full set followed by the six single-drop sets.
std::vector<SensorConfig> single_fault_configs();

std::string ranking_csv(const std::vector<RankingRow>& rows);

}  // namespace dftc
