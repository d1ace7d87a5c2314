#include "dftc/observability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <exception>
#include <sstream>

#include <Eigen/Cholesky>

#include "dftc/dataset.hpp"
#include "dftc/error.hpp"
#include "dftc/rng.hpp"

namespace dftc {

void GramianConfig::validate() const {
  if (!(epsilon > 0 && epsilon < 1)) throw InvalidInput("gramian epsilon must be in (0, 1)");
  if (!(horizon > 0)) throw InvalidInput("gramian horizon must be positive");
  if (!(step > 0) || step > horizon) throw InvalidInput("gramian step must be in (0, horizon]");
  if (!(control_period > 0)) throw InvalidInput("gramian control period must be positive");
  if (base_points.empty()) throw InvalidInput("gramian needs at least one base point");
}

std::vector<StateVector> default_base_points(std::size_t count, std::uint64_t seed) {
  std::vector<StateVector> points;
  InitialBox box;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, "gramian", i));
    points.push_back(box.sample(rng));
  }
  return points;
}

Eigen::MatrixXd ChannelGramians::combine(const std::vector<int>& active) const {
  if (channels.empty()) throw InvalidInput("no channel gramians");
  const Eigen::Index n = channels.front().rows();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  for (int c : active) {
    if (c < 1 || c > static_cast<int>(channels.size())) {
      throw InvalidInput("sensor index out of range for gramian");
    }
    W += channels[c - 1];
  }
  return W;
}

ChannelGramians channel_gramians(const ProbeSimulator& simulate,
                                 const std::vector<Eigen::VectorXd>& base_points,
                                 double epsilon, double step, Execution exec) {
  if (base_points.empty()) throw InvalidInput("gramian needs at least one base point");
  const Eigen::Index nx = base_points.front().size();
  const long n_base = static_cast<long>(base_points.size());
  const long n_probes = n_base * nx * 2;

  std::vector<Eigen::MatrixXd> outputs(n_probes);
  std::vector<std::exception_ptr> failures(n_probes);

  auto run_probe = [&](long p) {
    const long b = p / (2 * nx);
    const long j = (p / 2) % nx;
    const double sign = (p % 2 == 0) ? 1.0 : -1.0;
    try {
      Eigen::VectorXd x0 = base_points[b];
      x0[j] += sign * epsilon;
      outputs[p] = simulate(x0);
    } catch (...) {
      failures[p] = std::current_exception();
    }
  };

  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (long p = 0; p < n_probes; ++p) run_probe(p);
  } else {
    for (long p = 0; p < n_probes; ++p) run_probe(p);
  }

  for (long p = 0; p < n_probes; ++p) {
    if (!failures[p]) continue;
    std::ostringstream os;
    os << "gramian probe diverged (j=" << (p / 2) % nx + 1 << ", sign="
       << ((p % 2 == 0) ? '+' : '-') << ", base point " << p / (2 * nx) << ")";
    try {
      std::rethrow_exception(failures[p]);
    } catch (const DivergenceError& e) {
      throw DivergenceError(os.str() + ": " + e.what(), e.state());
    } catch (const std::exception& e) {
      throw DivergenceError(os.str() + ": " + e.what(), StateVector::Constant(NAN));
    }
  }

  const Eigen::Index nodes = outputs.front().rows();
  const Eigen::Index ny = outputs.front().cols();
  Eigen::VectorXd weights = Eigen::VectorXd::Constant(nodes, step);
  if (nodes > 1) {
    weights[0] = 0.5 * step;
    weights[nodes - 1] = 0.5 * step;
  }
  const double scale = 1.0 / (4.0 * epsilon * epsilon);

  ChannelGramians out;
  out.channels.assign(ny, Eigen::MatrixXd::Zero(nx, nx));
  Eigen::MatrixXd delta(nodes, nx);
  for (long b = 0; b < n_base; ++b) {
    for (Eigen::Index c = 0; c < ny; ++c) {
      for (Eigen::Index j = 0; j < nx; ++j) {
        const long plus = (b * nx + j) * 2;
        if (outputs[plus].rows() != nodes || outputs[plus + 1].rows() != nodes) {
          throw InvalidInput("probe simulator returned inconsistent lengths");
        }
        delta.col(j) = outputs[plus].col(c) - outputs[plus + 1].col(c);
      }
      Eigen::MatrixXd contrib = delta.transpose() * weights.asDiagonal() * delta;
      out.channels[c] += scale * contrib;
    }
  }
  for (auto& W : out.channels) W = (0.5 * (W + W.transpose())).eval();
  return out;
}

double observability_measure(const Eigen::MatrixXd& W) {
  if (W.rows() != W.cols() || W.rows() == 0) throw InvalidInput("gramian must be square");
  if (!W.allFinite()) throw UnobservableError("gramian has non-finite entries");
  Eigen::LLT<Eigen::MatrixXd> llt(W);
  if (llt.info() != Eigen::Success) {
    throw UnobservableError("gramian is not positive definite");
  }
  double logdet = 0.0;
  const Eigen::MatrixXd& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += 2.0 * std::log(L(i, i));
  static const double kLogFloor = std::log(1e-300);
  if (!(logdet > kLogFloor)) throw UnobservableError("gramian determinant below 1e-300");
  return logdet;
}

ProbeSimulator plant_probe(const PlantParams& plant, const GramianConfig& cfg,
                           const LqrGain* baseline) {
  if (cfg.probe_policy == ProbePolicy::ClosedLoopBaseline && baseline == nullptr) {
    throw InvalidInput("closed-loop gramian probes need a baseline gain");
  }
  const auto nodes = static_cast<long>(std::llround(cfg.horizon / cfg.step)) + 1;
  const auto hold = std::max<long>(1, std::llround(cfg.control_period / cfg.step));
  return [plant, cfg, baseline, nodes, hold](const Eigen::VectorXd& x0) {
    Eigen::MatrixXd y(nodes, kSensorCount);
    StateVector x = x0;
    ControlInput u = ControlInput::Zero();
    for (long k = 0; k < nodes; ++k) {
      y.row(k) = measure(x).transpose();
      if (k + 1 == nodes) break;
      if (cfg.probe_policy == ProbePolicy::ClosedLoopBaseline && k % hold == 0) {
        u = baseline_policy(*baseline, x, plant.i_max);
      }
      x = step_rk4(plant, x, saturate(plant, u), cfg.step);
    }
    return y;
  };
}

namespace {

std::vector<Eigen::VectorXd> as_dynamic(const std::vector<StateVector>& points) {
  return {points.begin(), points.end()};
}

}  // namespace

GramianResult empirical_gramian(const PlantParams& plant, const SensorConfig& sensors,
                                const GramianConfig& cfg, const LqrGain* baseline,
                                Execution exec) {
  cfg.validate();
  sensors.validate();
  const ChannelGramians g = channel_gramians(plant_probe(plant, cfg, baseline),
                                             as_dynamic(cfg.base_points), cfg.epsilon,
                                             cfg.step, exec);
  GramianResult r;
  r.config = sensors;
  r.W = g.combine(sensors.active);
  try {
    r.J = observability_measure(r.W);
    r.observable = true;
  } catch (const UnobservableError&) {
    r.J = -std::numeric_limits<double>::infinity();
    r.observable = false;
  }
  return r;
}

std::vector<SensorConfig> single_fault_configs() {
  std::vector<SensorConfig> configs{SensorConfig::full()};
  for (int i = 1; i <= kSensorCount; ++i) configs.push_back(SensorConfig::drop(i));
  return configs;
}

std::vector<RankingRow> rank_configurations(const ChannelGramians& gramians,
                                            const std::vector<SensorConfig>& configs) {
  std::vector<RankingRow> rows;
  for (const auto& cfg : configs) {
    cfg.validate();
    RankingRow row;
    row.config = cfg;
    row.reference = cfg.active.size() == static_cast<std::size_t>(kSensorCount);
    if (row.reference) {
      row.name = "y";
    } else if (cfg.active.size() == static_cast<std::size_t>(kSensorCount - 1)) {
      int missing = 1;
      for (int i = 1; i <= kSensorCount; ++i) {
        if (std::find(cfg.active.begin(), cfg.active.end(), i) == cfg.active.end()) {
          missing = i;
        }
      }
      row.name = "y(" + std::to_string(missing) + ")";
    } else {
      row.name = "y" + cfg.label();
    }
    try {
      row.J = observability_measure(gramians.combine(cfg.active));
      row.observable = true;
    } catch (const UnobservableError&) {
      row.J = -std::numeric_limits<double>::infinity();
      row.observable = false;
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const RankingRow& a, const RankingRow& b) {
    if (a.observable != b.observable) return a.observable;
    return a.J > b.J;
  });
  return rows;
}

std::vector<RankingRow> rank_configurations(const PlantParams& plant,
                                            const std::vector<SensorConfig>& configs,
                                            const GramianConfig& cfg,
                                            const LqrGain* baseline, Execution exec) {
  cfg.validate();
  const ChannelGramians g = channel_gramians(plant_probe(plant, cfg, baseline),
                                             as_dynamic(cfg.base_points), cfg.epsilon,
                                             cfg.step, exec);
  return rank_configurations(g, configs);
}

std::string ranking_csv(const std::vector<RankingRow>& rows) {
  std::ostringstream os;
  os << "config,active_sensors,J,status\n";
  for (const auto& r : rows) {
    os << r.name << ",\"" << r.config.label() << "\",";
    if (r.observable) os << format_double(r.J);
    os << ',' << (r.observable ? (r.reference ? "reference" : "observable") : "unobservable")
       << '\n';
  }
  return os.str();
}

}  // namespace dftc
