#include "dftc/eval.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"
#include "dftc/error.hpp"
#include "dftc/rng.hpp"

namespace dftc {

namespace {

constexpr const char* kRunsHeader =
    "controller,scenario,condition,fault_sensor,fault_mode,fault_value,fault_time,J,rho,"
    "settled,max_abs_dphi,diverged";

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<Condition> conditions_of(const SuiteConfig& cfg) {
  if (cfg.fault_mix == FaultMix::None) return {Condition::NoFault};
  return {Condition::NoFault, Condition::Fault};
}

double normalized(double J, double J_ref) {
  if (J == J_ref) return 1.0;
  return J / J_ref;
}

}  // namespace

std::string to_string(Condition c) { return c == Condition::NoFault ? "no_fault" : "fault"; }

RolloutResult rollout(const PlantParams& plant, Controller& controller, const Scenario& scenario,
                      const RolloutOptions& opts) {
  if (!(scenario.h > 0) || !(scenario.duration > 0)) {
    throw InvalidInput("scenario needs positive duration and step");
  }
  if (scenario.fault) scenario.fault->validate();
  const auto steps = static_cast<Eigen::Index>(std::llround(scenario.duration / scenario.h));
  controller.reset();
  FaultInjector inject(scenario.fault);
  Rng noise(derive_seed(static_cast<std::uint64_t>(scenario.id), "noise"));
  auto* dftc = opts.record_features ? dynamic_cast<DftcController*>(&controller) : nullptr;

  RolloutResult r;
  r.traj.id = scenario.id;
  r.traj.h = scenario.h;
  r.traj.fault = scenario.fault;
  r.traj.resize(steps);
  StateVector x = scenario.initial_condition;
  Eigen::Index k = 0;
  try {
    for (; k < steps; ++k) {
      const double t = static_cast<double>(k) * scenario.h;
      const SensorVector y = inject(measure(x, plant.noise_std, &noise), t);
      ControlInput u;
      if (dftc) {
        Eigen::VectorXd f;
        u = dftc->act(y, &f);
        r.features.push_back(std::move(f));
      } else {
        u = controller.act(y);
      }
      u = saturate(plant, u);
      r.traj.states.row(k) = x.transpose();
      r.traj.inputs.row(k) = u.transpose();
      r.traj.measurements.row(k) = y.transpose();
      if (k + 1 < steps) {
        x = step_rk4(plant, x, u, scenario.h);
        if (std::abs(x[kTheta1]) > opts.divergence_theta ||
            std::abs(x[kTheta2]) > opts.divergence_theta) {
          throw DivergenceError("rollout left the admissible region", x);
        }
      }
    }
  } catch (const DivergenceError&) {
    r.diverged = true;
  } catch (const NumericError&) {
    r.diverged = true;
  }
  if (r.diverged) {
    // Keep the samples recorded before the failure.
    const Eigen::Index kept = std::min(k + 1, steps);
    r.traj.states.conservativeResize(kept, Eigen::NoChange);
    r.traj.inputs.conservativeResize(kept, Eigen::NoChange);
    r.traj.measurements.conservativeResize(kept, Eigen::NoChange);
    r.features.resize(std::min<std::size_t>(r.features.size(), kept));
    r.cost = std::numeric_limits<double>::infinity();
  } else {
    r.cost = trajectory_cost(r.traj, opts.weights);
  }
  return r;
}

bool settling_check(const Trajectory& traj, double tol_theta, double hold) {
  if (traj.length() == 0) return false;
  const auto hold_steps = static_cast<Eigen::Index>(std::llround(hold / traj.h));
  const Eigen::Index first = std::max<Eigen::Index>(0, traj.length() - hold_steps);
  for (Eigen::Index k = first; k < traj.length(); ++k) {
    if (std::abs(traj.states(k, kTheta1)) > tol_theta ||
        std::abs(traj.states(k, kTheta2)) > tol_theta) {
      return false;
    }
  }
  return true;
}

TimingStats timing_stats(Controller& controller, const std::vector<SensorVector>& inputs,
                         int n_calls) {
  if (inputs.empty() || n_calls < 1) throw InvalidInput("timing needs inputs and calls");
  using clock = std::chrono::steady_clock;
  controller.reset();
  for (std::size_t i = 0; i < std::min<std::size_t>(inputs.size(), 10); ++i) {
    controller.act(inputs[i]);
  }
  TimingStats st;
  double total = 0.0;
  for (int i = 0; i < n_calls; ++i) {
    const SensorVector& y = inputs[static_cast<std::size_t>(i) % inputs.size()];
    const auto t0 = clock::now();
    const ControlInput u = controller.act(y);
    const auto t1 = clock::now();
    // Keep the call observable to the optimizer.
    if (!u.allFinite()) throw NumericError("non-finite controller output during timing");
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    total += ms;
    st.worst_ms = std::max(st.worst_ms, ms);
  }
  st.calls = n_calls;
  st.mean_ms = n_calls == 1 ? st.worst_ms : total / n_calls;
  return st;
}

std::vector<Scenario> draw_scenarios(const SuiteConfig& cfg, std::uint64_t seed) {
  if (cfg.n_scenarios < 0) throw InvalidInput("scenario count must be non-negative");
  if (cfg.fault_mix == FaultMix::Single) cfg.fault_distribution.validate(cfg.duration);
  std::vector<Scenario> out;
  out.reserve(cfg.n_scenarios);
  for (std::int64_t i = 0; i < cfg.n_scenarios; ++i) {
    Rng rng(derive_seed(seed, "eval", static_cast<std::uint64_t>(i)));
    Scenario s;
    s.id = i;
    s.initial_condition = cfg.box.sample(rng);
    if (cfg.fault_mix == FaultMix::Single) s.fault = sample_fault(cfg.fault_distribution, cfg.h, rng);
    s.duration = cfg.duration;
    s.h = cfg.h;
    out.push_back(s);
  }
  return out;
}

std::vector<Aggregate> aggregate_rows(const std::vector<std::string>& controllers,
                                      const std::vector<RunRow>& rows) {
  std::vector<Aggregate> out;
  for (const auto& name : controllers) {
    for (Condition c : {Condition::NoFault, Condition::Fault}) {
      Aggregate a;
      a.controller = name;
      a.condition = c;
      double sum = 0.0;
      bool any = false;
      for (const auto& r : rows) {
        if (r.controller != name || r.condition != c) continue;
        any = true;
        if (!r.settled) ++a.unsettled;
        if (r.diverged) {
          ++a.excluded;
          continue;
        }
        ++a.n;
        sum += r.rho;
      }
      if (!any) continue;
      if (a.n > 0) {
        a.mean_rho = sum / static_cast<double>(a.n);
        double ss = 0.0;
        for (const auto& r : rows) {
          if (r.controller == name && r.condition == c && !r.diverged) {
            ss += (r.rho - a.mean_rho) * (r.rho - a.mean_rho);
          }
        }
        a.std_rho = std::sqrt(ss / static_cast<double>(a.n));
      }
      out.push_back(a);
    }
  }
  return out;
}

const Aggregate& EvalReport::aggregate(const std::string& controller, Condition c) const {
  for (const auto& a : aggregates) {
    if (a.controller == controller && a.condition == c) return a;
  }
  throw InvalidInput("no aggregate for " + controller + " / " + to_string(c));
}

EvalReport run_suite(const PlantParams& plant, const LqrGain& baseline_gain,
                     const std::vector<const Controller*>& controllers, const SuiteConfig& cfg,
                     std::uint64_t seed, Execution exec) {
  plant.validate();
  EvalReport report;
  for (const Controller* c : controllers) {
    if (!c) throw InvalidInput("null controller");
    report.controllers.push_back(c->name());
  }
  report.scenarios = draw_scenarios(cfg, seed);
  const auto conditions = conditions_of(cfg);
  const auto n = static_cast<std::int64_t>(report.scenarios.size());
  const std::size_t per_scenario = controllers.size() * conditions.size();
  std::vector<RunRow> rows(static_cast<std::size_t>(n) * per_scenario);
  std::vector<std::exception_ptr> errors(n);

  auto run = [&](std::int64_t i) {
    try {
      const Scenario& sc = report.scenarios[i];
      Scenario clean = sc;
      clean.fault.reset();
      BaselineController reference(baseline_gain, plant.i_max);
      const RolloutResult ref = rollout(plant, reference, clean, cfg.rollout);
      if (ref.diverged) {
        throw DivergenceError("baseline diverged on scenario " + std::to_string(sc.id),
                              sc.initial_condition);
      }
      std::size_t slot = static_cast<std::size_t>(i) * per_scenario;
      for (const Controller* proto : controllers) {
        auto ctrl = proto->clone();
        std::optional<RolloutResult> fault_free;
        for (Condition cond : conditions) {
          const bool faulted = cond == Condition::Fault && !ctrl->fault_free_reference();
          RolloutResult faulted_run;
          if (faulted) {
            faulted_run = rollout(plant, *ctrl, sc, cfg.rollout);
          } else if (!fault_free) {
            fault_free = rollout(plant, *ctrl, clean, cfg.rollout);
          }
          const RolloutResult& r = faulted ? faulted_run : *fault_free;
          RunRow& row = rows[slot++];
          row.controller = ctrl->name();
          row.scenario = sc.id;
          row.condition = cond;
          if (faulted) row.fault = sc.fault;
          row.diverged = r.diverged;
          row.J = r.cost;
          row.rho = r.diverged ? std::numeric_limits<double>::infinity()
                               : normalized(r.cost, ref.cost);
          row.settled = !r.diverged && settling_check(r.traj, cfg.settle_tol, cfg.settle_hold);
          row.max_abs_dphi = r.traj.length() > 0
                                 ? r.traj.states.rightCols(2).cwiseAbs().maxCoeff()
                                 : 0.0;
        }
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) run(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) run(i);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  report.rows = std::move(rows);
  report.aggregates = aggregate_rows(report.controllers, report.rows);
  return report;
}

std::string runs_csv(const EvalReport& report) {
  std::ostringstream os;
  os << kRunsHeader << '\n';
  for (const auto& r : report.rows) {
    os << r.controller << ',' << r.scenario << ',' << to_string(r.condition) << ',';
    if (r.fault) {
      os << r.fault->sensor_index << ',' << to_string(r.fault->mode) << ',';
      if (r.fault->mode == FaultMode::Constant) os << format_double(r.fault->value);
      os << ',' << format_double(r.fault->fault_time) << ',';
    } else {
      os << ",,,,";
    }
    if (!r.diverged) os << format_double(r.J) << ',' << format_double(r.rho);
    else os << ',';
    os << ',' << (r.settled ? 1 : 0) << ',' << format_double(r.max_abs_dphi) << ','
       << (r.diverged ? 1 : 0) << '\n';
  }
  return os.str();
}

std::vector<RunRow> parse_runs_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  long line_no = 1;
  if (!std::getline(is, line) || line != kRunsHeader) {
    throw ParseError("unexpected runs header", line_no);
  }
  std::vector<RunRow> rows;
  std::vector<std::string_view> f;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    csv::split_fields(line, f);
    if (f.size() != 12) throw ParseError("expected 12 columns", line_no);
    RunRow r;
    r.controller = std::string(f[0]);
    r.scenario = csv::parse_int(f[1], line_no);
    if (f[2] == "no_fault") r.condition = Condition::NoFault;
    else if (f[2] == "fault") r.condition = Condition::Fault;
    else throw ParseError("unknown condition '" + std::string(f[2]) + "'", line_no);
    if (!f[3].empty()) {
      FaultSpec spec;
      spec.sensor_index = static_cast<int>(csv::parse_int(f[3], line_no));
      try {
        spec.mode = fault_mode_from_string(std::string(f[4]));
      } catch (const InvalidInput& e) {
        throw ParseError(e.what(), line_no);
      }
      spec.value = f[5].empty() ? 0.0 : csv::parse_double(f[5], line_no);
      spec.fault_time = csv::parse_double(f[6], line_no);
      r.fault = spec;
    }
    r.diverged = csv::parse_int(f[11], line_no) != 0;
    if (r.diverged) {
      r.J = r.rho = std::numeric_limits<double>::infinity();
    } else {
      r.J = csv::parse_double(f[7], line_no);
      r.rho = csv::parse_double(f[8], line_no);
    }
    r.settled = csv::parse_int(f[9], line_no) != 0;
    r.max_abs_dphi = csv::parse_double(f[10], line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string report_json(const EvalReport& report) {
  using nlohmann::json;
  json j;
  j["controllers"] = report.controllers;
  std::vector<std::string> conds;
  for (Condition c : {Condition::NoFault, Condition::Fault}) {
    for (const auto& a : report.aggregates) {
      if (a.condition == c) {
        conds.push_back(to_string(c));
        break;
      }
    }
  }
  j["conditions"] = conds;
  json mean = json::object(), stdv = json::object(), n = json::object(),
       excluded = json::object(), unsettled = json::object();
  for (const auto& a : report.aggregates) {
    const std::string c = to_string(a.condition);
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    mean[a.controller][c] = num(a.mean_rho);
    stdv[a.controller][c] = num(a.std_rho);
    n[a.controller][c] = a.n;
    excluded[a.controller][c] = a.excluded;
    unsettled[a.controller][c] = a.unsettled;
  }
  j["mean_rho"] = mean;
  j["std_rho"] = stdv;
  j["n"] = n;
  j["excluded"] = excluded;
  j["unsettled"] = unsettled;
  j["scenarios"] = report.scenarios.size();
  return j.dump(2) + "\n";
}

void export_report(const EvalReport& report, const std::filesystem::path& dir,
                   const ExportOptions& opts) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
  write_file(dir / "report.json", report_json(report));
  write_file(dir / "runs.csv", runs_csv(report));
  if (!report.timing.empty()) {
    nlohmann::json t = nlohmann::json::object();
    for (std::size_t i = 0; i < report.timing.size() && i < report.controllers.size(); ++i) {
      t[report.controllers[i]] = {{"mean_ms", report.timing[i].mean_ms},
                                  {"worst_ms", report.timing[i].worst_ms},
                                  {"calls", report.timing[i].calls}};
    }
    write_file(dir / "timing.json", t.dump(2) + "\n");
  }
  if (opts.dump_scenarios <= 0) return;
  if (!opts.plant || !opts.controllers || !opts.suite) {
    throw InvalidInput("trajectory export needs plant, controllers and suite config");
  }
  const auto conditions = conditions_of(*opts.suite);
  RolloutOptions ro = opts.suite->rollout;
  ro.record_features = true;
  const auto count =
      std::min<std::size_t>(report.scenarios.size(), static_cast<std::size_t>(opts.dump_scenarios));
  for (std::size_t s = 0; s < count; ++s) {
    const Scenario& sc = report.scenarios[s];
    std::ostringstream os;
    int feature_dim = 0;
    for (const Controller* c : *opts.controllers) {
      if (const auto* d = dynamic_cast<const DftcController*>(c)) {
        feature_dim = std::max(feature_dim, d->model().arch.feature_dim());
      }
    }
    os << "controller,condition,step,t,x1,x2,x3,x4,x5,x6,u1,u2,y1,y2,y3,y4,y5,y6";
    for (int f = 0; f < feature_dim; ++f) os << ",lstm_" << f + 1;
    os << '\n';
    for (const Controller* proto : *opts.controllers) {
      auto ctrl = proto->clone();
      for (Condition cond : conditions) {
        Scenario run = sc;
        if (cond == Condition::NoFault || ctrl->fault_free_reference()) run.fault.reset();
        const RolloutResult r = rollout(*opts.plant, *ctrl, run, ro);
        for (Eigen::Index k = 0; k < r.traj.length(); ++k) {
          os << ctrl->name() << ',' << to_string(cond) << ',' << k << ','
             << format_double(r.traj.time(k));
          for (int i = 0; i < kStateDim; ++i) os << ',' << format_double(r.traj.states(k, i));
          for (int i = 0; i < kInputDim; ++i) os << ',' << format_double(r.traj.inputs(k, i));
          for (int i = 0; i < kSensorCount; ++i) {
            os << ',' << format_double(r.traj.measurements(k, i));
          }
          const auto idx = static_cast<std::size_t>(k);
          for (int f = 0; f < feature_dim; ++f) {
            os << ',';
            if (idx < r.features.size() && f < r.features[idx].size()) {
              os << format_double(r.features[idx][f]);
            }
          }
          os << '\n';
        }
      }
    }
    write_file(dir / ("traj_" + std::to_string(sc.id) + ".csv"), os.str());
  }
}

}  // namespace dftc
