#include "dftc/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "dftc/error.hpp"
#include "dftc/rng.hpp"
#include "csv.hpp"

namespace dftc {

using csv::parse_double;
using csv::parse_int;

namespace {

constexpr double kPi = 3.141592653589793;

}  // namespace

StateVector InitialBox::sample(Rng& rng) const {
  StateVector x;
  x[kTheta1] = rng.uniform(-theta, theta);
  x[kTheta2] = rng.uniform(-theta, theta);
  x[kDTheta1] = rng.uniform(-dtheta, dtheta);
  x[kDTheta2] = rng.uniform(-dtheta, dtheta);
  x[kDPhi1] = rng.uniform(-dphi, dphi);
  x[kDPhi2] = rng.uniform(-dphi, dphi);
  return x;
}

std::int64_t Dataset::count(Split s) const {
  std::int64_t n = 0;
  for (const auto& t : trajectories) n += (t.split == s);
  return n;
}

std::int64_t Dataset::total_points() const {
  std::int64_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

void AugmentationConfig::validate(double duration) const {
  if (copies_per_trajectory < 0) throw InvalidInput("copies per trajectory must be >= 0");
  if (!(fault_window_begin >= 0) || !(fault_window_end >= fault_window_begin)) {
    throw InvalidInput("fault window must satisfy 0 <= begin <= end");
  }
  if (fault_window_end > duration + 1e-12) {
    throw InvalidInput("fault window ends after the trajectory");
  }
}

Trajectory baseline_rollout(const PlantParams& plant, const LqrGain& gain,
                            const StateVector& x0, double h, std::int64_t steps,
                            Rng* noise_rng, double divergence_theta) {
  Trajectory traj;
  traj.h = h;
  traj.resize(steps);
  StateVector x = x0;
  for (std::int64_t k = 0; k < steps; ++k) {
    const ControlInput u = baseline_policy(gain, x, plant.i_max);
    traj.states.row(k) = x.transpose();
    traj.inputs.row(k) = u.transpose();
    traj.measurements.row(k) = measure(x, plant.noise_std, noise_rng).transpose();
    if (k + 1 < steps) {
      x = step_rk4(plant, x, saturate(plant, u), h);
      if (std::abs(x[kTheta1]) > divergence_theta || std::abs(x[kTheta2]) > divergence_theta) {
        throw DivergenceError("rollout left the admissible region", x);
      }
    }
  }
  return traj;
}

Dataset generate_trajectories(const PlantParams& plant, const LqrGain& gain,
                              const GenerationConfig& cfg, std::uint64_t seed,
                              Execution exec) {
  plant.validate();
  if (cfg.n_traj < 0 || cfg.steps < 1 || !(cfg.h > 0)) {
    throw InvalidInput("invalid generation config");
  }
  const std::int64_t n = cfg.n_traj;
  std::vector<Trajectory> slots(n);
  std::vector<char> ok(n, 0);

  auto run = [&](std::int64_t i) {
    Rng rng(derive_seed(seed, "gen", static_cast<std::uint64_t>(i)));
    const StateVector x0 = cfg.box.sample(rng);
    try {
      slots[i] = baseline_rollout(plant, gain, x0, cfg.h, cfg.steps, &rng,
                                  cfg.divergence_theta);
      slots[i].id = i;
      ok[i] = 1;
    } catch (const DivergenceError&) {
      ok[i] = 0;
    }
  };

  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t i = 0; i < n; ++i) run(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) run(i);
  }

  Dataset ds;
  ds.trajectories.reserve(n);
  for (std::int64_t i = 0; i < n; ++i) {
    if (ok[i]) {
      ds.trajectories.push_back(std::move(slots[i]));
    } else {
      ++ds.diverged;
    }
  }
  return ds;
}

FaultSpec sample_fault(const AugmentationConfig& cfg, double h, Rng& rng) {
  FaultSpec f;
  f.sensor_index = static_cast<int>(rng.uniform_int(1, kSensorCount));
  const auto first = static_cast<long>(std::ceil(cfg.fault_window_begin / h - 1e-9));
  const auto last = static_cast<long>(std::floor(cfg.fault_window_end / h + 1e-9));
  f.fault_time = static_cast<double>(rng.uniform_int(first, last)) * h;
  if (f.sensor_index <= 2) {
    switch (rng.uniform_int(0, 2)) {
      case 0:
        f.mode = FaultMode::HoldLast;
        break;
      case 1:
        f.mode = FaultMode::Zero;
        break;
      default:
        f.mode = FaultMode::Constant;
        f.value = rng.uniform(-kPi, kPi);
        break;
    }
  } else {
    f.mode = FaultMode::Zero;
  }
  return f;
}

Trajectory inject_fault(const Trajectory& parent, const FaultSpec& fault, std::int64_t id) {
  fault.validate();
  Trajectory t = parent;
  t.id = id;
  t.fault = fault;
  t.split = parent.split;
  FaultInjector inject(fault);
  for (Eigen::Index k = 0; k < t.length(); ++k) {
    const SensorVector y = parent.measurements.row(k).transpose();
    t.measurements.row(k) = inject(y, t.time(k)).transpose();
  }
  return t;
}

Dataset augment(const Dataset& ds, const AugmentationConfig& cfg, std::uint64_t seed,
                Execution exec) {
  for (const auto& t : ds.trajectories) {
    if (t.fault) throw InvalidInput("augment expects fault-free trajectories only");
  }
  Dataset out = ds;
  if (cfg.copies_per_trajectory == 0 || ds.trajectories.empty()) return out;

  std::int64_t next_id = 0;
  double duration = std::numeric_limits<double>::infinity();
  for (const auto& t : ds.trajectories) {
    next_id = std::max(next_id, t.id + 1);
    duration = std::min(duration, t.time(t.length() - 1));
  }
  cfg.validate(duration);

  const auto n = static_cast<std::int64_t>(ds.trajectories.size());
  const std::int64_t copies = cfg.copies_per_trajectory;
  std::vector<Trajectory> extra(n * copies);

  auto run = [&](std::int64_t i) {
    const Trajectory& parent = ds.trajectories[i];
    for (std::int64_t c = 0; c < copies; ++c) {
      const std::int64_t slot = i * copies + c;
      Rng rng(derive_seed(seed, "augment", static_cast<std::uint64_t>(slot)));
      extra[slot] = inject_fault(parent, sample_fault(cfg, parent.h, rng), next_id + slot);
    }
  };

  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t i = 0; i < n; ++i) run(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) run(i);
  }

  out.trajectories.reserve(n * (1 + copies));
  for (auto& t : extra) out.trajectories.push_back(std::move(t));
  return out;
}

namespace {

std::uint64_t fingerprint(const StateSeries& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(s.data());
  const std::size_t n = static_cast<std::size_t>(s.size()) * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Normalizer compute_normalizer(const Dataset& ds) {
  Normalizer norm;
  std::int64_t count = 0;
  SensorVector sum = SensorVector::Zero();
  for (const auto& t : ds.trajectories) {
    if (t.split != Split::Train) continue;
    sum += t.measurements.colwise().sum().transpose();
    count += t.length();
  }
  if (count == 0) return norm;
  norm.mean = sum / static_cast<double>(count);
  SensorVector sq = SensorVector::Zero();
  for (const auto& t : ds.trajectories) {
    if (t.split != Split::Train) continue;
    sq += (t.measurements.rowwise() - norm.mean.transpose())
              .array()
              .square()
              .colwise()
              .sum()
              .matrix()
              .transpose();
  }
  for (int c = 0; c < kSensorCount; ++c) {
    const double s = std::sqrt(sq[c] / static_cast<double>(count));
    norm.std[c] = (s > 1e-12 && std::isfinite(s)) ? s : 1.0;
  }
  return norm;
}

Dataset split(const Dataset& ds, std::uint64_t seed) {
  if (ds.trajectories.size() < 10) {
    throw InvalidInput("split needs at least 10 trajectories");
  }
  // Augmented copies carry their parent's states bit for bit; group by them.
  std::vector<std::size_t> group_of(ds.trajectories.size());
  std::vector<std::size_t> representative;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const StateSeries& s = ds.trajectories[i].states;
    auto& bucket = buckets[fingerprint(s)];
    bool found = false;
    for (std::size_t g : bucket) {
      const StateSeries& r = ds.trajectories[representative[g]].states;
      if (r.rows() == s.rows() && r == s) {
        group_of[i] = g;
        found = true;
        break;
      }
    }
    if (!found) {
      group_of[i] = representative.size();
      bucket.push_back(representative.size());
      representative.push_back(i);
    }
  }

  const auto groups = static_cast<long>(representative.size());
  std::vector<long> order(groups);
  for (long g = 0; g < groups; ++g) order[g] = g;
  Rng rng(derive_seed(seed, "split"));
  for (long i = groups - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);

  const long n_val = std::llround(0.1 * static_cast<double>(groups));
  const long n_test = n_val;
  const long n_train = groups - n_val - n_test;
  std::vector<Split> assignment(groups);
  for (long r = 0; r < groups; ++r) {
    assignment[order[r]] = r < n_train ? Split::Train
                           : r < n_train + n_val ? Split::Val
                                                 : Split::Test;
  }

  Dataset out = ds;
  for (std::size_t i = 0; i < out.trajectories.size(); ++i) {
    out.trajectories[i].split = assignment[group_of[i]];
  }
  out.normalizer = compute_normalizer(out);
  return out;
}

std::vector<SampleWindow> window_samples(const Trajectory& traj, int m) {
  if (m < 1) throw InvalidInput("window length must be positive");
  if (traj.length() < m) throw InvalidInput("trajectory shorter than the window");
  std::vector<SampleWindow> out;
  out.reserve(traj.length() - m + 1);
  for (Eigen::Index k = m - 1; k < traj.length(); ++k) {
    SampleWindow w;
    w.window = traj.measurements.middleRows(k - m + 1, m);
    w.target = traj.inputs.row(k).transpose();
    out.push_back(std::move(w));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace {

constexpr int kColumns = 22;

const char* kHeader =
    "traj_id,step,t,x1,x2,x3,x4,x5,x6,u1,u2,y1,y2,y3,y4,y5,y6,"
    "fault_sensor,fault_mode,fault_value,fault_time,split";

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write dataset file " + path.string());
  os << kHeader << '\n';
  std::string line;
  for (const auto& t : ds.trajectories) {
    std::string fault_cols = ",,,";
    if (t.fault) {
      fault_cols = std::to_string(t.fault->sensor_index) + ',' + to_string(t.fault->mode) + ',' +
                   (t.fault->mode == FaultMode::Constant ? format_double(t.fault->value) : "") +
                   ',' + format_double(t.fault->fault_time);
    }
    const std::string split_col = to_string(t.split);
    for (Eigen::Index k = 0; k < t.length(); ++k) {
      line.clear();
      line += std::to_string(t.id);
      line += ',';
      line += std::to_string(k);
      line += ',';
      line += format_double(t.time(k));
      for (int i = 0; i < kStateDim; ++i) {
        line += ',';
        line += format_double(t.states(k, i));
      }
      for (int i = 0; i < kInputDim; ++i) {
        line += ',';
        line += format_double(t.inputs(k, i));
      }
      for (int i = 0; i < kSensorCount; ++i) {
        line += ',';
        line += format_double(t.measurements(k, i));
      }
      line += ',';
      line += fault_cols;
      line += ',';
      line += split_col;
      line += '\n';
      os << line;
    }
  }
  if (!os) throw IoError("failed writing dataset file " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read dataset file " + path.string());
  std::string line;
  long line_no = 1;
  if (!std::getline(is, line)) throw ParseError("empty dataset file", line_no);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw ParseError("unexpected dataset header", line_no);

  struct Rows {
    std::vector<double> states, inputs, meas;
    std::vector<double> times;
  };
  Dataset ds;
  Rows cur;
  Trajectory head;
  bool open = false;

  auto flush = [&]() {
    if (!open) return;
    const auto n = static_cast<Eigen::Index>(cur.times.size());
    head.resize(n);
    head.states = Eigen::Map<const StateSeries>(cur.states.data(), n, kStateDim);
    head.inputs = Eigen::Map<const InputSeries>(cur.inputs.data(), n, kInputDim);
    head.measurements = Eigen::Map<const StateSeries>(cur.meas.data(), n, kSensorCount);
    head.h = n > 1 ? cur.times[1] : 0.01;
    ds.trajectories.push_back(std::move(head));
    head = Trajectory{};
    cur = Rows{};
    open = false;
  };

  std::vector<std::string_view> fields;
  fields.reserve(kColumns);
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    csv::split_fields(line, fields);
    if (fields.size() != kColumns) {
      throw ParseError("expected " + std::to_string(kColumns) + " columns, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    const std::int64_t id = parse_int(fields[0], line_no);
    const std::int64_t step = parse_int(fields[1], line_no);
    if (!open || id != head.id) {
      flush();
      open = true;
      head.id = id;
      if (!fields[17].empty()) {
        FaultSpec f;
        f.sensor_index = static_cast<int>(parse_int(fields[17], line_no));
        try {
          f.mode = fault_mode_from_string(std::string(fields[18]));
        } catch (const InvalidInput& e) {
          throw ParseError(e.what(), line_no);
        }
        f.value = fields[19].empty() ? 0.0 : parse_double(fields[19], line_no);
        f.fault_time = parse_double(fields[20], line_no);
        head.fault = f;
      }
      try {
        head.split = split_from_string(std::string(fields[21]));
      } catch (const InvalidInput& e) {
        throw ParseError(e.what(), line_no);
      }
    }
    if (step != static_cast<std::int64_t>(cur.times.size())) {
      throw ParseError("steps must be consecutive within a trajectory", line_no);
    }
    cur.times.push_back(parse_double(fields[2], line_no));
    for (int i = 0; i < kStateDim; ++i) cur.states.push_back(parse_double(fields[3 + i], line_no));
    for (int i = 0; i < kInputDim; ++i) cur.inputs.push_back(parse_double(fields[9 + i], line_no));
    for (int i = 0; i < kSensorCount; ++i) cur.meas.push_back(parse_double(fields[11 + i], line_no));
  }
  flush();
  ds.normalizer = compute_normalizer(ds);
  return ds;
}

}  // namespace dftc
