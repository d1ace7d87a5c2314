// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance [work_dir]

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>
#include <json.hpp>

#include "dftc/cli.hpp"
#include "dftc/error.hpp"
#include "dftc/eval.hpp"
#include "dftc/nn.hpp"
#include "dftc/observability.hpp"
#include "dftc/rng.hpp"

namespace fs = std::filesystem;
using namespace dftc;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- 1: LTI Gramian oracle ------------------------------------------------

Outcome gramian_oracle() {
  const auto t0 = clock_type::now();
  Eigen::Matrix2d A;
  A << 0, 1, -1, -1;
  const Eigen::RowVector2d C(1, 0);
  const double T = 10.0, h = 1e-3, eps = 1e-3;
  const long nodes = std::lround(T / h) + 1;

  // Probes integrated with RK4 of the linear system.
  const ProbeSimulator sim = [&](const Eigen::VectorXd& x0) {
    Eigen::MatrixXd y(nodes, 1);
    Eigen::Vector2d x = x0;
    for (long k = 0; k < nodes; ++k) {
      y(k, 0) = C * x;
      const Eigen::Vector2d k1 = A * x, k2 = A * (x + 0.5 * h * k1), k3 = A * (x + 0.5 * h * k2),
                            k4 = A * (x + h * k3);
      x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return y;
  };
  const Eigen::MatrixXd W =
      channel_gramians(sim, {Eigen::VectorXd::Zero(2)}, eps, h).combine({1});

  // Composite Simpson on exp(A^T t) C^T C exp(A t) at h/100.
  const long n = std::lround(T / (h / 100));
  const double dt = T / n;
  Eigen::Matrix2d ref = Eigen::Matrix2d::Zero();
  const Eigen::Matrix2d step = (A * dt).exp();
  Eigen::Matrix2d E = Eigen::Matrix2d::Identity();
  for (long k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    ref += w * E.transpose() * C.transpose() * C * E;
    E = step * E;
  }
  ref *= dt / 3;
  const double rel = (W - ref).norm() / ref.norm();
  const double J = observability_measure(W);
  const double J_ref = std::log(ref.determinant());
  const double dJ = std::abs(J - J_ref);
  const double secs = seconds_since(t0);
  return {rel < 1e-4 && dJ < 1e-4 && secs < 5.0,
          fmt("rel Frobenius error %.3g, |dJ| %.3g, %.2f s", rel, dJ, secs)};
}

// ---- 2: sensor ranking pattern ---------------------------------------------

Outcome ranking_pattern() {
  const auto t0 = clock_type::now();
  const RunConfig cfg;
  const LqrGain gain = design_baseline(cfg.plant, cfg.baseline.weights, cfg.baseline.h);
  GramianConfig g;
  g.epsilon = cfg.gramian.epsilon;
  g.horizon = cfg.gramian.horizon;
  g.step = cfg.gramian.step;
  g.control_period = cfg.gramian.control_period;
  g.probe_policy = cfg.gramian.probe_policy;
  g.base_points = default_base_points(static_cast<std::size_t>(cfg.gramian.base_points),
                                      derive_seed(cfg.seed, "gramian"));
  std::vector<SensorConfig> configs = single_fault_configs();
  for (int a = 1; a <= 6; ++a) {
    for (int b = a + 1; b <= 6; ++b) configs.push_back(SensorConfig{{a, b}});
  }
  const auto rows = rank_configurations(cfg.plant, configs, g, &gain);

  double full = NAN, worst_five = INFINITY, best_pair = -INFINITY;
  std::string worst_five_name, best_pair_name;
  bool singles_ok = true;
  int singles = 0, pairs = 0;
  for (const auto& r : rows) {
    if (r.config.active.size() == 6) full = r.observable ? r.J : NAN;
  }
  for (const auto& r : rows) {
    if (r.config.active.size() == 5) {
      ++singles;
      singles_ok = singles_ok && r.observable && r.J <= full;
      if (!r.observable || r.J < worst_five) {
        worst_five = r.observable ? r.J : -INFINITY;
        worst_five_name = r.config.label();
      }
    } else if (r.config.active.size() == 2) {
      ++pairs;
      if (r.J > best_pair) {  // -inf when unobservable
        best_pair = r.J;
        best_pair_name = r.config.label();
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = std::isfinite(full) && singles == 6 && singles_ok && pairs == 15 &&
                    best_pair < worst_five && secs < 120.0;
  return {pass, fmt("J_full %.4f, min five-sensor J %.4f %s, best two-sensor J %.4f %s, %.1f s",
                    full, worst_five, worst_five_name.c_str(), best_pair, best_pair_name.c_str(),
                    secs)};
}

// ---- 3: integrator order and energy ----------------------------------------

using LD = long double;
using LState = std::array<LD, 6>;

LState oracle_rhs(const PlantParams& p, const LState& x, const std::array<LD, 2>& u) {
  LState d{};
  for (int a = 0; a < 2; ++a) {
    const LD th = x[a], dth = x[2 + a], dph = x[4 + a], tau = (LD)p.k_T * u[a];
    const LD dd = ((LD)p.ml * p.g * std::sin(th) - (LD)p.k_s * th - (LD)p.b_th * dth - tau +
                   (LD)p.b_ph * dph) /
                  (LD)p.I_p;
    d[a] = dth;
    d[2 + a] = dd;
    d[4 + a] = (tau - (LD)p.b_ph * dph) / (LD)p.I_w - dd;
  }
  return d;
}

LState oracle_flow(const PlantParams& p, LState x, const std::array<LD, 2>& u, LD h, long n) {
  auto axpy = [](const LState& x, LD a, const LState& k) {
    LState r;
    for (int i = 0; i < 6; ++i) r[i] = x[i] + a * k[i];
    return r;
  };
  for (long s = 0; s < n; ++s) {
    const LState k1 = oracle_rhs(p, x, u), k2 = oracle_rhs(p, axpy(x, h / 2, k1), u),
                 k3 = oracle_rhs(p, axpy(x, h / 2, k2), u), k4 = oracle_rhs(p, axpy(x, h, k3), u);
    for (int i = 0; i < 6; ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return x;
}

double energy(const PlantParams& p, const StateVector& x) {
  double e = 0;
  for (int a = 0; a < 2; ++a) {
    const double th = x[a], dth = x[2 + a], dph = x[4 + a];
    e += 0.5 * p.I_p * dth * dth + 0.5 * p.I_w * (dth + dph) * (dth + dph) +
         0.5 * p.k_s * th * th + p.ml * p.g * (std::cos(th) - 1.0);
  }
  return e;
}

Outcome integrator_order() {
  const PlantParams p;
  const double T = 1.0;
  StateVector x0;
  x0 << 0.3, -0.2, 1.0, -0.5, 5.0, -3.0;
  const ControlInput u(0.5, -0.3);
  LState lx0;
  for (int i = 0; i < 6; ++i) lx0[i] = x0[i];
  const LState ref = oracle_flow(p, lx0, {0.5L, -0.3L}, 1e-5L, 100000);

  const std::vector<double> hs{1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4};
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (double h : hs) {
    StateVector x = x0;
    const long n = std::lround(T / h);
    for (long k = 0; k < n; ++k) x = step_rk4(p, x, u, h);
    double err = 0;
    for (int i = 0; i < 6; ++i) err = std::max(err, (double)std::abs((LD)x[i] - ref[i]));
    sx += std::log(h);
    sy += std::log(err);
    sxx += std::log(h) * std::log(h);
    sxy += std::log(h) * std::log(err);
  }
  const double m = static_cast<double>(hs.size());
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);

  PlantParams lossless;
  lossless.b_th = 0;
  lossless.b_ph = 0;
  StateVector x = x0;
  const double e0 = energy(lossless, x);
  double drift = 0;
  for (int k = 0; k < 4000; ++k) {
    x = step_rk4(lossless, x, ControlInput::Zero(), 1e-3);
    drift = std::max(drift, std::abs(energy(lossless, x) - e0) / std::abs(e0));
  }
  return {std::abs(slope - 4.0) <= 0.2 && drift < 1e-6,
          fmt("slope %.3f over h 1e-2..1e-4, relative energy drift %.3g", slope, drift)};
}

// ---- 4: Riccati ------------------------------------------------------------

Outcome riccati() {
  const LqrGain scalar = solve_riccati(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1),
                                       Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), 1e-15,
                                       1000000);
  const double golden = (1 + std::sqrt(5.0)) / 2;
  const double dP = std::abs(scalar.P(0, 0) - golden);

  const RunConfig cfg;
  const LqrGain g = design_baseline(cfg.plant, cfg.baseline.weights, cfg.baseline.h,
                                    cfg.baseline.tol, cfg.baseline.max_iter);
  BaselineController c(g, cfg.plant.i_max);
  Scenario sc;
  sc.initial_condition[0] = 0.2;
  const RolloutResult r = rollout(cfg.plant, c, sc);
  const double final_theta =
      r.traj.states.bottomRows(1).leftCols(2).cwiseAbs().maxCoeff();
  const bool pass = dP < 1e-12 && g.residual < 1e-10 && g.spectral_radius < 1.0 &&
                    !r.diverged && final_theta < 1e-3;
  return {pass, fmt("|P - phi| %.2g, residual %.2g, spectral radius %.5f, |theta(4 s)| %.2g", dP,
                    g.residual, g.spectral_radius, final_theta)};
}

// ---- 5: gradient exactness -------------------------------------------------

// Signs of every hidden FC pre-activation over the batch. Central differences
// are only meaningful when both stencil points share the base pattern.
std::vector<bool> relu_pattern(const nn::ModelParams& mp, const std::vector<SampleWindow>& ws) {
  std::vector<bool> out;
  for (const auto& w : ws) {
    Eigen::VectorXd a = nn::model_forward_traced(mp, w.window).features;
    for (int l = 0; l + 1 < mp.layout.dense_count(); ++l) {
      const Eigen::VectorXd z =
          mp.view(mp.layout.dense_weight(l)) * a + mp.view(mp.layout.dense_bias(l)).col(0);
      for (Eigen::Index i = 0; i < z.size(); ++i) out.push_back(z[i] > 0);
      a = z.cwiseMax(0.0);
    }
  }
  return out;
}

Outcome gradient_exactness() {
  const auto t0 = clock_type::now();
  const double delta = 1e-5, floor = 1e-6, lambda = 1e-3;
  double worst = 0;
  std::string worst_slot;
  int checked = 0, kink_skips = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Normalizer norm;
    norm.mean << 0.0, 0.0, 0.0, 0.0, 2.0, -2.0;
    norm.std << 0.3, 0.3, 2.5, 2.5, 110.0, 110.0;
    nn::ModelParams mp = nn::init_model(nn::Architecture::dftc(), norm, 100 + seed);
    std::vector<SampleWindow> windows;
    for (int s = 0; s < 6; ++s) {
      StateSeries w(10, 6);
      for (int t = 0; t < 10; ++t) {
        for (int c = 0; c < 6; ++c) w(t, c) = norm.mean[c] + norm.std[c] * rng.normal();
      }
      windows.push_back({w, ControlInput(rng.uniform(-5, 5), rng.uniform(-5, 5))});
    }
    const nn::PackedBatch b = nn::pack_windows(mp, windows);
    std::vector<double> grad;
    nn::batch_gradient(mp, b, lambda, grad, Execution::Serial);
    auto objective = [&] {
      return nn::regularized_loss(
          nn::loss(nn::batch_forward(mp, b.inputs, Execution::Serial), b.targets), mp, lambda,
          b.size());
    };
    for (const nn::Slot& s : mp.layout.slots()) {
      // Largest-magnitude entry of the slot plus random ones.
      std::vector<Eigen::Index> picks;
      Eigen::Index arg = 0;
      for (Eigen::Index i = 1; i < s.size(); ++i) {
        if (std::abs(grad[s.offset + i]) > std::abs(grad[s.offset + arg])) arg = i;
      }
      picks.push_back(arg);
      for (int k = 0; k < 4; ++k) picks.push_back(rng.uniform_int(0, s.size() - 1));
      const std::vector<bool> base = relu_pattern(mp, windows);
      for (std::size_t p = 0; p < picks.size(); ++p) {
        const Eigen::Index i = picks[p];
        double& v = mp.values[s.offset + i];
        const double keep = v;
        v = keep + delta;
        const double up = objective();
        const bool up_same = relu_pattern(mp, windows) == base;
        v = keep - delta;
        const double down = objective();
        const bool down_same = relu_pattern(mp, windows) == base;
        v = keep;
        if (!up_same || !down_same) {
          // Stencil straddles a ReLU kink; draw another entry instead.
          ++kink_skips;
          if (kink_skips < 1000) picks.push_back(rng.uniform_int(0, s.size() - 1));
          continue;
        }
        ++checked;
        const double fd = (up - down) / (2 * delta);
        const double g = grad[s.offset + i];
        const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), floor});
        if (rel > worst) {
          worst = rel;
          worst_slot = s.name;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          fmt("max relative error %.3g (%s), %d entries over all slots and 5 seeds, %d "
              "kink-straddling stencils redrawn, %.1f s",
              worst, worst_slot.c_str(), checked, kink_skips, secs)};
}

// ---- 6: dataset counts -----------------------------------------------------

Outcome dataset_counts() {
  const RunConfig cfg;
  const LqrGain g = design_baseline(cfg.plant, cfg.baseline.weights, cfg.baseline.h);
  GenerationConfig gen = cfg.dataset;
  gen.n_traj = 4500;
  const Dataset big = generate_trajectories(cfg.plant, g, gen, derive_seed(cfg.seed, "gen"));
  const Dataset big_aug = augment(big, cfg.augment, derive_seed(cfg.seed, "augment"));
  const Dataset desk = generate_trajectories(cfg.plant, g, cfg.dataset, derive_seed(cfg.seed, "gen"));
  const Dataset desk_aug = augment(desk, cfg.augment, derive_seed(cfg.seed, "augment"));
  bool windows_ok = true;
  for (const auto& t : desk_aug.trajectories) {
    windows_ok = windows_ok && window_samples(t, 10).size() == 391;
  }
  const bool pass = big.total_points() == 1'800'000 &&
                    static_cast<std::int64_t>(big_aug.trajectories.size()) == 13500 &&
                    static_cast<std::int64_t>(desk_aug.trajectories.size()) == 900 && windows_ok;
  return {pass, fmt("4500 -> %lld points, %zu trajectories; 300 -> %zu; 391 windows each: %s",
                    static_cast<long long>(big.total_points()), big_aug.trajectories.size(),
                    desk_aug.trajectories.size(), windows_ok ? "yes" : "no")};
}

// ---- 7-9: desk pipeline ----------------------------------------------------

struct Curve {
  std::vector<double> train, val;
};

Curve read_curve(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);
  Curve c;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string e, t, v;
    std::getline(row, e, ',');
    std::getline(row, t, ',');
    std::getline(row, v, ',');
    c.train.push_back(std::stod(t));
    c.val.push_back(std::stod(v));
  }
  return c;
}

struct DeskRun {
  bool ok = false;
  std::string error;
  double seconds = 0;
  fs::path dir;
};

DeskRun run_desk_pipeline(const fs::path& dir) {
  DeskRun run;
  run.dir = dir;
  RunConfig cfg;
  cfg.paths.out = dir;
  std::ofstream log(dir.string() + ".log");
  const auto t0 = clock_type::now();
  try {
    run.ok = cli::cmd_pipeline(cfg, false, false, log) == 0;
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = seconds_since(t0);
  return run;
}

Outcome training_convergence(const DeskRun& desk) {
  if (!desk.ok) return {false, "desk pipeline failed: " + desk.error};
  const Curve c = read_curve(desk.dir / "dftc_curve.csv");
  const std::size_t n = c.val.size();
  bool finite = n > 0;
  for (std::size_t i = 0; i < n; ++i) finite = finite && std::isfinite(c.val[i]) && std::isfinite(c.train[i]);
  // Trend: means over consecutive 5-epoch blocks strictly decrease.
  bool trend = n >= 10;
  double prev = INFINITY;
  for (std::size_t b = 0; b + 5 <= n; b += 5) {
    double m = 0;
    for (std::size_t i = b; i < b + 5; ++i) m += c.val[i];
    m /= 5;
    trend = trend && m < prev;
    prev = m;
  }
  const double ratio = finite ? c.val.back() / c.val.front() : NAN;
  const bool desk_pass = finite && n == 40 && trend && ratio < 0.3;

  // Full schedule hyperparameters on a per-epoch subset of the desk data.
  const auto t0 = clock_type::now();
  std::string long_note;
  bool long_pass = false;
  try {
    const Dataset ds = load_dataset(desk.dir / "dataset.csv");
    const nn::TrainingData td(ds, 10);
    nn::TrainConfig full;
    full.epochs = 200;
    full.batch_size = 1024;
    full.lr = 1e-3;
    full.lr_drop_epoch = 100;
    full.lr_after_drop = 5e-4;
    full.lambda = 1e-3;
    full.samples_per_epoch = 2048;
    full.val_samples = 2048;
    full.seed = 3;
    const nn::TrainResult r =
        nn::train(nn::init_model(nn::Architecture::dftc(), ds.normalizer, 3), td, full);
    long_pass = r.curve.size() == 200 && std::isfinite(r.curve.back().val_loss);
    long_note = fmt("full schedule 200 epochs: val %.4f -> %.4f (%.0f s)", r.curve.front().val_loss,
                     r.curve.back().val_loss, seconds_since(t0));
  } catch (const std::exception& e) {
    long_note = std::string("full schedule failed: ") + e.what();
  }
  return {desk_pass && long_pass,
          fmt("desk val %.4f -> %.4f (ratio %.3f, %zu epochs, block trend %s); ", c.val.front(),
              c.val.back(), ratio, n, trend ? "decreasing" : "not decreasing") +
              long_note};
}

Outcome ftc_pattern(const DeskRun& desk) {
  if (!desk.ok) return {false, "desk pipeline failed: " + desk.error};
  const auto j = nlohmann::json::parse(read_file(desk.dir / "eval" / "report.json"));
  auto mean = [&](const char* c, const char* cond) { return j["mean_rho"][c][cond].get<double>(); };
  auto unsettled_frac = [&](const char* c) {
    const double u = j["unsettled"][c]["fault"].get<double>();
    const double total = j["n"][c]["fault"].get<double>() + j["excluded"][c]["fault"].get<double>();
    return u / total;
  };
  const double d_nf = mean("dftc", "no_fault"), d_f = mean("dftc", "fault"),
               f_f = mean("fnn", "fault");
  const double fu = unsettled_frac("fnn"), du = unsettled_frac("dftc");
  const bool a = d_nf <= 1.5, b = d_f <= 1.5;
  const bool c = f_f >= 1.5 * d_f || (fu >= 0.2 && du <= 0.05);
  const bool time_ok = desk.seconds < 900.0;
  return {a && b && c && time_ok,
          fmt("rho_dftc no_fault %.3f, fault %.3f; rho_fnn fault %.3f; unsettled under fault "
              "fnn %.0f%%, dftc %.0f%%; pipeline %.0f s",
              d_nf, d_f, f_f, 100 * fu, 100 * du, desk.seconds)};
}

Outcome realtime(const DeskRun& desk) {
  if (!desk.ok) return {false, "desk pipeline failed: " + desk.error};
  const auto j = nlohmann::json::parse(read_file(desk.dir / "eval" / "timing.json"));
  const double d = j["dftc"]["mean_ms"].get<double>(), dw = j["dftc"]["worst_ms"].get<double>();
  const double f = j["fnn"]["mean_ms"].get<double>();
  return {d < 10.0 && f < d,
          fmt("dftc mean %.3f ms (worst %.3f ms), fnn mean %.4f ms", d, dw, f)};
}

// ---- 10: determinism -------------------------------------------------------

Outcome determinism(const fs::path& work) {
  RunConfig cfg;
  cfg.dataset.n_traj = 30;
  cfg.train.epochs = 3;
  cfg.train.samples_per_epoch = 2048;
  cfg.train.val_samples = 1024;
  cfg.fnn.epochs = 3;
  cfg.fnn.samples_per_epoch = 2048;
  cfg.fnn.val_samples = 1024;
  cfg.eval.suite.n_scenarios = 10;
  cfg.eval.timing_calls = 10;
  const std::vector<std::string> files{"dataset_raw.csv", "dataset_aug.csv", "dataset.csv",
                                       "gain.json",       "dftc_model.json", "dftc_curve.csv",
                                       "fnn_model.json",  "fnn_curve.csv",   "eval/report.json",
                                       "eval/runs.csv",   "eval/traj_0.csv"};
  std::vector<std::vector<std::string>> contents;
  for (const char* name : {"det_a", "det_b"}) {
    cfg.paths.out = work / name;
    fs::remove_all(cfg.paths.out);
    std::ostringstream log;
    if (cli::cmd_pipeline(cfg, false, true, log) != 0) return {false, "small pipeline failed"};
    contents.emplace_back();
    for (const auto& f : files) contents.back().push_back(read_file(cfg.paths.out / f));
  }
  std::string differ;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (contents[0][i] != contents[1][i]) differ += " " + files[i];
  }
  return {differ.empty(), differ.empty()
                              ? fmt("%zu output files byte-identical across reruns", files.size())
                              : "differing:" + differ};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "dftc_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int n, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "CRITERION " << n << ' ' << (o.pass ? "PASS" : "FAIL") << ": " << o.detail
              << std::endl;
  };

  report(1, gramian_oracle);
  report(2, ranking_pattern);
  report(3, integrator_order);
  report(4, riccati);
  report(5, gradient_exactness);
  report(6, dataset_counts);
  const DeskRun desk = run_desk_pipeline(work / "desk");
  report(7, [&] { return training_convergence(desk); });
  report(8, [&] { return ftc_pattern(desk); });
  report(9, [&] { return realtime(desk); });
  report(10, [&] { return determinism(work); });
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : fmt("%d CRITERIA FAIL", failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
