#include "dftc/cli.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dftc/error.hpp"
#include "dftc/eval.hpp"
#include "dftc/policy.hpp"
#include "dftc/rng.hpp"

namespace dftc::cli {

namespace {

using clock = std::chrono::steady_clock;

double seconds_since(clock::time_point t0) {
  return std::chrono::duration<double>(clock::now() - t0).count();
}

void prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.paths.out, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.paths.out.string());
  std::ofstream os(cfg.paths.out / "config.json", std::ios::binary);
  if (!os) throw IoError("cannot write " + (cfg.paths.out / "config.json").string());
  os << config_to_json(cfg);
}

std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i].push_back(m(i, j));
  }
  return out;
}

LqrGain design(const RunConfig& cfg) {
  return design_baseline(cfg.plant, cfg.baseline.weights, cfg.baseline.h, cfg.baseline.tol,
                         cfg.baseline.max_iter);
}

std::int64_t window_count(const Dataset& ds, int m) {
  std::int64_t n = 0;
  for (const auto& t : ds.trajectories) n += std::max<Eigen::Index>(0, t.length() - m + 1);
  return n;
}

void report_counts(const Dataset& ds, const RunConfig& cfg, std::ostream& log) {
  log << "  trajectories " << ds.trajectories.size() << ", points " << ds.total_points()
      << ", windows " << window_count(ds, cfg.arch.window) << '\n';
}

}  // namespace

RunConfig resolve_config(const Options& opts) {
  RunConfig cfg = opts.config.empty() ? config_from_json("", opts.sets)
                                      : load_config(opts.config, opts.sets);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out) cfg.paths.out = *opts.out;
  return cfg;
}

int cmd_gramian(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = clock::now();
  prepare_out(cfg);
  GramianConfig g;
  g.epsilon = cfg.gramian.epsilon;
  g.horizon = cfg.gramian.horizon;
  g.step = cfg.gramian.step;
  g.control_period = cfg.gramian.control_period;
  g.probe_policy = cfg.gramian.probe_policy;
  g.base_points = default_base_points(static_cast<std::size_t>(cfg.gramian.base_points),
                                      derive_seed(cfg.seed, "gramian"));
  std::optional<LqrGain> gain;
  if (g.probe_policy == ProbePolicy::ClosedLoopBaseline) gain = design(cfg);
  auto configs = single_fault_configs();
  configs.insert(configs.end(), cfg.gramian.extra_configs.begin(),
                 cfg.gramian.extra_configs.end());
  const auto rows = rank_configurations(cfg.plant, configs, g, gain ? &*gain : nullptr);
  const std::string table = ranking_csv(rows);
  std::ofstream os(cfg.paths.resolve(cfg.paths.ranking), std::ios::binary);
  if (!os) throw IoError("cannot write ranking " + cfg.paths.resolve(cfg.paths.ranking).string());
  os << table;
  log << table;
  bool violated = false;
  for (const auto& r : rows) {
    const bool required = r.config.active.size() + 1 >= static_cast<std::size_t>(kSensorCount);
    if (!r.observable && required) violated = true;
  }
  log << "gramian: " << rows.size() << " configurations in " << std::fixed
      << std::setprecision(2) << seconds_since(t0) << " s\n";
  if (violated) {
    log << "gramian: a required sensor configuration is unobservable\n";
    return kDomain;
  }
  return kOk;
}

int cmd_gen(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = clock::now();
  prepare_out(cfg);
  const LqrGain gain = design(cfg);
  const nlohmann::json gj = {{"K", rows_of(gain.K)},
                             {"P", rows_of(gain.P)},
                             {"residual", gain.residual},
                             {"spectral_radius", gain.spectral_radius},
                             {"iterations", gain.iterations}};
  {
    std::ofstream os(cfg.paths.resolve(cfg.paths.gain), std::ios::binary);
    if (!os) throw IoError("cannot write " + cfg.paths.resolve(cfg.paths.gain).string());
    os << gj.dump(2) << '\n';
  }
  const Dataset ds = generate_trajectories(cfg.plant, gain, cfg.dataset, derive_seed(cfg.seed, "gen"));
  save_dataset(ds, cfg.paths.resolve(cfg.paths.raw));
  log << "gen: baseline residual " << gain.residual << ", spectral radius "
      << gain.spectral_radius << '\n';
  report_counts(ds, cfg, log);
  log << "  diverged (excluded) " << ds.diverged << '\n';
  log << "gen: " << std::fixed << std::setprecision(2) << seconds_since(t0) << " s\n";
  return kOk;
}

int cmd_augment(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = clock::now();
  prepare_out(cfg);
  const Dataset raw = load_dataset(cfg.paths.resolve(cfg.paths.raw));
  const Dataset ds = augment(raw, cfg.augment, derive_seed(cfg.seed, "augment"));
  save_dataset(ds, cfg.paths.resolve(cfg.paths.augmented));
  report_counts(ds, cfg, log);
  log << "augment: " << std::fixed << std::setprecision(2) << seconds_since(t0) << " s\n";
  return kOk;
}

int cmd_split(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = clock::now();
  prepare_out(cfg);
  const Dataset in = load_dataset(cfg.paths.resolve(cfg.paths.augmented));
  const Dataset ds = split(in, derive_seed(cfg.seed, "split"));
  save_dataset(ds, cfg.paths.resolve(cfg.paths.dataset));
  report_counts(ds, cfg, log);
  log << "  train " << ds.count(Split::Train) << ", val " << ds.count(Split::Val) << ", test "
      << ds.count(Split::Test) << '\n';
  log << "split: " << std::fixed << std::setprecision(2) << seconds_since(t0) << " s\n";
  return kOk;
}

int cmd_train(const RunConfig& cfg, bool with_fnn, std::ostream& log) {
  const auto t0 = clock::now();
  prepare_out(cfg);
  const Dataset ds = load_dataset(cfg.paths.resolve(cfg.paths.dataset));
  if (ds.count(Split::Train) == 0) throw ConfigError("dataset has no training split");

  const nn::TrainingData data(ds, cfg.arch.window);
  log << "train: " << data.train().size() << " training windows, " << data.val().size()
      << " validation windows\n";
  nn::TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train", 0);
  const nn::ModelParams init = nn::init_model(cfg.arch, ds.normalizer, derive_seed(cfg.seed, "init", 0));
  const nn::TrainResult r = nn::train(init, data, tc, Execution::Parallel, [&](const nn::CurvePoint& p) {
    log << "  epoch " << p.epoch << "  train " << p.train_loss << "  val " << p.val_loss
        << "  (" << std::fixed << std::setprecision(1) << seconds_since(t0) << " s)\n"
        << std::defaultfloat << std::setprecision(6);
  });
  nn::save_model(r.model, cfg.paths.resolve(cfg.paths.model));
  nn::save_curve(r.curve, cfg.paths.resolve(cfg.paths.curve));

  if (with_fnn) {
    nn::TrainConfig fc = cfg.fnn;
    fc.seed = derive_seed(cfg.seed, "train", 1);
    const FnnTraining f = train_fnn(ds, fc, cfg.plant.i_max, derive_seed(cfg.seed, "init", 1));
    nn::save_model(f.controller.model(), cfg.paths.resolve(cfg.paths.fnn_model));
    nn::save_curve(f.curve, cfg.paths.resolve(cfg.paths.fnn_curve));
    if (!f.curve.empty()) {
      log << "  fnn val " << f.curve.front().val_loss << " -> " << f.curve.back().val_loss
          << '\n';
    }
  }
  log << "train: " << std::fixed << std::setprecision(2) << seconds_since(t0) << " s\n";
  return kOk;
}

int cmd_eval(const RunConfig& cfg, bool dump_traj, std::ostream& log) {
  const auto t0 = clock::now();
  prepare_out(cfg);
  const LqrGain gain = design(cfg);
  std::vector<std::unique_ptr<Controller>> owned;
  for (const auto& name : cfg.eval.controllers) {
    if (name == "baseline") {
      owned.push_back(std::make_unique<BaselineController>(gain, cfg.plant.i_max));
    } else if (name == "dftc") {
      owned.push_back(std::make_unique<DftcController>(
          nn::load_model(cfg.paths.resolve(cfg.paths.model)), cfg.plant.i_max));
    } else {
      owned.push_back(std::make_unique<FnnController>(
          nn::load_model(cfg.paths.resolve(cfg.paths.fnn_model)), cfg.plant.i_max));
    }
  }
  std::vector<const Controller*> controllers;
  for (const auto& c : owned) controllers.push_back(c.get());

  EvalReport report =
      run_suite(cfg.plant, gain, controllers, cfg.eval.suite, derive_seed(cfg.seed, "eval"));

  // Latency on measurements from baseline rollouts of the first scenarios.
  std::vector<SensorVector> inputs;
  for (std::size_t s = 0; s < std::min<std::size_t>(report.scenarios.size(), 3); ++s) {
    BaselineController b(gain, cfg.plant.i_max);
    const RolloutResult r = rollout(cfg.plant, b, report.scenarios[s], cfg.eval.suite.rollout);
    for (Eigen::Index k = 0; k < r.traj.length(); ++k) {
      inputs.push_back(r.traj.measurements.row(k).transpose());
    }
  }
  if (!inputs.empty()) {
    for (const auto& c : owned) {
      auto probe = c->clone();
      report.timing.push_back(timing_stats(*probe, inputs, cfg.eval.timing_calls));
    }
  }

  ExportOptions ex;
  if (dump_traj) {
    ex.dump_scenarios = cfg.eval.dump_scenarios;
    ex.plant = &cfg.plant;
    ex.controllers = &controllers;
    ex.suite = &cfg.eval.suite;
  }
  export_report(report, cfg.paths.resolve(cfg.paths.report), ex);

  log << "eval: " << report.scenarios.size() << " scenarios, " << report.rows.size()
      << " runs\n";
  for (const auto& a : report.aggregates) {
    log << "  " << std::left << std::setw(9) << a.controller << std::setw(9)
        << to_string(a.condition) << std::right << " mean rho " << a.mean_rho << "  std "
        << a.std_rho << "  n " << a.n << "  excluded " << a.excluded << "  unsettled "
        << a.unsettled << '\n';
  }
  for (std::size_t i = 0; i < report.timing.size(); ++i) {
    log << "  " << std::left << std::setw(9) << report.controllers[i] << std::right
        << " act mean " << report.timing[i].mean_ms << " ms, worst " << report.timing[i].worst_ms
        << " ms\n";
  }
  log << "eval: " << std::fixed << std::setprecision(2) << seconds_since(t0) << " s\n"
      << std::defaultfloat;
  return kOk;
}

int cmd_pipeline(const RunConfig& cfg, bool skip_train, bool dump_traj, std::ostream& log) {
  for (auto stage : {cmd_gen, cmd_augment, cmd_split}) {
    if (const int rc = stage(cfg, log); rc != kOk) return rc;
  }
  if (!skip_train) {
    if (const int rc = cmd_train(cfg, true, log); rc != kOk) return rc;
  }
  return cmd_eval(cfg, dump_traj, log);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep fault-tolerant control workbench for a reaction-wheel pendulum"};
  app.name("dftc");
  app.require_subcommand(1);
  Options opts;
  std::string config, out_dir;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON run configuration");
    sub->add_option("--seed", seed, "global seed (overrides the config)");
    sub->add_option("--set", opts.sets, "override a config key, e.g. train.epochs=5");
    sub->add_option("--out", out_dir, "output directory");
  };
  auto* gramian = app.add_subcommand("gramian", "rank sensor configurations by observability");
  auto* gen = app.add_subcommand("gen", "generate baseline trajectories");
  auto* aug = app.add_subcommand("augment", "append fault-injected copies");
  auto* spl = app.add_subcommand("split", "assign train/val/test splits");
  auto* trn = app.add_subcommand("train", "train the DFTC network");
  auto* evl = app.add_subcommand("eval", "closed-loop evaluation suite");
  auto* pip = app.add_subcommand("pipeline", "gen, augment, split, train and eval");
  for (auto* s : {gramian, gen, aug, spl, trn, evl, pip}) common(s);
  trn->add_flag("--fnn", opts.fnn, "also train the feed-forward comparison network");
  evl->add_flag("--dump-traj", opts.dump_traj, "export trajectories of the first scenarios");
  pip->add_flag("--dump-traj", opts.dump_traj, "export trajectories of the first scenarios");
  pip->add_flag("--skip-train", opts.skip_train, "reuse existing model files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    opts.config = config;
    const CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed")) opts.seed = seed;
    if (sub->count("--out")) opts.out = out_dir;
    const RunConfig cfg = resolve_config(opts);
    if (gramian->parsed()) return cmd_gramian(cfg, out);
    if (gen->parsed()) return cmd_gen(cfg, out);
    if (aug->parsed()) return cmd_augment(cfg, out);
    if (spl->parsed()) return cmd_split(cfg, out);
    if (trn->parsed()) return cmd_train(cfg, opts.fnn, out);
    if (evl->parsed()) return cmd_eval(cfg, opts.dump_traj, out);
    return cmd_pipeline(cfg, opts.skip_train, opts.dump_traj, out);
  } catch (const UnobservableError& e) {
    err << "error: " << e.what() << '\n';
    return kDomain;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDomain;
  } catch (const InstabilityError& e) {
    err << "error: " << e.what() << '\n';
    return kDomain;
  } catch (const NonConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDomain;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kDomain;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace dftc::cli
