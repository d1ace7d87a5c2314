#include "dftc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dftc/error.hpp"

namespace dftc {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object and rejects anything left unread.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  // Throws on any key that was never read.
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + key(it.key()) + "'");
    }
  }

  template <class T>
  void get(const std::string& k, T& out) {
    seen_.insert(k);
    if (!j_.contains(k)) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + key(k) + "' has the wrong type");
    }
  }

  void get_path(const std::string& k, std::filesystem::path& out) {
    std::string s = out.string();
    get(k, s);
    out = s;
  }

  template <int N>
  void get_vec(const std::string& k, Eigen::Matrix<double, N, 1>& out) {
    std::vector<double> v;
    seen_.insert(k);
    if (!j_.contains(k)) return;
    get(k, v);
    if (v.size() != static_cast<std::size_t>(N)) {
      throw ConfigError("config key '" + key(k) + "' needs " + std::to_string(N) + " entries");
    }
    for (int i = 0; i < N; ++i) out[i] = v[i];
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  const json& child(const std::string& k) {
    seen_.insert(k);
    return j_.at(k);
  }
  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

 private:
  std::string label() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(Section& parent, const std::string& name, nn::TrainConfig& t) {
  if (!parent.has(name)) return;
  Section s(parent.child(name), name);
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("lr", t.lr);
  s.get("lr_drop_epoch", t.lr_drop_epoch);
  s.get("lr_after_drop", t.lr_after_drop);
  s.get("lambda", t.lambda);
  s.get("rms_decay", t.rms_decay);
  s.get("rms_eps", t.rms_eps);
  s.get("samples_per_epoch", t.samples_per_epoch);
  s.get("val_samples", t.val_samples);
  s.get("chunk_size", t.chunk_size);
  s.done();
}

json train_json(const nn::TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr", t.lr},
          {"lr_drop_epoch", t.lr_drop_epoch},
          {"lr_after_drop", t.lr_after_drop},
          {"lambda", t.lambda},
          {"rms_decay", t.rms_decay},
          {"rms_eps", t.rms_eps},
          {"samples_per_epoch", t.samples_per_epoch},
          {"val_samples", t.val_samples},
          {"chunk_size", t.chunk_size}};
}

template <int N>
std::vector<double> to_vec(const Eigen::Matrix<double, N, 1>& v) {
  return std::vector<double>(v.data(), v.data() + N);
}

void apply_override(json& root, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + item + "' must look like key.path=value");
  }
  const std::string path = item.substr(0, eq);
  const std::string text = item.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // bare strings need no quotes
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string k = path.substr(start, dot == std::string::npos ? std::string::npos
                                                                       : dot - start);
    if (k.empty()) throw ConfigError("override '" + item + "' has an empty key");
    if (!node->is_object()) throw ConfigError("override '" + item + "' descends into a value");
    if (dot == std::string::npos) {
      (*node)[k] = value;
      return;
    }
    node = &(*node)[k];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace

std::filesystem::path PathSettings::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : out / p;
}

RunConfig::RunConfig() {
  train.epochs = 40;
  train.batch_size = 256;
  train.lr_drop_epoch = 20;
  train.samples_per_epoch = 65536;
  train.val_samples = 8192;
  fnn = train;
  fnn.samples_per_epoch = 0;
}

void RunConfig::validate() const {
  try {
    plant.validate();
    baseline.weights.validate();
    arch.validate();
    train.validate();
    fnn.validate();
    augment.validate(static_cast<double>(dataset.steps) * dataset.h);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (!(baseline.h > 0) || !(baseline.tol > 0) || baseline.max_iter < 1) {
    throw ConfigError("baseline needs positive h, tol and max_iter");
  }
  if (!(gramian.epsilon > 0 && gramian.epsilon < 1) || !(gramian.horizon > 0) ||
      !(gramian.step > 0) || !(gramian.control_period > 0) || gramian.base_points < 1) {
    throw ConfigError("gramian settings out of range");
  }
  for (const auto& c : gramian.extra_configs) {
    try {
      c.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(std::string("gramian.extra_configs: ") + e.what());
    }
  }
  if (dataset.n_traj < 0 || dataset.steps < 1 || !(dataset.h > 0)) {
    throw ConfigError("dataset needs n_traj >= 0, steps >= 1 and h > 0");
  }
  if (dataset.h != baseline.h) throw ConfigError("dataset.h must equal baseline.h");
  if (arch.blocks != arch.channels || arch.channels != kSensorCount ||
      arch.outputs != kInputDim) {
    throw ConfigError("the DFTC network needs one LSTM block per sensor and two outputs");
  }
  if (eval.suite.n_scenarios < 0 || eval.timing_calls < 1 || eval.dump_scenarios < 0) {
    throw ConfigError("eval counts out of range");
  }
  std::set<std::string> names;
  for (const auto& c : eval.controllers) {
    if (c != "baseline" && c != "dftc" && c != "fnn") {
      throw ConfigError("unknown controller '" + c + "'");
    }
    if (!names.insert(c).second) throw ConfigError("controller '" + c + "' listed twice");
  }
}

RunConfig config_from_json(const std::string& text, const std::vector<std::string>& overrides) {
  json root;
  try {
    root = text.empty() ? json::object() : json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig cfg;
  {
    Section top(root, "");
    top.get("seed", cfg.seed);
    if (top.has("plant")) {
      Section s(top.child("plant"), "plant");
      PlantParams& p = cfg.plant;
      s.get("I_p", p.I_p);
      s.get("I_w", p.I_w);
      s.get("ml", p.ml);
      s.get("g", p.g);
      s.get("k_s", p.k_s);
      s.get("b_th", p.b_th);
      s.get("b_ph", p.b_ph);
      s.get("k_T", p.k_T);
      s.get("i_max", p.i_max);
      s.get("noise_std", p.noise_std);
      s.done();
    }
    if (top.has("baseline")) {
      Section s(top.child("baseline"), "baseline");
      s.get("h", cfg.baseline.h);
      s.get_vec("Q", cfg.baseline.weights.Q);
      s.get_vec("R", cfg.baseline.weights.R);
      s.get("tol", cfg.baseline.tol);
      s.get("max_iter", cfg.baseline.max_iter);
      s.done();
    }
    if (top.has("gramian")) {
      Section s(top.child("gramian"), "gramian");
      GramianSettings& g = cfg.gramian;
      s.get("epsilon", g.epsilon);
      s.get("horizon", g.horizon);
      s.get("step", g.step);
      s.get("control_period", g.control_period);
      s.get("base_points", g.base_points);
      std::string policy = g.probe_policy == ProbePolicy::ZeroInput ? "zero_input" : "closed_loop";
      s.get("probe_policy", policy);
      if (policy == "closed_loop") g.probe_policy = ProbePolicy::ClosedLoopBaseline;
      else if (policy == "zero_input") g.probe_policy = ProbePolicy::ZeroInput;
      else throw ConfigError("gramian.probe_policy must be closed_loop or zero_input");
      std::vector<std::vector<int>> extra;
      s.get("extra_configs", extra);
      for (auto& e : extra) g.extra_configs.push_back(SensorConfig{std::move(e)});
      s.done();
    }
    if (top.has("dataset")) {
      Section s(top.child("dataset"), "dataset");
      s.get("n_traj", cfg.dataset.n_traj);
      s.get("h", cfg.dataset.h);
      s.get("steps", cfg.dataset.steps);
      s.get("divergence_theta", cfg.dataset.divergence_theta);
      if (s.has("box")) {
        Section b(s.child("box"), "dataset.box");
        b.get("theta", cfg.dataset.box.theta);
        b.get("dtheta", cfg.dataset.box.dtheta);
        b.get("dphi", cfg.dataset.box.dphi);
        b.done();
      }
      s.done();
    }
    if (top.has("augment")) {
      Section s(top.child("augment"), "augment");
      s.get("copies", cfg.augment.copies_per_trajectory);
      s.get("window_begin", cfg.augment.fault_window_begin);
      s.get("window_end", cfg.augment.fault_window_end);
      s.done();
    }
    if (top.has("arch")) {
      Section s(top.child("arch"), "arch");
      s.get("H", cfg.arch.hidden);
      s.get("m", cfg.arch.window);
      s.get("fc_sizes", cfg.arch.fc_sizes);
      s.done();
    }
    read_train(top, "train", cfg.train);
    read_train(top, "fnn", cfg.fnn);
    if (top.has("eval")) {
      Section s(top.child("eval"), "eval");
      s.get("n_scenarios", cfg.eval.suite.n_scenarios);
      std::string mix = cfg.eval.suite.fault_mix == FaultMix::None ? "none" : "single";
      s.get("fault_mix", mix);
      if (mix == "single") cfg.eval.suite.fault_mix = FaultMix::Single;
      else if (mix == "none") cfg.eval.suite.fault_mix = FaultMix::None;
      else throw ConfigError("eval.fault_mix must be single or none");
      s.get("settle_tol", cfg.eval.suite.settle_tol);
      s.get("settle_hold", cfg.eval.suite.settle_hold);
      s.get("divergence_theta", cfg.eval.suite.rollout.divergence_theta);
      s.get("controllers", cfg.eval.controllers);
      s.get("timing_calls", cfg.eval.timing_calls);
      s.get("dump_scenarios", cfg.eval.dump_scenarios);
      s.done();
    }
    if (top.has("paths")) {
      Section s(top.child("paths"), "paths");
      PathSettings& p = cfg.paths;
      s.get_path("out", p.out);
      s.get_path("raw", p.raw);
      s.get_path("augmented", p.augmented);
      s.get_path("dataset", p.dataset);
      s.get_path("gain", p.gain);
      s.get_path("ranking", p.ranking);
      s.get_path("model", p.model);
      s.get_path("curve", p.curve);
      s.get_path("fnn_model", p.fnn_model);
      s.get_path("fnn_curve", p.fnn_curve);
      s.get_path("report", p.report);
      s.done();
    }
    top.done();
  }
  cfg.arch.blocks = cfg.arch.channels;
  // Evaluation draws from the training distributions.
  cfg.eval.suite.box = cfg.dataset.box;
  cfg.eval.suite.fault_distribution = cfg.augment;
  cfg.eval.suite.h = cfg.dataset.h;
  cfg.eval.suite.duration = static_cast<double>(cfg.dataset.steps) * cfg.dataset.h;
  cfg.eval.suite.rollout.weights = cfg.baseline.weights;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str(), overrides);
}

std::string config_to_json(const RunConfig& c) {
  std::vector<std::vector<int>> extra;
  for (const auto& e : c.gramian.extra_configs) extra.push_back(e.active);
  const json j = {
      {"seed", c.seed},
      {"plant",
       {{"I_p", c.plant.I_p},
        {"I_w", c.plant.I_w},
        {"ml", c.plant.ml},
        {"g", c.plant.g},
        {"k_s", c.plant.k_s},
        {"b_th", c.plant.b_th},
        {"b_ph", c.plant.b_ph},
        {"k_T", c.plant.k_T},
        {"i_max", c.plant.i_max},
        {"noise_std", c.plant.noise_std}}},
      {"baseline",
       {{"h", c.baseline.h},
        {"Q", to_vec(c.baseline.weights.Q)},
        {"R", to_vec(c.baseline.weights.R)},
        {"tol", c.baseline.tol},
        {"max_iter", c.baseline.max_iter}}},
      {"gramian",
       {{"epsilon", c.gramian.epsilon},
        {"horizon", c.gramian.horizon},
        {"step", c.gramian.step},
        {"control_period", c.gramian.control_period},
        {"base_points", c.gramian.base_points},
        {"probe_policy",
         c.gramian.probe_policy == ProbePolicy::ZeroInput ? "zero_input" : "closed_loop"},
        {"extra_configs", extra}}},
      {"dataset",
       {{"n_traj", c.dataset.n_traj},
        {"h", c.dataset.h},
        {"steps", c.dataset.steps},
        {"divergence_theta", c.dataset.divergence_theta},
        {"box",
         {{"theta", c.dataset.box.theta},
          {"dtheta", c.dataset.box.dtheta},
          {"dphi", c.dataset.box.dphi}}}}},
      {"augment",
       {{"copies", c.augment.copies_per_trajectory},
        {"window_begin", c.augment.fault_window_begin},
        {"window_end", c.augment.fault_window_end}}},
      {"arch", {{"H", c.arch.hidden}, {"m", c.arch.window}, {"fc_sizes", c.arch.fc_sizes}}},
      {"train", train_json(c.train)},
      {"fnn", train_json(c.fnn)},
      {"eval",
       {{"n_scenarios", c.eval.suite.n_scenarios},
        {"fault_mix", c.eval.suite.fault_mix == FaultMix::None ? "none" : "single"},
        {"settle_tol", c.eval.suite.settle_tol},
        {"settle_hold", c.eval.suite.settle_hold},
        {"divergence_theta", c.eval.suite.rollout.divergence_theta},
        {"controllers", c.eval.controllers},
        {"timing_calls", c.eval.timing_calls},
        {"dump_scenarios", c.eval.dump_scenarios}}},
      {"paths",
       {{"out", c.paths.out.string()},
        {"raw", c.paths.raw.string()},
        {"augmented", c.paths.augmented.string()},
        {"dataset", c.paths.dataset.string()},
        {"gain", c.paths.gain.string()},
        {"ranking", c.paths.ranking.string()},
        {"model", c.paths.model.string()},
        {"curve", c.paths.curve.string()},
        {"fnn_model", c.paths.fnn_model.string()},
        {"fnn_curve", c.paths.fnn_curve.string()},
        {"report", c.paths.report.string()}}}};
  return j.dump(2) + "\n";
}

}  // namespace dftc
