#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dftc/baseline.hpp"
#include "dftc/dataset.hpp"
#include "dftc/eval.hpp"
#include "dftc/nn.hpp"
#include "dftc/observability.hpp"

namespace dftc {

struct BaselineSettings {
  double h = 0.01;
  CostWeights weights;
  double tol = 1e-12;
  int max_iter = 1'000'000;
};

struct GramianSettings {
  double epsilon = 1e-4;
  double horizon = 4.0;
  double step = 1e-3;
  double control_period = 0.01;
  int base_points = 8;
  ProbePolicy probe_policy = ProbePolicy::ClosedLoopBaseline;
  // Ranked in addition to the full and single-drop sets.
  std::vector<SensorConfig> extra_configs;
};

struct EvalSettings {
  SuiteConfig suite;
  std::vector<std::string> controllers{"baseline", "dftc", "fnn"};
  int timing_calls = 1000;
  std::int64_t dump_scenarios = 3;  // used with --dump-traj
};

// Output locations; relative paths are resolved against `out`.
struct PathSettings {
  std::filesystem::path out = "out";
  std::filesystem::path raw = "dataset_raw.csv";
  std::filesystem::path augmented = "dataset_aug.csv";
  std::filesystem::path dataset = "dataset.csv";
  std::filesystem::path gain = "gain.json";
  std::filesystem::path ranking = "gramian.csv";
  std::filesystem::path model = "dftc_model.json";
  std::filesystem::path curve = "dftc_curve.csv";
  std::filesystem::path fnn_model = "fnn_model.json";
  std::filesystem::path fnn_curve = "fnn_curve.csv";
  std::filesystem::path report = "eval";

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

struct RunConfig {
  std::uint64_t seed = 1;
  PlantParams plant;
  BaselineSettings baseline;
  GramianSettings gramian;
  GenerationConfig dataset;
  AugmentationConfig augment;
  nn::Architecture arch = nn::Architecture::dftc();
  nn::TrainConfig train;
  nn::TrainConfig fnn;
  EvalSettings eval;
  PathSettings paths;

  // Desk-scale defaults.
  RunConfig();
  void validate() const;
};

// Strict parse: unknown keys and wrong types raise ConfigError.
RunConfig config_from_json(const std::string& text,
                           const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {});
std::string config_to_json(const RunConfig& cfg);

}  // namespace dftc
