#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dftc/config.hpp"

namespace dftc::cli {

enum ExitCode { kOk = 0, kUsage = 1, kDomain = 2 };

struct Options {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::optional<std::filesystem::path> out;
  bool fnn = false;
  bool dump_traj = false;
  bool skip_train = false;
};

RunConfig resolve_config(const Options& opts);

// Each command writes its primary outputs below cfg.paths.out and a short
// human-readable summary to `log`.
int cmd_gramian(const RunConfig& cfg, std::ostream& log);
int cmd_gen(const RunConfig& cfg, std::ostream& log);
int cmd_augment(const RunConfig& cfg, std::ostream& log);
int cmd_split(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, bool with_fnn, std::ostream& log);
int cmd_eval(const RunConfig& cfg, bool dump_traj, std::ostream& log);
int cmd_pipeline(const RunConfig& cfg, bool skip_train, bool dump_traj, std::ostream& log);

// Full command line; maps errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dftc::cli
