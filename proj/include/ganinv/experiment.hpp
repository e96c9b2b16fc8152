#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ganinv {

/// Stable CLI exit codes.
enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,       // schema violation or unreadable config
  kMissingDependency = 3, // stage input artifact absent
  kStageFailure = 4,      // stage raised while running
  kLocked = 5,            // another runner owns the artifact directory
};

struct ExperimentError : std::runtime_error {
  ExperimentError(int code_, const std::string& what) : std::runtime_error(what), code(code_) {}
  int code;
};

/// Validates an experiment config against the published schema; returns a
/// list of human-readable violations (empty when valid).
std::vector<std::string> validate_experiment_config(const nlohmann::json& config);

/// Stage runner over one artifact directory. Completed stages are recorded in
/// manifest.json with the hash of the config that produced them; re-running
/// with an unchanged config skips the stage.
class Experiment {
 public:
  explicit Experiment(std::filesystem::path artifact_dir, uint64_t global_seed);

  /// Returns true when the stage executed, false when skipped as up to date.
  bool run_stage(const std::string& stage, nlohmann::json cfg);

  /// Executes a full config (stages in order). Acquires the directory lock.
  static int run_config(nlohmann::json config, uint64_t seed_override, bool has_override);

  const std::filesystem::path& dir() const { return dir_; }
  nlohmann::json manifest() const;

  static const std::vector<std::string>& known_stages();

 private:
  void record(const std::string& stage, uint64_t config_hash,
              const std::vector<std::string>& outputs);
  bool up_to_date(const std::string& stage, uint64_t config_hash) const;

  std::filesystem::path dir_;
  uint64_t seed_;
};

/// Scoped exclusive lock on an artifact directory (lockfile based).
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace ganinv
