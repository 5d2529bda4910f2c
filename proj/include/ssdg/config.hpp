#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssdg/eval.hpp"
#include "ssdg/gradcheck.hpp"
#include "ssdg/model.hpp"
#include "ssdg/trainer.hpp"

namespace ssdg {

inline constexpr int kSchemaVersion = 1;

struct EvalOptions {
  // Domain excluded from `train` (null: train on every domain).
  std::optional<int> target_domain;
  bool export_features = true;
  bool write_logs = true;
  // Subset of the component ablation rows by name; empty runs all seven.
  std::vector<std::string> ablation;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  DatasetSpec dataset;
  // When set, `train` reads this CSV instead of generating.
  std::optional<std::filesystem::path> dataset_path;
  std::vector<int> hidden = {64, 64};
  int feature_dim = 32;
  TrainConfig train;
  EvalOptions eval;
  GradCheckOptions gradcheck;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  int workers = 1;

  ModelDims model_dims() const;
  void validate() const;
};

using EnvList = std::vector<std::pair<std::string, std::string>>;

// Every SSDG_* variable of the current process environment.
EnvList process_environment();

// Parses config text. `SSDG_A__B=v` entries of `env` override key a.b; v is
// read as JSON when it parses, otherwise as a string. Unknown keys, wrong
// types and JSON syntax errors raise ConfigError with the field path or line.
RunConfig parse_run_config(const std::string& text, const EnvList& env = {});
RunConfig load_run_config(const std::filesystem::path& path, const EnvList& env = {});

// Fully resolved config (defaults filled in) as pretty JSON.
std::string effective_config_json(const RunConfig& cfg);

}  // namespace ssdg
