#pragma once

#include <filesystem>
#include <string>

#include "ssdg/config.hpp"
#include "ssdg/eval.hpp"
#include "ssdg/gradcheck.hpp"

namespace ssdg {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2, kExitGradCheck = 3 };

// `config.json` (the text as given) and `effective_config.json` (defaults
// and overrides resolved) under `out`.
void write_config_copies(const std::string& config_text, const RunConfig& cfg, const std::filesystem::path& out);

// Every command writes only under `out` and is deterministic in `cfg`.
void cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out);
void cmd_train(const RunConfig& cfg, const std::filesystem::path& out);
LodoResult cmd_lodo(const RunConfig& cfg, const std::filesystem::path& out);
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out);
GradCheckSweep cmd_gradcheck(const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace ssdg
