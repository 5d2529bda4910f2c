// ssdg: data generation, training, leave-one-domain-out evaluation, the
// component ablation and gradient checking from one JSON config.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssdg/commands.hpp"
#include "ssdg/config.hpp"
#include "ssdg/errors.hpp"

namespace {

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON run config")->required();
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", o.seed, "root seed (overrides the config)");
  cmd->add_option("--seeds", o.seeds, "seed list for lodo/ablate, e.g. 0,1,2")->delimiter(',');
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ssdg::ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised domain generalization lab"};
  app.require_subcommand(1);
  Options o;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-domain dataset CSV");
  auto* trn = app.add_subcommand("train", "train one model and write checkpoint, log and diagnostics");
  auto* lodo = app.add_subcommand("lodo", "leave-one-domain-out over every domain and seed");
  auto* abl = app.add_subcommand("ablate", "component ablation table");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full training loss");
  for (auto* c : {gen, trn, lodo, abl, gc}) add_common(c, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return ssdg::kExitConfig;
  }

  try {
    const std::string text = read_file(o.config);
    ssdg::RunConfig cfg = ssdg::parse_run_config(text, ssdg::process_environment());
    if (o.seed) cfg.seed = *o.seed;
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    cfg.validate();
    ssdg::write_config_copies(text, cfg, o.out);

    if (gen->parsed()) {
      ssdg::cmd_gen_data(cfg, o.out);
    } else if (trn->parsed()) {
      ssdg::cmd_train(cfg, o.out);
    } else if (lodo->parsed()) {
      const auto r = ssdg::cmd_lodo(cfg, o.out);
      std::cout << "mean target accuracy " << r.mean << " (std " << r.std << ")\n";
    } else if (abl->parsed()) {
      for (const auto& row : ssdg::cmd_ablate(cfg, o.out))
        std::cout << row.spec.name << ' ' << row.result.mean << '\n';
    } else if (gc->parsed()) {
      const auto sweep = ssdg::cmd_gradcheck(cfg, o.out);
      std::cout << "max relative error " << sweep.max_rel_error << " over " << sweep.cases.size()
                << " configurations\n";
      if (!sweep.passed) return ssdg::kExitGradCheck;
    }
  } catch (const ssdg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ssdg::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ssdg::kExitRuntime;
  }
  return ssdg::kExitOk;
}
