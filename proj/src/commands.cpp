#include "ssdg/commands.hpp"

#include <fstream>

#include <json.hpp>

#include "ssdg/data.hpp"
#include "ssdg/errors.hpp"
#include "ssdg/model.hpp"
#include "ssdg/prototypes.hpp"
#include "ssdg/trainer.hpp"

namespace ssdg {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

MultiDomainDataset dataset_for(const RunConfig& cfg) {
  if (cfg.dataset_path) {
    const auto& p = cfg.dataset.params;
    return load_csv(*cfg.dataset_path, CsvSchema{p.num_classes, p.num_domains, p.input_dim});
  }
  return cfg.dataset.generate(cfg.seed);
}

ordered_json pl_json(const PlStats& s) {
  ordered_json j;
  j["ungated"] = s.ungated;
  j["gated"] = s.gated ? ordered_json(*s.gated) : ordered_json(nullptr);
  j["retention"] = s.retention;
  j["count"] = s.count;
  return j;
}

std::vector<AblationSpec> selected_specs(const RunConfig& cfg) {
  const auto all = component_ablation_specs();
  if (cfg.eval.ablation.empty()) return all;
  std::vector<AblationSpec> out;
  for (const auto& name : cfg.eval.ablation)
    for (const auto& s : all)
      if (s.name == name) out.push_back(s);
  return out;
}

}  // namespace

void write_config_copies(const std::string& config_text, const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  write_text(out / "config.json", config_text);
  write_text(out / "effective_config.json", effective_config_json(cfg));
}

void cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const MultiDomainDataset ds = cfg.dataset.generate(cfg.seed);
  save_csv(ds, out / "dataset.csv");
  // Hidden ground truth for the unlabeled rows, in file order.
  std::ofstream truth(out / "truth.csv", std::ios::binary);
  if (!truth) throw std::runtime_error("cannot write " + (out / "truth.csv").string());
  truth << "row,domain,class\n";
  std::size_t row = 0;
  for (const auto& d : ds.domains()) {
    for (const auto* part : {&d.labeled, &d.unlabeled}) {
      for (const auto& e : *part) {
        truth << row++ << ',' << e.domain << ',' << (e.truth ? *e.truth : -1) << '\n';
      }
    }
  }
}

void cmd_train(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const MultiDomainDataset full = dataset_for(cfg);
  const MultiDomainDataset source = cfg.eval.target_domain ? full.without(*cfg.eval.target_domain) : full;

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  TrainResult result = train(Model::init(cfg.model_dims(), cfg.seed), source, tc);

  result.model.save(out / "model.ckpt");
  write_text(out / "train_log.jsonl", to_jsonl(result.log));
  const PrototypeBank bank = result.bank ? *result.bank : PrototypeBank::build(result.model, source);
  bank.save_csv(out / "prototypes.csv");

  std::vector<Example> eval_set;
  const std::vector<int> eval_domains =
      cfg.eval.target_domain ? std::vector<int>{*cfg.eval.target_domain} : full.domain_ids();
  for (int d : eval_domains) {
    auto part = full.evaluation_set(d);
    eval_set.insert(eval_set.end(), part.begin(), part.end());
  }

  ordered_json m;
  m["seed"] = cfg.seed;
  m["target_domain"] = cfg.eval.target_domain ? ordered_json(*cfg.eval.target_domain) : ordered_json(nullptr);
  m["steps"] = result.log.steps.size();
  m["epochs"] = result.log.epochs.size();
  m["stream_hash"] = result.log.stream_hash;
  m["final_loss"] = result.log.steps.empty() ? ordered_json(nullptr) : ordered_json(result.log.steps.back().loss.total);
  m["pl"] = pl_json(pl_accuracy_stats(result.model, source, tc.loss.tau));
  m["eval_examples"] = eval_set.size();
  if (!eval_set.empty()) {
    const int C = full.num_classes();
    m["accuracy"] = top1_accuracy(result.model, eval_set);
    write_confusion_csv(confusion_matrix(result.model, eval_set, C), out / "confusion.csv");
    try {
      write_matrix_csv(class_mean_similarity(result.model, eval_set, C), out / "class_similarity.csv");
    } catch (const ContractError&) {
      // A class absent from the evaluation set has no mean feature.
    }
    if (cfg.eval.export_features) export_features(result.model, eval_set, out / "features.csv");
  } else {
    m["accuracy"] = nullptr;
  }
  write_text(out / "metrics.json", m.dump(2) + "\n");
}

LodoResult cmd_lodo(const RunConfig& cfg, const fs::path& out) {
  if (cfg.dataset_path) throw ConfigError("lodo regenerates data per seed; dataset.path is not supported");
  LodoResult r = lodo(cfg.dataset, cfg.model_dims(), cfg.train, cfg.seeds, cfg.workers);
  write_lodo_outputs(r, out, "method", cfg.eval.write_logs);
  return r;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const fs::path& out) {
  if (cfg.dataset_path) throw ConfigError("ablate regenerates data per seed; dataset.path is not supported");
  fs::create_directories(out);
  const auto specs = selected_specs(cfg);
  auto rows = ablate(cfg.dataset, cfg.model_dims(), cfg.train, specs, cfg.seeds, cfg.workers);
  std::vector<std::string> names;
  std::vector<LodoResult> results;
  ordered_json j = ordered_json::array();
  for (const auto& row : rows) {
    names.push_back(row.spec.name);
    results.push_back(row.result);
    ordered_json rj = ordered_json::parse(lodo_summary_json(row.result));
    ordered_json entry;
    entry["method"] = row.spec.name;
    entry["terms"] = {{"fbc_same", row.spec.terms.fbc_same},
                      {"fbc_diff", row.spec.terms.fbc_diff},
                      {"sa_same", row.spec.terms.sa_same},
                      {"sa_diff", row.spec.terms.sa_diff}};
    entry["summary"] = rj;
    j.push_back(entry);
  }
  write_table_csv(names, results, out / "ablation.csv");
  write_text(out / "ablation.json", j.dump(2) + "\n");
  return rows;
}

GradCheckSweep cmd_gradcheck(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const GradCheckSweep sweep = gradcheck_sweep(cfg.gradcheck, cfg.seed);
  ordered_json j;
  j["passed"] = sweep.passed;
  j["tolerance"] = cfg.gradcheck.tolerance;
  j["max_rel_error"] = sweep.max_rel_error;
  j["rejected"] = sweep.rejected;
  ordered_json cases = ordered_json::array();
  for (const auto& c : sweep.cases) {
    cases.push_back({{"num_classes", c.num_classes},
                     {"num_domains", c.num_domains},
                     {"parameters", c.parameters},
                     {"confident", c.confident},
                     {"max_rel_error", c.report.max_rel_error},
                     {"max_abs_error", c.report.max_abs_error},
                     {"worst_parameter", c.report.worst_parameter},
                     {"worst_index", c.report.worst_index},
                     {"min_margin", c.report.min_margin},
                     {"loss", c.report.loss}});
  }
  j["cases"] = cases;
  write_text(out / "gradcheck.json", j.dump(2) + "\n");
  return sweep;
}

}  // namespace ssdg
