#include "ssdg/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "ssdg/errors.hpp"

namespace ssdg {

namespace {

Tensor2 stack_inputs(std::span<const Example> examples) {
  if (examples.empty()) return Tensor2();
  Tensor2 x(examples.size(), examples.front().x.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].x.size() != x.cols()) throw DimensionError("examples have inconsistent input dimensions");
    std::copy(examples[i].x.begin(), examples[i].x.end(), x.row(i).begin());
  }
  return x;
}

int required_label(const Example& e) {
  if (!e.label) throw ContractError("example " + std::to_string(e.id) + " has no label");
  return *e.label;
}

}  // namespace

std::vector<int> predict(const Model& model, std::span<const Example> examples) {
  std::vector<int> out;
  if (examples.empty()) return out;
  const Tensor2 logits = model.logits(stack_inputs(examples));
  for (std::size_t i = 0; i < logits.rows(); ++i) out.push_back(static_cast<int>(argmax(logits.row(i))));
  return out;
}

double top1_accuracy(const Model& model, std::span<const Example> examples) {
  if (examples.empty()) throw ContractError("top1_accuracy: no examples");
  const auto preds = predict(model, examples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) correct += preds[i] == required_label(examples[i]);
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

Tensor2 class_mean_similarity(const Model& model, std::span<const Example> examples, int num_classes) {
  const auto C = static_cast<std::size_t>(num_classes);
  const auto h = static_cast<std::size_t>(model.dims().feature_dim);
  Tensor2 means(C, h);
  std::vector<std::size_t> counts(C, 0);
  if (!examples.empty()) {
    const Tensor2 feats = model.features(stack_inputs(examples));
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto c = static_cast<std::size_t>(required_label(examples[i]));
      if (c >= C) throw std::out_of_range("class index out of range");
      for (std::size_t k = 0; k < h; ++k) means(c, k) += feats(i, k);
      ++counts[c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (counts[c] == 0) throw ContractError("class_mean_similarity: class " + std::to_string(c) + " has no examples");
    for (double& v : means.row(c)) v /= static_cast<double>(counts[c]);
  }
  Tensor2 m(C, C);
  for (std::size_t i = 0; i < C; ++i) {
    m(i, i) = 1.0;
    for (std::size_t j = i + 1; j < C; ++j) {
      const double s = cosine_similarity(means.row(i), means.row(j));
      m(i, j) = s;
      m(j, i) = s;
    }
  }
  return m;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& r : counts)
    for (std::size_t v : r) n += v;
  return n;
}

std::vector<std::size_t> ConfusionMatrix::row_sums() const {
  std::vector<std::size_t> out;
  for (const auto& r : counts) {
    std::size_t s = 0;
    for (std::size_t v : r) s += v;
    out.push_back(s);
  }
  return out;
}

ConfusionMatrix confusion_matrix(const Model& model, std::span<const Example> examples, int num_classes) {
  const auto C = static_cast<std::size_t>(num_classes);
  ConfusionMatrix cm;
  cm.counts.assign(C, std::vector<std::size_t>(C, 0));
  const auto preds = predict(model, examples);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto t = static_cast<std::size_t>(required_label(examples[i]));
    if (t >= C) throw std::out_of_range("class index out of range");
    ++cm.counts[t][static_cast<std::size_t>(preds[i])];
  }
  return cm;
}

void write_matrix_csv(const Tensor2& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "class";
  for (std::size_t c = 0; c < m.cols(); ++c) out << ",c" << c;
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << r;
    for (std::size_t c = 0; c < m.cols(); ++c) out << ',' << format_real(m(r, c));
    out << '\n';
  }
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "true";
  for (std::size_t c = 0; c < cm.counts.size(); ++c) out << ",pred" << c;
  out << '\n';
  for (std::size_t r = 0; r < cm.counts.size(); ++r) {
    out << r;
    for (std::size_t v : cm.counts[r]) out << ',' << v;
    out << '\n';
  }
}

void export_features(const Model& model, std::span<const Example> examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << csv_header(model.dims().feature_dim) << ",pred\n";
  if (examples.empty()) return;
  const Tensor2 x = stack_inputs(examples);
  const Tensor2 feats = model.features(x);
  const Tensor2 logits = model.classify(feats);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    const std::optional<int> shown = e.label ? e.label : e.truth;
    out << e.domain << ',' << (shown ? *shown : -1);
    for (double v : feats.row(i)) out << ',' << format_real(v);
    out << ',' << argmax(logits.row(i)) << '\n';
  }
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// ---- leave-one-domain-out --------------------------------------------------

ShiftSpec DatasetSpec::shift(std::uint64_t seed) const {
  ShiftSpec s = ShiftSpec::preset(preset, params.num_domains, seed, rotation_step, offset_step, corruption_step);
  s.noise_scale = noise_scale;
  s.class_separation = class_separation;
  return s;
}

MultiDomainDataset DatasetSpec::generate(std::uint64_t seed) const { return ssdg::generate(shift(seed), params); }

const RunRecord& LodoResult::run(std::uint64_t seed, int target) const {
  for (const auto& r : runs)
    if (r.seed == seed && r.target == target) return r;
  throw std::out_of_range("no run for seed " + std::to_string(seed) + ", target " + std::to_string(target));
}

LodoResult aggregate(std::vector<int> domains, std::vector<std::uint64_t> seeds, std::vector<RunRecord> runs) {
  LodoResult r;
  r.domains = std::move(domains);
  r.seeds = std::move(seeds);
  r.runs = std::move(runs);
  for (int d : r.domains) {
    std::vector<double> acc;
    for (std::uint64_t s : r.seeds) acc.push_back(r.run(s, d).target_accuracy);
    r.target_mean.push_back(mean_of(acc));
    r.target_std.push_back(sample_std(acc));
  }
  for (std::uint64_t s : r.seeds) {
    std::vector<double> acc;
    for (int d : r.domains) acc.push_back(r.run(s, d).target_accuracy);
    r.seed_means.push_back(mean_of(acc));
  }
  r.mean = mean_of(r.seed_means);
  r.std = sample_std(r.seed_means);
  std::vector<double> pl;
  for (const auto& run : r.runs) pl.push_back(run.final_pl.ungated);
  r.pl_ungated_mean = mean_of(pl);
  return r;
}

RunRecord lodo_run(const MultiDomainDataset& full, int target, const ModelDims& dims, const TrainConfig& train_cfg,
                   std::uint64_t seed) {
  const MultiDomainDataset source = full.without(target);
  ModelDims d = dims;
  d.input_dim = full.input_dim();
  d.num_classes = full.num_classes();
  TrainConfig cfg = train_cfg;
  cfg.seed = seed;
  TrainResult trained = train(Model::init(d, seed), source, cfg);

  RunRecord rec;
  rec.seed = seed;
  rec.target = target;
  const auto target_set = full.evaluation_set(target);
  rec.target_accuracy = top1_accuracy(trained.model, target_set);
  std::vector<Example> pool;
  for (const auto& dd : source.domains())
    for (const auto& e : dd.unlabeled)
      if (e.truth) {
        Example c = e;
        c.label = e.truth;
        pool.push_back(std::move(c));
      }
  rec.source_accuracy = pool.empty() ? 0.0 : top1_accuracy(trained.model, pool);
  rec.final_pl = trained.log.epochs.empty() ? pl_accuracy_stats(trained.model, source, cfg.loss.tau)
                                            : trained.log.epochs.back().pl;
  for (const auto& e : target_set) {
    if (std::binary_search(trained.log.seen_ids.begin(), trained.log.seen_ids.end(), e.id)) {
      rec.target_leak = true;
      break;
    }
  }
  rec.log = std::move(trained.log);
  return rec;
}

namespace {

// Runs job(i) for i in [0, n) on up to `workers` threads; results are placed
// by index so the output never depends on scheduling.
template <typename Job>
void run_indexed(std::size_t n, int workers, Job job) {
  const std::size_t w = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(n, 1));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

LodoResult lodo(const DatasetSpec& data, const ModelDims& dims, const TrainConfig& train_cfg,
                std::span<const std::uint64_t> seeds, int workers) {
  if (data.params.num_domains < 2) throw ConfigError("leave-one-domain-out needs at least 2 domains");
  if (seeds.empty()) throw ConfigError("leave-one-domain-out needs at least one seed");
  std::vector<MultiDomainDataset> datasets;
  for (std::uint64_t s : seeds) datasets.push_back(data.generate(s));
  const std::vector<int> domains = datasets.front().domain_ids();
  const std::size_t D = domains.size();
  std::vector<RunRecord> runs(seeds.size() * D);
  run_indexed(runs.size(), workers, [&](std::size_t i) {
    const std::size_t si = i / D;
    runs[i] = lodo_run(datasets[si], domains[i % D], dims, train_cfg, seeds[si]);
  });
  return aggregate(domains, std::vector<std::uint64_t>(seeds.begin(), seeds.end()), std::move(runs));
}

namespace {

nlohmann::ordered_json pl_json(const PlStats& s) {
  nlohmann::ordered_json j;
  j["ungated"] = s.ungated;
  j["gated"] = s.gated ? nlohmann::ordered_json(*s.gated) : nlohmann::ordered_json(nullptr);
  j["retention"] = s.retention;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string lodo_summary_json(const LodoResult& r) {
  nlohmann::ordered_json j;
  j["domains"] = r.domains;
  j["seeds"] = r.seeds;
  j["target_mean"] = r.target_mean;
  j["target_std"] = r.target_std;
  j["seed_means"] = r.seed_means;
  j["mean"] = r.mean;
  j["std"] = r.std;
  j["pl_ungated_mean"] = r.pl_ungated_mean;
  bool leak = false;
  for (const auto& run : r.runs) leak = leak || run.target_leak;
  j["target_leak"] = leak;
  return j.dump(2) + "\n";
}

void write_lodo_outputs(const LodoResult& r, const std::filesystem::path& dir, const std::string& method,
                        bool write_logs) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < r.domains.size(); ++k) {
    const int d = r.domains[k];
    nlohmann::ordered_json j;
    j["target"] = d;
    j["mean"] = r.target_mean[k];
    j["std"] = r.target_std[k];
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (std::uint64_t s : r.seeds) {
      const RunRecord& run = r.run(s, d);
      nlohmann::ordered_json rj;
      rj["seed"] = s;
      rj["target_accuracy"] = run.target_accuracy;
      rj["source_accuracy"] = run.source_accuracy;
      rj["final_pl"] = pl_json(run.final_pl);
      rj["target_leak"] = run.target_leak;
      rj["stream_hash"] = run.log.stream_hash;
      runs.push_back(rj);
      if (write_logs) {
        std::filesystem::create_directories(dir / "logs");
        write_text(dir / "logs" / ("seed" + std::to_string(s) + "_target" + std::to_string(d) + ".jsonl"),
                   to_jsonl(run.log));
      }
    }
    j["runs"] = runs;
    write_text(dir / ("target_d" + std::to_string(d) + ".json"), j.dump(2) + "\n");
  }
  write_text(dir / "summary.json", lodo_summary_json(r));
  const std::string names[] = {method};
  write_table_csv(names, std::span<const LodoResult>(&r, 1), dir / "lodo.csv");
}

// ---- ablation --------------------------------------------------------------

std::vector<AblationSpec> component_ablation_specs() {
  return {
      {"Baseline", {false, false, false, false}},
      {"Baseline+FBC(same)", {true, false, false, false}},
      {"Baseline+FBC(diff)", {false, true, false, false}},
      {"Baseline+FBC", {true, true, false, false}},
      {"Baseline+SA", {false, false, true, true}},
      {"Baseline+FBC+SA(same)", {true, true, true, false}},
      {"Baseline+FBC+SA", {true, true, true, true}},
  };
}

std::vector<AblationRow> ablate(const DatasetSpec& data, const ModelDims& dims, const TrainConfig& train_cfg,
                                std::span<const AblationSpec> specs, std::span<const std::uint64_t> seeds,
                                int workers) {
  std::vector<AblationRow> rows;
  for (const auto& spec : specs) {
    TrainConfig cfg = train_cfg;
    cfg.loss.terms = spec.terms;
    rows.push_back({spec, lodo(data, dims, cfg, seeds, workers)});
  }
  return rows;
}

void write_table_csv(std::span<const std::string> names, std::span<const LodoResult> results,
                     const std::filesystem::path& path) {
  if (names.size() != results.size()) throw std::invalid_argument("write_table_csv: names and results disagree");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method";
  if (!results.empty())
    for (int d : results.front().domains) out << ",d" << d;
  out << ",avg,std\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    out << names[i];
    for (double m : results[i].target_mean) out << ',' << format_real(100.0 * m);
    out << ',' << format_real(100.0 * results[i].mean) << ',' << format_real(100.0 * results[i].std) << '\n';
  }
}

}  // namespace ssdg
