#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ssdg/data.hpp"
#include "ssdg/losses.hpp"
#include "ssdg/model.hpp"
#include "ssdg/trainer.hpp"

namespace ssdg {

// ---- metrics ---------------------------------------------------------------

// Fraction with argmax(logits) == label. Every example must be labeled.
double top1_accuracy(const Model& model, std::span<const Example> examples);

// Predicted classes (argmax, lowest index on ties).
std::vector<int> predict(const Model& model, std::span<const Example> examples);

// M[i][j] = cos(mean feature of class i, mean feature of class j).
Tensor2 class_mean_similarity(const Model& model, std::span<const Example> examples, int num_classes);

struct ConfusionMatrix {
  // counts[true][pred]
  std::vector<std::vector<std::size_t>> counts;
  std::size_t total() const;
  std::vector<std::size_t> row_sums() const;
};
ConfusionMatrix confusion_matrix(const Model& model, std::span<const Example> examples, int num_classes);

void write_matrix_csv(const Tensor2& m, const std::filesystem::path& path);
void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path);
// Dataset CSV schema over encoder features plus a trailing `pred` column.
void export_features(const Model& model, std::span<const Example> examples, const std::filesystem::path& path);

// Sample standard deviation (n − 1); 0 for fewer than two values.
double mean_of(std::span<const double> v);
double sample_std(std::span<const double> v);

// ---- leave-one-domain-out --------------------------------------------------

struct DatasetSpec {
  GenerateParams params;
  ShiftPreset preset = ShiftPreset::RotationOffset;
  double rotation_step = 0.35;
  double offset_step = 0.8;
  double corruption_step = 0.1;
  double noise_scale = 1.0;
  double class_separation = 3.0;

  ShiftSpec shift(std::uint64_t seed) const;
  MultiDomainDataset generate(std::uint64_t seed) const;
};

struct RunRecord {
  std::uint64_t seed = 0;
  int target = 0;
  double target_accuracy = 0.0;
  double source_accuracy = 0.0;  // source unlabeled pool, ground truth
  PlStats final_pl;
  bool target_leak = false;  // some target example id reached training
  TrainLog log;
};

struct LodoResult {
  std::vector<int> domains;
  std::vector<std::uint64_t> seeds;
  std::vector<RunRecord> runs;  // seed-major, then domain order
  std::vector<double> target_mean;  // per domain, over seeds
  std::vector<double> target_std;
  std::vector<double> seed_means;  // cross-domain mean per seed
  double mean = 0.0;               // mean of seed_means
  double std = 0.0;                // std of seed_means
  double pl_ungated_mean = 0.0;    // final-epoch ungated PL accuracy, all runs

  const RunRecord& run(std::uint64_t seed, int target) const;
};

// Recompute every aggregate from run records alone.
LodoResult aggregate(std::vector<int> domains, std::vector<std::uint64_t> seeds, std::vector<RunRecord> runs);

// Per seed: generate the dataset, then for every domain hold it out, train on
// the rest from a fresh model and score top-1 on all of the held-out domain.
// `workers` > 1 runs independent (seed, target) pairs on separate threads.
LodoResult lodo(const DatasetSpec& data, const ModelDims& dims, const TrainConfig& train_cfg,
                std::span<const std::uint64_t> seeds, int workers = 1);

// One (seed, target) run.
RunRecord lodo_run(const MultiDomainDataset& full, int target, const ModelDims& dims, const TrainConfig& train_cfg,
                   std::uint64_t seed);

// per-domain `target_d<k>.json`, `summary.json`, `lodo.csv`, optional logs.
void write_lodo_outputs(const LodoResult& r, const std::filesystem::path& dir, const std::string& method = "method",
                        bool write_logs = true);
std::string lodo_summary_json(const LodoResult& r);

// ---- ablation --------------------------------------------------------------

struct AblationSpec {
  std::string name;
  LossTerms terms;
};

// The seven loss combinations of the component ablation, baseline first.
std::vector<AblationSpec> component_ablation_specs();

struct AblationRow {
  AblationSpec spec;
  LodoResult result;
};

std::vector<AblationRow> ablate(const DatasetSpec& data, const ModelDims& dims, const TrainConfig& train_cfg,
                                std::span<const AblationSpec> specs, std::span<const std::uint64_t> seeds,
                                int workers = 1);

// Rows = methods, columns = target domains then avg (percent accuracy).
void write_table_csv(std::span<const std::string> names, std::span<const LodoResult> results,
                     const std::filesystem::path& path);

}  // namespace ssdg
