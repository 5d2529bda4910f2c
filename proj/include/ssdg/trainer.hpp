#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssdg/data.hpp"
#include "ssdg/losses.hpp"
#include "ssdg/model.hpp"
#include "ssdg/prototypes.hpp"
#include "ssdg/rng.hpp"

namespace ssdg {

struct TrainConfig {
  int epochs = 20;
  // 0 means ceil(total unlabeled / (unlabeled_per_domain · source domains)).
  int batches_per_epoch = 0;
  int labeled_per_domain = 16;
  int unlabeled_per_domain = 16;
  double lr_encoder = 0.003;
  double lr_classifier = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  LossConfig loss;
  AugmentConfig augment;
  std::uint64_t seed = 0;

  int resolved_batches(const MultiDomainDataset& ds) const;
  void validate() const;
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  LossBreakdown loss;
  double lr_encoder = 0.0;
  double lr_classifier = 0.0;
};

struct PlStats {
  double ungated = 0.0;
  std::optional<double> gated;  // absent when nothing passes tau
  double retention = 0.0;
  std::size_t count = 0;
};

struct EpochRecord {
  int epoch = 0;
  int prototype_epoch = 0;
  PlStats pl;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  int prototype_refreshes = 0;
  // Ids of every example the run read (batches and prototype builds), sorted.
  std::vector<std::uint64_t> seen_ids;
  // FNV-1a over the id sequence of every composed batch, in draw order.
  std::uint64_t stream_hash = 0;
};

// JSON Lines: one object per step, then one per epoch. Wall-clock timings are
// left out so logs are byte-identical across reruns.
std::string to_jsonl(const TrainLog& log);

// Per source domain: `labeled` labeled draws and `unlabeled` unlabeled draws,
// uniform with replacement. The merged stream holds each domain's unlabeled
// draws followed by the same labeled draws with labels stripped.
ComposedBatch compose_batch(const MultiDomainDataset& dataset, Rng& rng, int labeled = 16, int unlabeled = 16);

// Cosine annealing: lr0 · 0.5 · (1 + cos(π · step / total)).
double lr_schedule(int step, int total_steps, double lr0);

// Argmax pseudo-label accuracy over every unlabeled example with ground
// truth, on raw inputs.
PlStats pl_accuracy_stats(const Model& model, const MultiDomainDataset& dataset, double tau);

struct TrainResult {
  Model model;
  TrainLog log;
  std::optional<PrototypeBank> bank;  // bank used in the final epoch
};

// Throws TrainingError naming the term when a loss becomes non-finite.
TrainResult train(Model model, const MultiDomainDataset& dataset, const TrainConfig& cfg);

}  // namespace ssdg
