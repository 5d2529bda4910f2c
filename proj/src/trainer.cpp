#include "ssdg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ssdg/errors.hpp"

namespace ssdg {

int TrainConfig::resolved_batches(const MultiDomainDataset& ds) const {
  if (batches_per_epoch > 0) return batches_per_epoch;
  const auto per_step = static_cast<std::size_t>(unlabeled_per_domain) * static_cast<std::size_t>(ds.num_domains());
  if (per_step == 0) return 1;
  return static_cast<int>(std::max<std::size_t>(1, (ds.unlabeled_count() + per_step - 1) / per_step));
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batches_per_epoch < 0) throw ConfigError("batches_per_epoch must be >= 0");
  if (labeled_per_domain < 1 || unlabeled_per_domain < 1) throw ConfigError("per-domain batch sizes must be >= 1");
  if (!std::isfinite(lr_encoder) || !std::isfinite(lr_classifier) || lr_encoder < 0 || lr_classifier < 0)
    throw ConfigError("learning rates must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
  augment.validate();
}

std::string to_jsonl(const TrainLog& log) {
  using nlohmann::ordered_json;
  std::ostringstream out;
  for (const auto& s : log.steps) {
    ordered_json j;
    j["kind"] = "step";
    j["step"] = s.step;
    j["epoch"] = s.epoch;
    j["l_s"] = s.loss.l_s;
    j["l_u"] = s.loss.l_u;
    j["l_fbc"] = s.loss.l_fbc;
    j["l_sa"] = s.loss.l_sa;
    j["total"] = s.loss.total;
    j["confident"] = s.loss.confident;
    j["lr_enc"] = s.lr_encoder;
    j["lr_cls"] = s.lr_classifier;
    out << j.dump() << '\n';
  }
  for (const auto& e : log.epochs) {
    ordered_json j;
    j["kind"] = "epoch";
    j["epoch"] = e.epoch;
    j["prototype_epoch"] = e.prototype_epoch;
    j["pl_ungated"] = e.pl.ungated;
    j["pl_gated"] = e.pl.gated ? ordered_json(*e.pl.gated) : ordered_json(nullptr);
    j["pl_retention"] = e.pl.retention;
    j["pl_count"] = e.pl.count;
    out << j.dump() << '\n';
  }
  return out.str();
}

ComposedBatch compose_batch(const MultiDomainDataset& dataset, Rng& rng, int labeled, int unlabeled) {
  if (dataset.num_domains() < 2) throw ConfigError("batch composition needs at least 2 source domains");
  ComposedBatch batch;
  for (const auto& d : dataset.domains()) {
    if (d.unlabeled.empty()) throw ConfigError("domain " + std::to_string(d.domain) + " has no unlabeled data");
    if (d.labeled.empty()) throw ConfigError("domain " + std::to_string(d.domain) + " has no labeled data");
    std::uniform_int_distribution<std::size_t> pick_l(0, d.labeled.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_u(0, d.unlabeled.size() - 1);
    const std::size_t first_labeled = batch.labeled.size();
    for (int i = 0; i < labeled; ++i) batch.labeled.push_back(d.labeled[pick_l(rng)]);
    for (int i = 0; i < unlabeled; ++i) batch.merged.push_back(d.unlabeled[pick_u(rng)]);
    for (std::size_t i = first_labeled; i < batch.labeled.size(); ++i) {
      Example e = batch.labeled[i];
      e.label.reset();
      batch.merged.push_back(std::move(e));
    }
  }
  return batch;
}

double lr_schedule(int step, int total_steps, double lr0) {
  if (total_steps <= 0) return lr0;
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

PlStats pl_accuracy_stats(const Model& model, const MultiDomainDataset& dataset, double tau) {
  std::vector<const Example*> pool;
  for (const auto& d : dataset.domains())
    for (const auto& e : d.unlabeled)
      if (e.truth) pool.push_back(&e);
  PlStats s;
  s.count = pool.size();
  if (pool.empty()) return s;
  Tensor2 x(pool.size(), static_cast<std::size_t>(dataset.input_dim()));
  for (std::size_t i = 0; i < pool.size(); ++i) std::copy(pool[i]->x.begin(), pool[i]->x.end(), x.row(i).begin());
  const Tensor2 logits = model.logits(x);
  std::size_t correct = 0, kept = 0, kept_correct = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto pred = static_cast<int>(argmax(logits.row(i)));
    const bool ok = pred == *pool[i]->truth;
    correct += ok;
    if (pseudo_label(logits.row(i), tau)) {
      ++kept;
      kept_correct += ok;
    }
  }
  s.ungated = static_cast<double>(correct) / static_cast<double>(pool.size());
  s.retention = static_cast<double>(kept) / static_cast<double>(pool.size());
  if (kept > 0) s.gated = static_cast<double>(kept_correct) / static_cast<double>(kept);
  return s;
}

namespace {

void check_finite(const LossBreakdown& b, int epoch, int step) {
  const std::pair<const char*, double> terms[] = {
      {"l_s", b.l_s}, {"l_u", b.l_u}, {"l_fbc", b.l_fbc}, {"l_sa", b.l_sa}, {"total", b.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw TrainingError(std::string("non-finite ") + name + " at epoch " + std::to_string(epoch) + ", step " +
                          std::to_string(step));
    }
  }
}

}  // namespace

TrainResult train(Model model, const MultiDomainDataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  cfg.loss.validate(dataset.num_classes());
  TrainResult result{std::move(model), {}, std::nullopt};
  if (cfg.epochs == 0) return result;
  dataset.validate();

  Rng batch_rng = substream(cfg.seed, "batching");
  Rng aug_rng = substream(cfg.seed, "augmentation");
  Rng other_rng = substream(cfg.seed, "other_domain");
  Augmenter augmenter(cfg.augment, std::move(aug_rng));
  const std::vector<int> sources = dataset.domain_ids();
  const int batches = cfg.resolved_batches(dataset);
  const int total_steps = cfg.epochs * batches;

  Model& m = result.model;
  TrainLog& log = result.log;
  std::set<std::uint64_t> seen;
  std::uint64_t hash = fnv1a("");
  for (const auto& d : dataset.domains())
    for (const auto& e : d.labeled) seen.insert(e.id);  // prototype builds read every labeled example

  std::vector<Tensor2> velocity;
  for (const auto& p : m.parameters()) velocity.emplace_back(p.value.rows(), p.value.cols());

  int step = 0;
  std::optional<PrototypeBank> bank;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    bank = bank ? bank->refresh(m, dataset) : PrototypeBank::build(m, dataset);
    ++log.prototype_refreshes;

    for (int b = 0; b < batches; ++b, ++step) {
      const ComposedBatch batch = compose_batch(dataset, batch_rng, cfg.labeled_per_domain, cfg.unlabeled_per_domain);
      for (const auto* part : {&batch.labeled, &batch.merged}) {
        for (const auto& e : *part) {
          seen.insert(e.id);
          const std::uint64_t id = e.id;
          for (int k = 0; k < 8; ++k) {
            hash ^= (id >> (8 * k)) & 0xffU;
            hash *= 1099511628211ULL;
          }
        }
      }
      const PreparedBatch prepared = prepare_batch(batch, augmenter, other_rng, sources);
      Tape tape;
      const auto bound = m.bind(tape);
      const TapedLoss loss = total_loss(tape, m, bound, *bank, prepared, cfg.loss);
      check_finite(loss.breakdown, epoch, step);
      const Gradients grads = tape.backward(loss.total);

      const double lr_enc = lr_schedule(step, total_steps, cfg.lr_encoder);
      const double lr_cls = lr_schedule(step, total_steps, cfg.lr_classifier);
      auto& params = m.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const double lr = p.group == ParamGroup::Encoder ? lr_enc : lr_cls;
        auto v = velocity[i].data();
        auto w = p.value.data();
        auto g = grads.at(p.id).data();
        for (std::size_t k = 0; k < w.size(); ++k) {
          v[k] = cfg.momentum * v[k] + (g[k] + cfg.weight_decay * w[k]);
          w[k] -= lr * v[k];
        }
      }
      log.steps.push_back({step, epoch, loss.breakdown, lr_enc, lr_cls});
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.prototype_epoch = bank->epoch();
    rec.pl = pl_accuracy_stats(m, dataset, cfg.loss.tau);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
  }
  log.seen_ids.assign(seen.begin(), seen.end());
  log.stream_hash = hash;
  result.bank = std::move(bank);
  return result;
}

}  // namespace ssdg
