#include "ssdg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "ssdg/errors.hpp"
#include "ssdg/losses.hpp"
#include "ssdg/prototypes.hpp"
#include "ssdg/rng.hpp"
#include "ssdg/trainer.hpp"

namespace ssdg {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double max_relative_error(const Gradients& a, const Gradients& b, double floor) {
  double worst = 0.0;
  for (const auto& [id, ga] : a) {
    const Tensor2& gb = b.at(id);
    for (std::size_t i = 0; i < ga.size(); ++i) worst = std::max(worst, relative_error(ga[i], gb[i], floor));
  }
  return worst;
}

namespace {

double evaluate(const Model& model, const LossFn& loss) {
  Tape tape;
  auto bound = model.bind(tape);
  return loss(tape, model, bound).scalar();
}

}  // namespace

Gradients numeric_gradients(const Model& model, const LossFn& loss, double step) {
  Gradients out;
  Model probe = model;
  for (std::size_t p = 0; p < probe.parameters().size(); ++p) {
    auto& param = probe.parameters()[p];
    Tensor2 g(param.value.rows(), param.value.cols());
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double orig = param.value[i];
      param.value[i] = orig + step;
      const double up = evaluate(probe, loss);
      param.value[i] = orig - step;
      const double down = evaluate(probe, loss);
      param.value[i] = orig;
      g[i] = (up - down) / (2.0 * step);
    }
    out[param.id] = std::move(g);
  }
  return out;
}

GradCheckReport grad_check(const Model& model, const LossFn& loss, double step) {
  Tape tape;
  auto bound = model.bind(tape);
  Var l = loss(tape, model, bound);
  const Gradients analytic = tape.backward(l);
  const Gradients numeric = numeric_gradients(model, loss, step);

  GradCheckReport r;
  r.loss = l.scalar();
  r.min_margin = tape.min_margin();
  for (const auto& [id, ga] : analytic) {
    const Tensor2& gn = numeric.at(id);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ++r.entries;
      r.max_abs_error = std::max(r.max_abs_error, std::abs(ga[i] - gn[i]));
      const double rel = relative_error(ga[i], gn[i]);
      if (rel > r.max_rel_error || r.worst_parameter.empty()) {
        r.max_rel_error = rel;
        r.worst_parameter = id;
        r.worst_index = i;
      }
    }
  }
  return r;
}

GradCheckSweep gradcheck_sweep(const GradCheckOptions& opts, std::uint64_t seed) {
  if (opts.configurations < 1) throw ConfigError("gradcheck: configurations must be >= 1");
  if (opts.min_classes < 2 || opts.max_classes < opts.min_classes)
    throw ConfigError("gradcheck: class range must satisfy 2 <= min <= max");
  if (opts.min_domains < 2 || opts.max_domains < opts.min_domains)
    throw ConfigError("gradcheck: domain range must satisfy 2 <= min <= max");

  GradCheckSweep sweep;
  int attempt = 0;
  while (static_cast<int>(sweep.cases.size()) < opts.configurations) {
    if (attempt >= opts.max_attempts) {
      throw TrainingError("gradcheck: only " + std::to_string(sweep.cases.size()) + " usable configurations after " +
                          std::to_string(attempt) + " attempts");
    }
    Rng rng = substream(seed, "gradcheck", static_cast<std::uint64_t>(attempt++));
    const int classes = std::uniform_int_distribution<int>(opts.min_classes, opts.max_classes)(rng);
    const int domains = std::uniform_int_distribution<int>(opts.min_domains, opts.max_domains)(rng);

    GenerateParams gp;
    gp.num_classes = classes;
    gp.num_domains = domains;
    gp.input_dim = opts.input_dim;
    gp.per_class_per_domain = 3;
    gp.labels_per_class = 1;
    const MultiDomainDataset ds = generate(ShiftSpec::preset(ShiftPreset::RotationOffset, domains, rng()), gp);

    ModelDims dims;
    dims.input_dim = opts.input_dim;
    dims.hidden = opts.hidden;
    dims.feature_dim = opts.feature_dim;
    dims.num_classes = classes;
    const Model model = Model::init(dims, rng());
    std::optional<PrototypeBank> built;
    try {
      built = PrototypeBank::build(model, ds);
    } catch (const DegenerateInputError&) {
      // All ReLUs dead on a class's labeled examples; redraw.
      ++sweep.rejected;
      continue;
    }
    const PrototypeBank& bank = *built;

    Augmenter aug(AugmentConfig{}, substream(seed, "gradcheck/augment", static_cast<std::uint64_t>(attempt)));
    Rng other = substream(seed, "gradcheck/other", static_cast<std::uint64_t>(attempt));
    const ComposedBatch batch = compose_batch(ds, rng, opts.labeled_per_domain, opts.unlabeled_per_domain);
    const PreparedBatch prepared = prepare_batch(batch, aug, other, ds.domain_ids());

    LossConfig cfg;
    cfg.tau = opts.tau;
    cfg.temperature = opts.temperature;
    std::size_t confident = 0;
    const LossFn fn = [&](Tape& tape, const Model& m, const Model::Bound& bound) {
      TapedLoss l = total_loss(tape, m, bound, bank, prepared, cfg);
      confident = l.breakdown.confident;
      return l.total;
    };

    GradCheckReport report = grad_check(model, fn, opts.step);
    // Finite differences straddling a kink measure a one-sided slope.
    if (report.min_margin < opts.min_margin || confident == 0) {
      ++sweep.rejected;
      continue;
    }
    sweep.max_rel_error = std::max(sweep.max_rel_error, report.max_rel_error);
    sweep.cases.push_back({classes, domains, model.parameter_count(), confident, std::move(report)});
  }
  sweep.passed = sweep.max_rel_error <= opts.tolerance;
  return sweep;
}

}  // namespace ssdg
