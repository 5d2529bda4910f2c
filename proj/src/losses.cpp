#include "ssdg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ssdg/errors.hpp"

namespace ssdg {

std::optional<PseudoLabel> pseudo_label(std::span<const double> logits_row, double tau) {
  const Tensor2 p = softmax_values(Tensor2::row_vector(logits_row));
  const std::size_t best = argmax(p.data());
  if (p[best] >= tau) return PseudoLabel{static_cast<int>(best), p[best]};
  return std::nullopt;
}

int LossConfig::resolved_top_n(int num_classes) const { return top_n > 0 ? top_n : (num_classes + 1) / 2; }

void LossConfig::validate(int num_classes) const {
  // tau > 1 is accepted: it disables every pseudo-label.
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be finite and >= 0");
  const int n = resolved_top_n(num_classes);
  if (n < 1 || n > num_classes) {
    throw ConfigError("top_n must lie in [1, " + std::to_string(num_classes) + "], got " + std::to_string(n));
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be finite and > 0");
}

SimilarityProfile similarity_profile(const PrototypeBank& bank, std::span<const double> feature, int domain,
                                     int other_domain, int top_n) {
  SimilarityProfile s;
  s.diff_domain = other_domain;
  s.z_same = bank.similarities(feature, domain);
  s.z_diff = bank.similarities(feature, other_domain);
  const auto [sorted, order] = sort_desc_values(s.z_same);
  s.assigned = order.front();
  s.phi_same = sorted.front();
  const auto n = static_cast<std::size_t>(top_n);
  double acc = 0.0;
  for (std::size_t k = 1; k < n; ++k) acc += sorted[k];
  s.Phi_same = n > 1 ? acc / static_cast<double>(n - 1) : 0.0;
  s.phi_diff = s.z_diff[s.assigned];
  return s;
}

int draw_other_domain(Rng& rng, std::span<const int> sources, int domain) {
  if (sources.size() < 2) throw ConfigError("prototype losses need at least 2 source domains");
  std::vector<int> others;
  for (int d : sources)
    if (d != domain) others.push_back(d);
  if (others.empty()) throw ConfigError("no other source domain for domain " + std::to_string(domain));
  std::uniform_int_distribution<std::size_t> pick_idx(0, others.size() - 1);
  return others[pick_idx(rng)];
}

namespace {

void check_domains(const PrototypeBank& bank, int domain, int other_domain) {
  if (bank.domains().size() < 2) throw ConfigError("prototype losses need at least 2 source domains");
  if (domain == other_domain) throw std::invalid_argument("other domain must differ from the sample's domain");
  if (!bank.has_domain(domain) || !bank.has_domain(other_domain)) {
    throw std::out_of_range("domain missing from the prototype bank");
  }
}

}  // namespace

FbcParts fbc_parts(const PrototypeBank& bank, Var feature, int domain, int other_domain, const PseudoLabel& pl,
                   const LossConfig& cfg) {
  check_domains(bank, domain, other_domain);
  const auto y = static_cast<std::size_t>(pl.cls);
  const double inv_t = 1.0 / cfg.temperature;
  Var p_same = softmax_rows(scale(bank.similarities(feature, domain), inv_t));
  Var p_diff = softmax_rows(scale(bank.similarities(feature, other_domain), inv_t));
  return {cross_entropy(p_same, y), cross_entropy(p_diff, y)};
}

SaParts sa_parts(const PrototypeBank& bank, Var feature, int domain, int other_domain, const LossConfig& cfg) {
  check_domains(bank, domain, other_domain);
  const auto n = static_cast<std::size_t>(cfg.resolved_top_n(bank.num_classes()));
  Var z_same = bank.similarities(feature, domain);
  Var z_diff = bank.similarities(feature, other_domain);
  SortedVar v = sort_desc_with_indices(z_same);
  Var phi_same = pick(v.values, 0, 0);
  Var Phi_same = mean_range(v.values, 1, n);
  Var phi_diff = pick(z_diff, 0, v.order.front());
  return {add_scalar(sub(Phi_same, phi_same), 1.0), add_scalar(scale(phi_diff, -1.0), 1.0)};
}

double fbc_loss(const PrototypeBank& bank, std::span<const double> feature, int domain, int other_domain,
                const PseudoLabel& pl, const LossConfig& cfg) {
  Tape tape;
  Var f = tape.constant(Tensor2::row_vector(feature));
  const FbcParts parts = fbc_parts(bank, f, domain, other_domain, pl, cfg);
  return add(parts.same, parts.diff).scalar();
}

double sa_loss(const PrototypeBank& bank, std::span<const double> feature, int domain, int other_domain,
               const LossConfig& cfg) {
  Tape tape;
  Var f = tape.constant(Tensor2::row_vector(feature));
  const SaParts parts = sa_parts(bank, f, domain, other_domain, cfg);
  return add(parts.same, parts.diff).scalar();
}

// ---- batch losses ----------------------------------------------------------

Var supervised_loss(const Model& model, const Model::Bound& bound, const Tensor2& x_weak, std::span<const int> labels) {
  if (x_weak.rows() != labels.size()) throw DimensionError("supervised_loss: rows and labels disagree");
  if (x_weak.rows() == 0) throw ContractError("supervised_loss: empty labeled batch");
  Tape& tape = *bound.params.front().tape();
  Var probs = softmax_rows(model.logits(bound, tape.constant(x_weak)));
  std::vector<Var> terms;
  terms.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) terms.push_back(cross_entropy(probs, i, static_cast<std::size_t>(labels[i])));
  return mean(terms);
}

Var unsupervised_loss(const Model& model, const Model::Bound& bound, const Tensor2& x_strong,
                      std::span<const std::optional<PseudoLabel>> pls) {
  if (x_strong.rows() != pls.size()) throw DimensionError("unsupervised_loss: rows and pseudo-labels disagree");
  Tape& tape = *bound.params.front().tape();
  const bool any = std::any_of(pls.begin(), pls.end(), [](const auto& p) { return p.has_value(); });
  if (!any) return tape.constant(Tensor2(1, 1, 0.0));
  Var probs = softmax_rows(model.logits(bound, tape.constant(x_strong)));
  std::vector<Var> terms;
  for (std::size_t i = 0; i < pls.size(); ++i)
    if (pls[i]) terms.push_back(cross_entropy(probs, i, static_cast<std::size_t>(pls[i]->cls)));
  return mean(terms);
}

namespace {

Tensor2 stack_rows(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  Tensor2 t(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw DimensionError("inconsistent input dimensions in batch");
    std::copy(rows[i].begin(), rows[i].end(), t.row(i).begin());
  }
  return t;
}

std::size_t input_cols(const ComposedBatch& b) {
  if (!b.labeled.empty()) return b.labeled.front().x.size();
  if (!b.merged.empty()) return b.merged.front().x.size();
  return 0;
}

}  // namespace

double supervised_loss(const Model& model, std::span<const Example> labeled, Augmenter& augmenter) {
  std::vector<std::vector<double>> views;
  std::vector<int> labels;
  for (const auto& e : labeled) {
    if (!e.label) throw ContractError("supervised_loss: example " + std::to_string(e.id) + " is unlabeled");
    views.push_back(augmenter.weak(e.x));
    labels.push_back(*e.label);
  }
  Tape tape;
  auto bound = model.bind(tape);
  return supervised_loss(model, bound, stack_rows(views, static_cast<std::size_t>(model.dims().input_dim)), labels)
      .scalar();
}

double unsupervised_loss(const Model& model, std::span<const Example> unlabeled,
                         std::span<const std::optional<PseudoLabel>> pls, Augmenter& augmenter) {
  std::vector<std::vector<double>> views;
  for (const auto& e : unlabeled) views.push_back(augmenter.strong(e.x));
  Tape tape;
  auto bound = model.bind(tape);
  return unsupervised_loss(model, bound, stack_rows(views, static_cast<std::size_t>(model.dims().input_dim)), pls)
      .scalar();
}

PreparedBatch prepare_batch(const ComposedBatch& batch, Augmenter& augmenter, Rng& other_rng,
                            std::span<const int> source_domains) {
  const std::size_t m = input_cols(batch);
  std::vector<std::vector<double>> lw, raw, mw, ms;
  PreparedBatch out;
  for (const auto& e : batch.labeled) {
    if (!e.label) throw ContractError("labeled part of the batch holds an unlabeled example");
    lw.push_back(augmenter.weak(e.x));
    out.labels.push_back(*e.label);
  }
  for (const auto& e : batch.merged) {
    raw.push_back(e.x);
    mw.push_back(augmenter.weak(e.x));
  }
  for (const auto& e : batch.merged) ms.push_back(augmenter.strong(e.x));
  for (const auto& e : batch.merged) {
    out.merged_domain.push_back(e.domain);
    out.other_domain.push_back(draw_other_domain(other_rng, source_domains, e.domain));
  }
  out.labeled_weak = stack_rows(lw, m);
  out.merged_raw = stack_rows(raw, m);
  out.merged_weak = stack_rows(mw, m);
  out.merged_strong = stack_rows(ms, m);
  return out;
}

TapedLoss total_loss(Tape& tape, const Model& model, const Model::Bound& bound, const PrototypeBank& bank,
                     const PreparedBatch& batch, const LossConfig& cfg) {
  cfg.validate(model.dims().num_classes);
  TapedLoss out;
  out.l_s = supervised_loss(model, bound, batch.labeled_weak, batch.labels);

  // Pseudo-labels come from the weak view.
  const std::size_t n = batch.merged_weak.rows();
  Var weak_feats = model.features(bound, tape.constant(batch.merged_weak));
  const Tensor2 weak_logits = model.classify(weak_feats.value());
  std::vector<std::optional<PseudoLabel>> pls(n);
  std::size_t confident = 0;
  for (std::size_t i = 0; i < n; ++i) {
    pls[i] = pseudo_label(weak_logits.row(i), cfg.tau);
    if (pls[i]) ++confident;
    const Tensor2 p = softmax_values(weak_logits.row_copy(i));
    tape.note_margin(std::abs(p[argmax(p.data())] - cfg.tau));
    if (p.cols() > 1) {
      const auto [sorted, _] = sort_desc_values(weak_logits.row(i));
      tape.note_margin(sorted[0] - sorted[1]);
    }
  }
  out.l_u = unsupervised_loss(model, bound, batch.merged_strong, pls);

  const LossTerms& t = cfg.terms;
  const bool fbc_on = t.fbc_same || t.fbc_diff;
  const bool sa_on = t.sa_same || t.sa_diff;
  std::vector<Var> fbc_terms, sa_terms;
  if (confident > 0 && (fbc_on || sa_on)) {
    Var feats = cfg.features_from_weak_view ? weak_feats : model.features(bound, tape.constant(batch.merged_raw));
    for (std::size_t i = 0; i < n; ++i) {
      if (!pls[i]) continue;
      Var f = select_row(feats, i);
      const int di = batch.merged_domain[i];
      const int dj = batch.other_domain[i];
      if (fbc_on) {
        const FbcParts p = fbc_parts(bank, f, di, dj, *pls[i], cfg);
        if (t.fbc_same && t.fbc_diff) fbc_terms.push_back(add(p.same, p.diff));
        else fbc_terms.push_back(t.fbc_same ? p.same : p.diff);
      }
      if (sa_on) {
        const SaParts p = sa_parts(bank, f, di, dj, cfg);
        if (t.sa_same && t.sa_diff) sa_terms.push_back(add(p.same, p.diff));
        else sa_terms.push_back(t.sa_same ? p.same : p.diff);
      }
    }
  }
  out.l_fbc = fbc_terms.empty() ? tape.constant(Tensor2(1, 1, 0.0)) : mean(fbc_terms);
  out.l_sa = sa_terms.empty() ? tape.constant(Tensor2(1, 1, 0.0)) : mean(sa_terms);
  out.total = add(add(add(out.l_s, out.l_u), out.l_fbc), out.l_sa);

  out.breakdown.l_s = out.l_s.scalar();
  out.breakdown.l_u = out.l_u.scalar();
  out.breakdown.l_fbc = out.l_fbc.scalar();
  out.breakdown.l_sa = out.l_sa.scalar();
  out.breakdown.total = out.total.scalar();
  out.breakdown.confident = confident;
  out.breakdown.unlabeled = n;
  return out;
}

LossBreakdown total_loss(const Model& model, const PrototypeBank& bank, const ComposedBatch& batch,
                         Augmenter& augmenter, Rng& other_rng, const LossConfig& cfg) {
  const auto sources = bank.domains();
  const PreparedBatch prepared = prepare_batch(batch, augmenter, other_rng, sources);
  Tape tape;
  const auto bound = model.bind(tape);
  return total_loss(tape, model, bound, bank, prepared, cfg).breakdown;
}

}  // namespace ssdg
