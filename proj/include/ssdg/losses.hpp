#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ssdg/autodiff.hpp"
#include "ssdg/data.hpp"
#include "ssdg/model.hpp"
#include "ssdg/prototypes.hpp"
#include "ssdg/rng.hpp"

namespace ssdg {

struct PseudoLabel {
  int cls = 0;
  double confidence = 0.0;
};

// Softmax the row; keep argmax (lowest index on ties) when its probability
// reaches tau.
std::optional<PseudoLabel> pseudo_label(std::span<const double> logits_row, double tau);

// Which halves of the prototype losses are active. All four off is the
// FixMatch-style baseline.
struct LossTerms {
  bool fbc_same = true;
  bool fbc_diff = true;
  bool sa_same = true;
  bool sa_diff = true;

  static LossTerms baseline() { return {false, false, false, false}; }
  bool any() const { return fbc_same || fbc_diff || sa_same || sa_diff; }
  friend bool operator==(const LossTerms&, const LossTerms&) = default;
};

struct LossConfig {
  double tau = 0.95;
  // Size of the top-N window for the hard-negative average; 0 means ceil(C/2).
  int top_n = 0;
  // Softmax temperature applied to cosine similarities before the FBC CE.
  double temperature = 1.0;
  // FBC/SA use features of the weak view (true) or of the raw input (false).
  bool features_from_weak_view = true;
  LossTerms terms;

  int resolved_top_n(int num_classes) const;
  void validate(int num_classes) const;
};

struct SimilarityProfile {
  std::vector<double> z_same;
  std::vector<double> z_diff;
  double phi_same = 0.0;  // max(z_same)
  double Phi_same = 0.0;  // mean of sorted z_same positions 2..N (1-indexed)
  double phi_diff = 0.0;  // z_diff at argmax(z_same)
  int diff_domain = 0;
  std::size_t assigned = 0;  // argmax(z_same)
};

SimilarityProfile similarity_profile(const PrototypeBank& bank, std::span<const double> feature, int domain,
                                     int other_domain, int top_n);

// Uniform over `sources` minus `domain`. ConfigError with < 2 sources.
int draw_other_domain(Rng& rng, std::span<const int> sources, int domain);

// ---- per-sample prototype losses ------------------------------------------

struct FbcParts {
  Var same;  // CE(softmax(z^{d_i}/T), ỹ)
  Var diff;  // CE(softmax(z^{d_j}/T), ỹ)
};
FbcParts fbc_parts(const PrototypeBank& bank, Var feature, int domain, int other_domain, const PseudoLabel& pl,
                   const LossConfig& cfg);

struct SaParts {
  Var same;  // 1 − φ^{d_i} + Φ^{d_i}
  Var diff;  // 1 − φ^{d_j}
};
SaParts sa_parts(const PrototypeBank& bank, Var feature, int domain, int other_domain, const LossConfig& cfg);

// Sum of both halves (toggles ignored). Value-level convenience wrappers.
double fbc_loss(const PrototypeBank& bank, std::span<const double> feature, int domain, int other_domain,
                const PseudoLabel& pl, const LossConfig& cfg);
double sa_loss(const PrototypeBank& bank, std::span<const double> feature, int domain, int other_domain,
               const LossConfig& cfg);

// ---- batch losses ----------------------------------------------------------

// Mean CE of softmax(F(x_weak)) against labels.
Var supervised_loss(const Model& model, const Model::Bound& bound, const Tensor2& x_weak, std::span<const int> labels);
// Mean CE of softmax(F(x_strong)) against ỹ over confident rows; 0 if none.
Var unsupervised_loss(const Model& model, const Model::Bound& bound, const Tensor2& x_strong,
                      std::span<const std::optional<PseudoLabel>> pls);

// Value-level forms drawing their own views. supervised_loss throws
// ContractError on an unlabeled example.
double supervised_loss(const Model& model, std::span<const Example> labeled, Augmenter& augmenter);
double unsupervised_loss(const Model& model, std::span<const Example> unlabeled,
                         std::span<const std::optional<PseudoLabel>> pls, Augmenter& augmenter);

// One training step's samples before augmentation.
struct ComposedBatch {
  std::vector<Example> labeled;  // per-domain labeled draws, labels kept
  std::vector<Example> merged;   // unlabeled draws + labeled draws, labels stripped
};

// Augmented views and sampled other-domains, fixed before any forward pass so
// the loss is a deterministic function of the parameters.
struct PreparedBatch {
  Tensor2 labeled_weak;
  std::vector<int> labels;
  Tensor2 merged_raw;
  Tensor2 merged_weak;
  Tensor2 merged_strong;
  std::vector<int> merged_domain;
  std::vector<int> other_domain;
};

// Draw order: labeled weak views, merged weak views, merged strong views;
// one other-domain draw per merged sample from `other_rng`.
PreparedBatch prepare_batch(const ComposedBatch& batch, Augmenter& augmenter, Rng& other_rng,
                            std::span<const int> source_domains);

struct LossBreakdown {
  double l_s = 0.0;
  double l_u = 0.0;
  double l_fbc = 0.0;
  double l_sa = 0.0;
  double total = 0.0;
  std::size_t confident = 0;
  std::size_t unlabeled = 0;
};

struct TapedLoss {
  Var total;
  Var l_s, l_u, l_fbc, l_sa;
  LossBreakdown breakdown;
};

// L = L_s + L_u + L_FBC + L_SA. L_u, L_FBC and L_SA average over confident
// merged samples only.
// `bound` must be `model` bound to `tape`.
TapedLoss total_loss(Tape& tape, const Model& model, const Model::Bound& bound, const PrototypeBank& bank,
                     const PreparedBatch& batch, const LossConfig& cfg);
LossBreakdown total_loss(const Model& model, const PrototypeBank& bank, const ComposedBatch& batch,
                         Augmenter& augmenter, Rng& other_rng, const LossConfig& cfg);

}  // namespace ssdg
