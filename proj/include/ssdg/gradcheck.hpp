#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssdg/autodiff.hpp"
#include "ssdg/data.hpp"
#include "ssdg/model.hpp"

namespace ssdg {

// Builds the scalar loss for `model` on `tape`. Must be a deterministic
// function of the model parameters.
using LossFn = std::function<Var(Tape& tape, const Model& model, const Model::Bound& bound)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t entries = 0;
  // Smallest distance to a non-smooth selection seen in the analytic pass.
  double min_margin = 0.0;
  double loss = 0.0;
};

// |a − n| / max(|a|, |n|, floor). The floor keeps entries whose true
// gradient is ~0 from dividing rounding noise by ~0.
double relative_error(double analytic, double numeric, double floor = 1e-6);
double max_relative_error(const Gradients& a, const Gradients& b, double floor = 1e-6);

// Central differences with step `step` on every parameter entry.
Gradients numeric_gradients(const Model& model, const LossFn& loss, double step = 1e-5);
GradCheckReport grad_check(const Model& model, const LossFn& loss, double step = 1e-5);

// Randomized checks of the full training loss (all four terms) on small
// models and composed two- or three-domain batches.
struct GradCheckOptions {
  int configurations = 20;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Configurations whose nearest kink is closer than this are redrawn.
  double min_margin = 1e-3;
  int max_attempts = 400;
  std::vector<int> hidden = {10};
  int feature_dim = 8;
  int input_dim = 6;
  int min_classes = 2, max_classes = 6;
  int min_domains = 2, max_domains = 3;
  int labeled_per_domain = 3;
  int unlabeled_per_domain = 3;
  double tau = 0.0;
  double temperature = 0.5;
};

struct GradCheckCase {
  int num_classes = 0;
  int num_domains = 0;
  std::size_t parameters = 0;
  std::size_t confident = 0;
  GradCheckReport report;
};

struct GradCheckSweep {
  std::vector<GradCheckCase> cases;
  int rejected = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

GradCheckSweep gradcheck_sweep(const GradCheckOptions& opts, std::uint64_t seed);

}  // namespace ssdg
