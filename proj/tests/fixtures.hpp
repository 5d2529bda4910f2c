#pragma once
// Random instances shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "ssdg/data.hpp"
#include "ssdg/losses.hpp"
#include "ssdg/model.hpp"
#include "ssdg/prototypes.hpp"
#include "ssdg/trainer.hpp"

namespace fixtures {

inline ssdg::Tensor2 gaussian(std::mt19937_64& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  ssdg::Tensor2 t(r, c);
  for (double& v : t.data()) v = g(rng);
  return t;
}

inline std::vector<double> gaussian_vec(std::mt19937_64& rng, std::size_t n) {
  const ssdg::Tensor2 t = gaussian(rng, 1, n);
  return {t.data().begin(), t.data().end()};
}

inline ssdg::PrototypeBank random_bank(std::mt19937_64& rng, int classes, int domains, std::size_t h) {
  std::map<int, ssdg::Tensor2> m;
  for (int d = 0; d < domains; ++d) m.emplace(d, gaussian(rng, static_cast<std::size_t>(classes), h));
  return ssdg::PrototypeBank::from_matrices(std::move(m));
}

// Small generated problem with a fresh model and one prepared batch.
struct ToyProblem {
  ssdg::MultiDomainDataset dataset;
  ssdg::Model model;
  ssdg::PrototypeBank bank;
  ssdg::PreparedBatch batch;
};

inline ToyProblem toy_problem(std::uint64_t seed, int classes, int domains, int input_dim = 6,
                              std::vector<int> hidden = {24}, int feature_dim = 5, int per_domain = 4) {
  ssdg::GenerateParams p;
  p.num_classes = classes;
  p.num_domains = domains;
  p.input_dim = input_dim;
  p.per_class_per_domain = 4;
  p.labels_per_class = 2;
  auto ds = ssdg::generate(ssdg::ShiftSpec::preset(ssdg::ShiftPreset::RotationOffset, domains, seed), p);
  auto model = ssdg::Model::init(ssdg::ModelDims{input_dim, hidden, feature_dim, classes}, seed + 1);
  auto bank = ssdg::PrototypeBank::build(model, ds);
  ssdg::Rng rng = ssdg::substream(seed, "toy/batch");
  ssdg::Rng other = ssdg::substream(seed, "toy/other");
  ssdg::Augmenter aug(ssdg::AugmentConfig{}, ssdg::substream(seed, "toy/augment"));
  const auto composed = ssdg::compose_batch(ds, rng, per_domain, per_domain);
  auto batch = ssdg::prepare_batch(composed, aug, other, ds.domain_ids());
  return {std::move(ds), std::move(model), std::move(bank), std::move(batch)};
}

}  // namespace fixtures
