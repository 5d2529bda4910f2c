#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "ssdg/autodiff.hpp"
#include "ssdg/data.hpp"
#include "ssdg/model.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

// Domain-aware class prototypes: for every (source domain d, class c) the
// mean encoder feature of the raw labeled examples of c in d. Stored as plain
// values, so nothing recorded against the bank can receive a gradient.
class PrototypeBank {
 public:
  PrototypeBank() = default;

  // Throws MissingPrototypeError for an empty (domain, class) cell and
  // DegenerateInputError for a zero-norm mean.
  static PrototypeBank build(const Model& model, const MultiDomainDataset& dataset);
  // Bank over explicit per-domain C×h matrices (row c = class c). All
  // matrices must share one shape; zero rows are rejected as in build.
  static PrototypeBank from_matrices(std::map<int, Tensor2> by_domain, int epoch = 0);
  // Recompute with the model's current weights; epoch stamp + 1.
  PrototypeBank refresh(const Model& model, const MultiDomainDataset& dataset) const;

  int epoch() const noexcept { return epoch_; }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::vector<int> domains() const;
  bool has_domain(int domain) const { return by_domain_.count(domain) != 0; }

  // C×h matrix whose row c is K_c^d.
  const Tensor2& domain_prototypes(int domain) const;
  std::span<const double> prototype(int domain, int cls) const;

  // z^d[c] = cos(feature, K_c^d).
  std::vector<double> similarities(std::span<const double> feature, int domain) const;
  // Taped version: differentiable in `feature` (1×h), constant in the bank.
  Var similarities(Var feature, int domain) const;

  // CSV `domain,class,k0..k{h-1}`.
  void save_csv(const std::filesystem::path& path) const;

  friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;

 private:
  std::map<int, Tensor2> by_domain_;
  int num_classes_ = 0;
  std::size_t feature_dim_ = 0;
  int epoch_ = 0;
};

}  // namespace ssdg
