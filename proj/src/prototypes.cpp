#include "ssdg/prototypes.hpp"

#include <fstream>

#include "ssdg/errors.hpp"

namespace ssdg {

PrototypeBank PrototypeBank::build(const Model& model, const MultiDomainDataset& dataset) {
  PrototypeBank bank;
  bank.num_classes_ = dataset.num_classes();
  bank.feature_dim_ = static_cast<std::size_t>(model.dims().feature_dim);
  const auto C = static_cast<std::size_t>(dataset.num_classes());
  const std::size_t h = bank.feature_dim_;
  for (const auto& d : dataset.domains()) {
    Tensor2 sums(C, h);
    std::vector<std::size_t> counts(C, 0);
    if (!d.labeled.empty()) {
      Tensor2 x(d.labeled.size(), static_cast<std::size_t>(dataset.input_dim()));
      for (std::size_t i = 0; i < d.labeled.size(); ++i) {
        std::copy(d.labeled[i].x.begin(), d.labeled[i].x.end(), x.row(i).begin());
      }
      const Tensor2 feats = model.features(x);
      for (std::size_t i = 0; i < d.labeled.size(); ++i) {
        const auto c = static_cast<std::size_t>(*d.labeled[i].label);
        auto f = feats.row(i);
        auto s = sums.row(c);
        for (std::size_t k = 0; k < h; ++k) s[k] += f[k];
        ++counts[c];
      }
    }
    for (std::size_t c = 0; c < C; ++c) {
      if (counts[c] == 0) throw MissingPrototypeError(d.domain, static_cast<int>(c));
      auto s = sums.row(c);
      for (double& v : s) v /= static_cast<double>(counts[c]);
      if (l2_norm(s) == 0.0) {
        throw DegenerateInputError("prototype (domain " + std::to_string(d.domain) + ", class " +
                                   std::to_string(c) + ") has zero norm");
      }
    }
    bank.by_domain_.emplace(d.domain, std::move(sums));
  }
  return bank;
}

PrototypeBank PrototypeBank::from_matrices(std::map<int, Tensor2> by_domain, int epoch) {
  if (by_domain.empty()) throw std::invalid_argument("prototype bank needs at least one domain");
  PrototypeBank bank;
  const Tensor2& first = by_domain.begin()->second;
  bank.num_classes_ = static_cast<int>(first.rows());
  bank.feature_dim_ = first.cols();
  for (const auto& [d, k] : by_domain) {
    if (k.rows() != first.rows() || k.cols() != first.cols())
      throw DimensionError("prototype matrices disagree in shape: " + k.shape_string() + " vs " + first.shape_string());
    for (std::size_t c = 0; c < k.rows(); ++c)
      if (l2_norm(k.row(c)) == 0.0)
        throw DegenerateInputError("prototype (domain " + std::to_string(d) + ", class " + std::to_string(c) +
                                   ") has zero norm");
  }
  bank.by_domain_ = std::move(by_domain);
  bank.epoch_ = epoch;
  return bank;
}

PrototypeBank PrototypeBank::refresh(const Model& model, const MultiDomainDataset& dataset) const {
  PrototypeBank next = build(model, dataset);
  next.epoch_ = epoch_ + 1;
  return next;
}

std::vector<int> PrototypeBank::domains() const {
  std::vector<int> ids;
  for (const auto& [d, _] : by_domain_) ids.push_back(d);
  return ids;
}

const Tensor2& PrototypeBank::domain_prototypes(int domain) const {
  auto it = by_domain_.find(domain);
  if (it == by_domain_.end()) throw std::out_of_range("prototype bank has no domain " + std::to_string(domain));
  return it->second;
}

std::span<const double> PrototypeBank::prototype(int domain, int cls) const {
  const Tensor2& k = domain_prototypes(domain);
  if (cls < 0 || cls >= num_classes_) throw std::out_of_range("prototype class out of range");
  return k.row(static_cast<std::size_t>(cls));
}

std::vector<double> PrototypeBank::similarities(std::span<const double> feature, int domain) const {
  const Tensor2& k = domain_prototypes(domain);
  std::vector<double> z(k.rows());
  for (std::size_t c = 0; c < k.rows(); ++c) z[c] = cosine_similarity(feature, k.row(c));
  return z;
}

Var PrototypeBank::similarities(Var feature, int domain) const { return cosine_sims(feature, domain_prototypes(domain)); }

void PrototypeBank::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "domain,class";
  for (std::size_t k = 0; k < feature_dim_; ++k) out << ",k" << k;
  out << '\n';
  for (const auto& [d, protos] : by_domain_) {
    for (std::size_t c = 0; c < protos.rows(); ++c) {
      out << d << ',' << c;
      for (double v : protos.row(c)) out << ',' << format_real(v);
      out << '\n';
    }
  }
}

}  // namespace ssdg
