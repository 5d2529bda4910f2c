#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssdg/rng.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

struct Example {
  std::vector<double> x;
  std::optional<int> label;  // visible to training; empty means unlabeled
  int domain = 0;
  // Ground truth kept for diagnostics (PL accuracy, target evaluation). Never
  // read by the losses. Not persisted by save_csv.
  std::optional<int> truth;
  // Unique within the generated dataset; row index after load_csv.
  std::uint64_t id = 0;

  // Equality covers the persisted fields plus id; `truth` is diagnostic only.
  friend bool operator==(const Example& a, const Example& b) {
    return a.domain == b.domain && a.label == b.label && a.id == b.id && a.x == b.x;
  }
};

struct DomainData {
  int domain = 0;
  std::vector<Example> labeled;
  std::vector<Example> unlabeled;
  friend bool operator==(const DomainData&, const DomainData&) = default;
};

class MultiDomainDataset {
 public:
  MultiDomainDataset() = default;
  MultiDomainDataset(int num_classes, int input_dim, std::vector<DomainData> domains);

  int num_classes() const noexcept { return num_classes_; }
  int input_dim() const noexcept { return input_dim_; }
  int num_domains() const noexcept { return static_cast<int>(domains_.size()); }
  const std::vector<DomainData>& domains() const noexcept { return domains_; }
  std::vector<int> domain_ids() const;
  const DomainData& domain(int id) const;
  bool has_domain(int id) const;

  // Training view with domain `held_out` removed entirely.
  MultiDomainDataset without(int held_out) const;
  // Every example of one domain with its ground truth as the label; used as
  // the target set under leave-one-domain-out.
  std::vector<Example> evaluation_set(int domain) const;
  std::size_t labeled_count() const;
  std::size_t unlabeled_count() const;

  // Throws ConfigError / SchemaError when a structural invariant is broken.
  void validate() const;

  friend bool operator==(const MultiDomainDataset&, const MultiDomainDataset&) = default;

 private:
  int num_classes_ = 0;
  int input_dim_ = 0;
  std::vector<DomainData> domains_;
};

// ---- generation ------------------------------------------------------------

enum class ShiftPreset { None, Rotation, Offset, Corruption, RotationOffset };

ShiftPreset parse_shift_preset(const std::string& name);
std::string to_string(ShiftPreset preset);

// Per-domain transform parameters. Domain d's samples are
//   x = R_d (separation · μ_c + noise · ε) + offset_d · u_d
// followed by zeroing each coordinate with probability corruption_d, where
// R_d rotates by rotation_d radians in every plane of a shared random basis
// and u_d is a random unit direction.
struct ShiftSpec {
  std::vector<double> rotation;
  std::vector<double> offset;
  std::vector<double> corruption;
  double noise_scale = 1.0;
  double class_separation = 3.0;
  std::uint64_t seed = 0;

  // Domain d gets rotation d·rotation_step, offset d·offset_step, and
  // corruption d·corruption_step (each only for presets including that shift).
  static ShiftSpec preset(ShiftPreset preset, int num_domains, std::uint64_t seed, double rotation_step = 0.35,
                          double offset_step = 0.8, double corruption_step = 0.1);
  void validate(int num_domains) const;
};

struct GenerateParams {
  int num_classes = 5;
  int num_domains = 4;
  int input_dim = 20;
  int per_class_per_domain = 60;
  int labels_per_class = 5;
};

MultiDomainDataset generate(const ShiftSpec& spec, const GenerateParams& params);

// Rotation matrix R_d used for `domain` (exposed for the orthogonality check).
Tensor2 domain_rotation(const ShiftSpec& spec, const GenerateParams& params, int domain);

// ---- augmentation ----------------------------------------------------------

struct AugmentConfig {
  double weak_noise = 0.05;
  double strong_noise = 0.25;
  double strong_drop = 0.1;
  void validate() const;
};

// Vector-space weak/strong views. Draws come from one owned stream in call
// order.
class Augmenter {
 public:
  Augmenter(AugmentConfig cfg, Rng rng);
  std::vector<double> weak(std::span<const double> x);
  std::vector<double> strong(std::span<const double> x);
  const AugmentConfig& config() const noexcept { return cfg_; }

 private:
  AugmentConfig cfg_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// ---- CSV I/O ---------------------------------------------------------------

struct CsvSchema {
  int num_classes = 0;
  int num_domains = 0;
  int input_dim = 0;  // 0: take from the header
};

std::string csv_header(int input_dim);
void save_csv(const MultiDomainDataset& ds, const std::filesystem::path& path);
MultiDomainDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
// Decimal with 17 significant digits.
std::string format_real(double v);

}  // namespace ssdg
