#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssdg/autodiff.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

struct ModelDims {
  int input_dim = 20;
  std::vector<int> hidden = {64, 64};
  int feature_dim = 32;
  int num_classes = 5;

  void validate() const;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

enum class ParamGroup { Encoder, Classifier };

struct Parameter {
  std::string id;
  ParamGroup group;
  Tensor2 value;
  friend bool operator==(const Parameter&, const Parameter&) = default;
};

// Encoder f: input → hidden... → features (relu between layers, linear
// output); classifier w: features → logits. Weights are stored (fan_in ×
// fan_out) so a batch maps as X·W + b.
class Model {
 public:
  // Parameters on one tape, in the model's parameter order.
  struct Bound {
    std::vector<Var> params;
  };

  // Scaled-uniform weights with bound sqrt(6 / (fan_in + fan_out)); zero biases.
  static Model init(const ModelDims& dims, std::uint64_t seed);
  static std::size_t parameter_count(const ModelDims& dims);

  const ModelDims& dims() const noexcept { return dims_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  std::size_t parameter_count() const;
  const Parameter& parameter(const std::string& id) const;
  Parameter& parameter(const std::string& id);

  Bound bind(Tape& tape) const;
  Var features(const Bound& bound, Var x) const;
  Var classify(const Bound& bound, Var features) const;
  Var logits(const Bound& bound, Var x) const;

  // Untaped forward passes; bit-identical to the taped ones.
  Tensor2 features(const Tensor2& x) const;
  Tensor2 classify(const Tensor2& features) const;
  Tensor2 logits(const Tensor2& x) const;

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

  friend bool operator==(const Model&, const Model&) = default;

 private:
  ModelDims dims_;
  std::vector<Parameter> params_;
  std::size_t encoder_layers_ = 0;
};

}  // namespace ssdg
