#include "ssdg/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ssdg/data.hpp"
#include "ssdg/errors.hpp"
#include "ssdg/rng.hpp"

namespace ssdg {

void ModelDims::validate() const {
  if (input_dim < 1 || feature_dim < 1 || num_classes < 1) throw ConfigError("model dimensions must be >= 1");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden layer widths must be >= 1");
}

namespace {

std::vector<int> layer_widths(const ModelDims& d) {
  std::vector<int> w{d.input_dim};
  w.insert(w.end(), d.hidden.begin(), d.hidden.end());
  w.push_back(d.feature_dim);
  return w;
}

void add_bias_values(Tensor2& x, const Tensor2& b) {
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) += b[c];
}

void relu_values(Tensor2& x) {
  for (double& v : x.data())
    if (v < 0.0) v = 0.0;
}

}  // namespace

Model Model::init(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  Model m;
  m.dims_ = dims;
  Rng rng = substream(seed, "init");
  auto layer = [&](const std::string& prefix, ParamGroup group, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-bound, bound);
    Tensor2 w(static_cast<std::size_t>(fan_in), static_cast<std::size_t>(fan_out));
    for (double& v : w.data()) v = uni(rng);
    m.params_.push_back({prefix + ".weight", group, std::move(w)});
    m.params_.push_back({prefix + ".bias", group, Tensor2(1, static_cast<std::size_t>(fan_out))});
  };
  const auto widths = layer_widths(dims);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layer("encoder." + std::to_string(i), ParamGroup::Encoder, widths[i], widths[i + 1]);
  }
  m.encoder_layers_ = widths.size() - 1;
  layer("classifier", ParamGroup::Classifier, dims.feature_dim, dims.num_classes);
  return m;
}

std::size_t Model::parameter_count(const ModelDims& dims) {
  auto widths = layer_widths(dims);
  widths.push_back(dims.num_classes);
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    n += static_cast<std::size_t>(widths[i] + 1) * static_cast<std::size_t>(widths[i + 1]);
  }
  return n;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

const Parameter& Model::parameter(const std::string& id) const {
  for (const auto& p : params_)
    if (p.id == id) return p;
  throw std::out_of_range("model has no parameter '" + id + "'");
}

Parameter& Model::parameter(const std::string& id) {
  return const_cast<Parameter&>(static_cast<const Model&>(*this).parameter(id));
}

Model::Bound Model::bind(Tape& tape) const {
  Bound b;
  b.params.reserve(params_.size());
  for (const auto& p : params_) b.params.push_back(tape.parameter(p.id, p.value));
  return b;
}

Var Model::features(const Bound& bound, Var x) const {
  if (x.value().cols() != static_cast<std::size_t>(dims_.input_dim)) {
    throw DimensionError("features: input has shape " + x.value().shape_string() + ", model expects " +
                         std::to_string(dims_.input_dim) + " columns");
  }
  Var h = x;
  for (std::size_t l = 0; l < encoder_layers_; ++l) {
    h = add_bias(matmul(h, bound.params[2 * l]), bound.params[2 * l + 1]);
    if (l + 1 < encoder_layers_) h = relu(h);
  }
  return h;
}

Var Model::classify(const Bound& bound, Var features) const {
  const std::size_t k = 2 * encoder_layers_;
  return add_bias(matmul(features, bound.params[k]), bound.params[k + 1]);
}

Var Model::logits(const Bound& bound, Var x) const { return classify(bound, features(bound, x)); }

Tensor2 Model::features(const Tensor2& x) const {
  if (x.cols() != static_cast<std::size_t>(dims_.input_dim)) {
    throw DimensionError("features: input has shape " + x.shape_string() + ", model expects " +
                         std::to_string(dims_.input_dim) + " columns");
  }
  Tensor2 h = x;
  for (std::size_t l = 0; l < encoder_layers_; ++l) {
    h = matmul_values(h, params_[2 * l].value);
    add_bias_values(h, params_[2 * l + 1].value);
    if (l + 1 < encoder_layers_) relu_values(h);
  }
  return h;
}

Tensor2 Model::classify(const Tensor2& features) const {
  const std::size_t k = 2 * encoder_layers_;
  Tensor2 out = matmul_values(features, params_[k].value);
  add_bias_values(out, params_[k + 1].value);
  return out;
}

Tensor2 Model::logits(const Tensor2& x) const { return classify(features(x)); }

// Text checkpoint:
//   ssdg-checkpoint 1
//   dims <input> <n_hidden> <hidden...> <feature> <classes>
//   param <id> <encoder|classifier> <rows> <cols>
//   <rows lines of cols values>
void Model::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ssdg-checkpoint 1\n";
  out << "dims " << dims_.input_dim << ' ' << dims_.hidden.size();
  for (int h : dims_.hidden) out << ' ' << h;
  out << ' ' << dims_.feature_dim << ' ' << dims_.num_classes << '\n';
  for (const auto& p : params_) {
    out << "param " << p.id << ' ' << (p.group == ParamGroup::Encoder ? "encoder" : "classifier") << ' '
        << p.value.rows() << ' ' << p.value.cols() << '\n';
    for (std::size_t r = 0; r < p.value.rows(); ++r) {
      for (std::size_t c = 0; c < p.value.cols(); ++c) out << (c ? " " : "") << format_real(p.value(r, c));
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "ssdg-checkpoint" || version != 1) throw SchemaError("not a version-1 checkpoint: " + path.string());
  std::string tag;
  ModelDims dims;
  std::size_t nh = 0;
  in >> tag >> dims.input_dim >> nh;
  if (tag != "dims" || !in) throw SchemaError("checkpoint: missing dims line");
  dims.hidden.resize(nh);
  for (int& h : dims.hidden) in >> h;
  in >> dims.feature_dim >> dims.num_classes;
  if (!in) throw SchemaError("checkpoint: malformed dims line");
  Model m = Model::init(dims, 0);
  for (auto& p : m.params_) {
    std::string id, group;
    std::size_t rows = 0, cols = 0;
    in >> tag >> id >> group >> rows >> cols;
    if (tag != "param" || id != p.id || rows != p.value.rows() || cols != p.value.cols()) {
      throw SchemaError("checkpoint: expected parameter " + p.id + " " + p.value.shape_string());
    }
    for (double& v : p.value.data()) {
      std::string tok;
      in >> tok;
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (tok.empty() || *end != '\0') throw SchemaError("checkpoint: malformed value in " + p.id);
    }
  }
  return m;
}

}  // namespace ssdg
