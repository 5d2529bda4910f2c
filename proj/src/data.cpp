#include "ssdg/data.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ssdg/errors.hpp"

namespace ssdg {

MultiDomainDataset::MultiDomainDataset(int num_classes, int input_dim, std::vector<DomainData> domains)
    : num_classes_(num_classes), input_dim_(input_dim), domains_(std::move(domains)) {
  std::sort(domains_.begin(), domains_.end(),
            [](const DomainData& a, const DomainData& b) { return a.domain < b.domain; });
}

std::vector<int> MultiDomainDataset::domain_ids() const {
  std::vector<int> ids;
  for (const auto& d : domains_) ids.push_back(d.domain);
  return ids;
}

bool MultiDomainDataset::has_domain(int id) const {
  return std::any_of(domains_.begin(), domains_.end(), [id](const DomainData& d) { return d.domain == id; });
}

const DomainData& MultiDomainDataset::domain(int id) const {
  for (const auto& d : domains_)
    if (d.domain == id) return d;
  throw std::out_of_range("dataset has no domain " + std::to_string(id));
}

MultiDomainDataset MultiDomainDataset::without(int held_out) const {
  if (!has_domain(held_out)) throw std::out_of_range("cannot hold out missing domain " + std::to_string(held_out));
  std::vector<DomainData> kept;
  for (const auto& d : domains_)
    if (d.domain != held_out) kept.push_back(d);
  return MultiDomainDataset(num_classes_, input_dim_, std::move(kept));
}

std::vector<Example> MultiDomainDataset::evaluation_set(int id) const {
  const DomainData& d = domain(id);
  std::vector<Example> out;
  out.reserve(d.labeled.size() + d.unlabeled.size());
  for (const auto* part : {&d.labeled, &d.unlabeled}) {
    for (Example e : *part) {
      if (!e.truth) e.truth = e.label;
      if (!e.truth) continue;  // loaded from CSV without ground truth
      e.label = e.truth;
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::size_t MultiDomainDataset::labeled_count() const {
  std::size_t n = 0;
  for (const auto& d : domains_) n += d.labeled.size();
  return n;
}

std::size_t MultiDomainDataset::unlabeled_count() const {
  std::size_t n = 0;
  for (const auto& d : domains_) n += d.unlabeled.size();
  return n;
}

void MultiDomainDataset::validate() const {
  if (num_classes_ < 2) throw ConfigError("dataset needs at least 2 classes");
  if (input_dim_ < 1) throw ConfigError("dataset needs a positive input dimension");
  for (const auto& d : domains_) {
    std::vector<int> per_class(static_cast<std::size_t>(num_classes_), 0);
    auto check = [&](const Example& e, bool labeled) {
      if (e.domain != d.domain) throw SchemaError("example filed under the wrong domain");
      if (static_cast<int>(e.x.size()) != input_dim_) throw SchemaError("example has wrong input dimension");
      if (!std::all_of(e.x.begin(), e.x.end(), [](double v) { return std::isfinite(v); }))
        throw SchemaError("example has a non-finite input");
      if (labeled != e.label.has_value()) throw SchemaError("label presence does not match its split");
      if (e.label && (*e.label < 0 || *e.label >= num_classes_)) throw SchemaError("label out of range");
      if (labeled) ++per_class[static_cast<std::size_t>(*e.label)];
    };
    for (const auto& e : d.labeled) check(e, true);
    for (const auto& e : d.unlabeled) check(e, false);
    for (int c = 0; c < num_classes_; ++c) {
      if (per_class[static_cast<std::size_t>(c)] == 0) {
        throw ConfigError("domain " + std::to_string(d.domain) + " has no labeled example of class " +
                          std::to_string(c));
      }
    }
    if (d.unlabeled.size() < d.labeled.size()) {
      throw ConfigError("domain " + std::to_string(d.domain) + " has fewer unlabeled than labeled examples");
    }
  }
}

// ---- generation ------------------------------------------------------------

ShiftPreset parse_shift_preset(const std::string& name) {
  if (name == "none") return ShiftPreset::None;
  if (name == "rotation") return ShiftPreset::Rotation;
  if (name == "offset") return ShiftPreset::Offset;
  if (name == "corruption") return ShiftPreset::Corruption;
  if (name == "rotation_offset") return ShiftPreset::RotationOffset;
  throw ConfigError("unknown shift preset '" + name + "' (expected none|rotation|offset|corruption|rotation_offset)");
}

std::string to_string(ShiftPreset preset) {
  switch (preset) {
    case ShiftPreset::None: return "none";
    case ShiftPreset::Rotation: return "rotation";
    case ShiftPreset::Offset: return "offset";
    case ShiftPreset::Corruption: return "corruption";
    case ShiftPreset::RotationOffset: return "rotation_offset";
  }
  return "none";
}

ShiftSpec ShiftSpec::preset(ShiftPreset preset, int num_domains, std::uint64_t seed, double rotation_step,
                            double offset_step, double corruption_step) {
  ShiftSpec s;
  s.seed = seed;
  const bool rot = preset == ShiftPreset::Rotation || preset == ShiftPreset::RotationOffset;
  const bool off = preset == ShiftPreset::Offset || preset == ShiftPreset::RotationOffset;
  const bool cor = preset == ShiftPreset::Corruption;
  for (int d = 0; d < num_domains; ++d) {
    s.rotation.push_back(rot ? d * rotation_step : 0.0);
    s.offset.push_back(off ? d * offset_step : 0.0);
    s.corruption.push_back(cor ? d * corruption_step : 0.0);
  }
  return s;
}

void ShiftSpec::validate(int num_domains) const {
  const auto n = static_cast<std::size_t>(num_domains);
  if (rotation.size() != n || offset.size() != n || corruption.size() != n) {
    throw ConfigError("shift spec must list rotation, offset and corruption for each of the " +
                      std::to_string(num_domains) + " domains");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(rotation.begin(), rotation.end(), finite) || !std::all_of(offset.begin(), offset.end(), finite))
    throw ConfigError("shift spec has non-finite parameters");
  for (double p : corruption)
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("corruption probability must lie in [0, 1)");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw ConfigError("noise_scale must be finite and >= 0");
  if (!(class_separation > 0.0) || !std::isfinite(class_separation))
    throw ConfigError("class_separation must be finite and > 0");
}

namespace {

void validate_params(const GenerateParams& p) {
  if (p.num_domains < 2) throw ConfigError("at least 2 domains are required, got " + std::to_string(p.num_domains));
  if (p.num_classes < 2) throw ConfigError("at least 2 classes are required");
  if (p.input_dim < 2) throw ConfigError("input_dim must be >= 2");
  if (p.labels_per_class < 1) throw ConfigError("labels_per_class must be >= 1");
  if (p.labels_per_class > p.per_class_per_domain) {
    throw ConfigError("labels_per_class (" + std::to_string(p.labels_per_class) +
                      ") exceeds per_class_per_domain (" + std::to_string(p.per_class_per_domain) + ")");
  }
  if (p.per_class_per_domain - p.labels_per_class < p.labels_per_class) {
    throw ConfigError("each domain needs at least as many unlabeled as labeled examples");
  }
}

std::vector<double> unit_gaussian(Rng& rng, int m) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(m));
  double n = 0.0;
  do {
    for (double& x : v) x = normal(rng);
    n = l2_norm(v);
  } while (n == 0.0);
  for (double& x : v) x /= n;
  return v;
}

// Orthonormal basis (columns) by modified Gram-Schmidt on Gaussian vectors.
Tensor2 random_orthogonal(Rng& rng, int m) {
  const auto n = static_cast<std::size_t>(m);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> cols;
  while (cols.size() < n) {
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    for (const auto& q : cols) {
      const double p = dot(v, q);
      for (std::size_t i = 0; i < n; ++i) v[i] -= p * q[i];
    }
    const double len = l2_norm(v);
    if (len < 1e-8) continue;
    for (double& x : v) x /= len;
    cols.push_back(std::move(v));
  }
  Tensor2 q(n, n);
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t r = 0; r < n; ++r) q(r, c) = cols[c][r];
  return q;
}

Tensor2 rotation_for(const Tensor2& basis, double angle) {
  const std::size_t n = basis.rows();
  Tensor2 block = Tensor2::identity(n);
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t k = 0; k + 1 < n; k += 2) {
    block(k, k) = c;
    block(k, k + 1) = -s;
    block(k + 1, k) = s;
    block(k + 1, k + 1) = c;
  }
  Tensor2 qt(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t col = 0; col < n; ++col) qt(r, col) = basis(col, r);
  return matmul_values(matmul_values(basis, block), qt);
}

}  // namespace

Tensor2 domain_rotation(const ShiftSpec& spec, const GenerateParams& params, int domain) {
  Rng basis_rng = substream(spec.seed, "data/basis");
  const Tensor2 basis = random_orthogonal(basis_rng, params.input_dim);
  return rotation_for(basis, spec.rotation.at(static_cast<std::size_t>(domain)));
}

MultiDomainDataset generate(const ShiftSpec& spec, const GenerateParams& params) {
  validate_params(params);
  spec.validate(params.num_domains);
  const int m = params.input_dim;
  const auto mu = static_cast<std::size_t>(m);

  Rng mean_rng = substream(spec.seed, "data/means");
  std::vector<std::vector<double>> means;
  for (int c = 0; c < params.num_classes; ++c) means.push_back(unit_gaussian(mean_rng, m));

  Rng basis_rng = substream(spec.seed, "data/basis");
  const Tensor2 basis = random_orthogonal(basis_rng, m);

  Rng offset_rng = substream(spec.seed, "data/offsets");
  std::vector<std::vector<double>> directions;
  for (int d = 0; d < params.num_domains; ++d) directions.push_back(unit_gaussian(offset_rng, m));

  std::vector<DomainData> domains;
  std::uint64_t next_id = 0;
  for (int d = 0; d < params.num_domains; ++d) {
    const auto du = static_cast<std::size_t>(d);
    const Tensor2 rot = rotation_for(basis, spec.rotation[du]);
    Rng sample_rng = substream(spec.seed, "data/samples", du);
    Rng split_rng = substream(spec.seed, "data/split", du);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    DomainData dd;
    dd.domain = d;
    for (int c = 0; c < params.num_classes; ++c) {
      std::vector<std::vector<double>> xs;
      for (int i = 0; i < params.per_class_per_domain; ++i) {
        std::vector<double> base(mu);
        for (std::size_t k = 0; k < mu; ++k)
          base[k] = spec.class_separation * means[static_cast<std::size_t>(c)][k] + spec.noise_scale * normal(sample_rng);
        std::vector<double> x(mu, 0.0);
        for (std::size_t r = 0; r < mu; ++r) {
          double s = 0.0;
          for (std::size_t k = 0; k < mu; ++k) s += rot(r, k) * base[k];
          x[r] = s + spec.offset[du] * directions[du][r];
        }
        for (double& v : x)
          if (uniform(sample_rng) < spec.corruption[du]) v = 0.0;
        xs.push_back(std::move(x));
      }
      std::vector<std::size_t> order(xs.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), split_rng);
      std::vector<bool> is_labeled(xs.size(), false);
      for (int i = 0; i < params.labels_per_class; ++i) is_labeled[order[static_cast<std::size_t>(i)]] = true;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        Example e{xs[i], std::nullopt, d, c, 0};
        if (is_labeled[i]) {
          e.label = c;
          dd.labeled.push_back(std::move(e));
        } else {
          dd.unlabeled.push_back(std::move(e));
        }
      }
    }
    // Ids follow save order (labeled then unlabeled per domain).
    for (auto& e : dd.labeled) e.id = next_id++;
    for (auto& e : dd.unlabeled) e.id = next_id++;
    domains.push_back(std::move(dd));
  }
  MultiDomainDataset ds(params.num_classes, m, std::move(domains));
  ds.validate();
  return ds;
}

// ---- augmentation ----------------------------------------------------------

void AugmentConfig::validate() const {
  if (!(weak_noise >= 0.0) || !(strong_noise >= 0.0)) throw ConfigError("augmentation noise scales must be >= 0");
  if (weak_noise > strong_noise) throw ConfigError("weak_noise must not exceed strong_noise");
  if (!(strong_drop >= 0.0 && strong_drop <= 1.0)) throw ConfigError("strong_drop must lie in [0, 1]");
}

Augmenter::Augmenter(AugmentConfig cfg, Rng rng) : cfg_(cfg), rng_(std::move(rng)) { cfg_.validate(); }

std::vector<double> Augmenter::weak(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v += cfg_.weak_noise * normal_(rng_);
  return out;
}

std::vector<double> Augmenter::strong(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v += cfg_.strong_noise * normal_(rng_);
  for (double& v : out)
    if (uniform_(rng_) < cfg_.strong_drop) v = 0.0;
  return out;
}

// ---- CSV I/O ---------------------------------------------------------------

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_header(int input_dim) {
  std::string h = "domain,label";
  for (int i = 0; i < input_dim; ++i) h += ",x" + std::to_string(i);
  return h;
}

void save_csv(const MultiDomainDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << csv_header(ds.input_dim()) << '\n';
  for (const auto& d : ds.domains()) {
    for (const auto* part : {&d.labeled, &d.unlabeled}) {
      for (const auto& e : *part) {
        out << e.domain << ',' << (e.label ? *e.label : -1);
        for (double v : e.x) out << ',' << format_real(v);
        out << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) fields.push_back(cur);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

long parse_int(const std::string& s, std::size_t line, const char* what) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno != 0) throw ParseError(line, std::string("malformed ") + what + " '" + s + "'");
  return v;
}

double parse_real(const std::string& s, std::size_t line) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno == ERANGE) throw ParseError(line, "malformed value '" + s + "'");
  if (!std::isfinite(v)) throw ParseError(line, "non-finite value '" + s + "'");
  return v;
}

}  // namespace

MultiDomainDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty dataset file " + path.string());
  const auto header = split_fields(line);
  const int m = schema.input_dim > 0 ? schema.input_dim : static_cast<int>(header.size()) - 2;
  const std::string expected = csv_header(m);
  if (m < 1 || line != expected) {
    throw SchemaError("header mismatch: expected '" + expected + "'");
  }

  std::vector<DomainData> domains(static_cast<std::size_t>(schema.num_domains));
  for (int d = 0; d < schema.num_domains; ++d) domains[static_cast<std::size_t>(d)].domain = d;
  std::size_t lineno = 1;
  std::uint64_t row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != static_cast<std::size_t>(m) + 2) {
      throw ParseError(lineno, "expected " + std::to_string(m + 2) + " fields, found " + std::to_string(fields.size()));
    }
    const long domain = parse_int(fields[0], lineno, "domain");
    const long label = parse_int(fields[1], lineno, "label");
    if (domain < 0 || domain >= schema.num_domains) {
      throw SchemaError("line " + std::to_string(lineno) + ": unknown domain index " + std::to_string(domain));
    }
    if (label < -1 || label >= schema.num_classes) {
      throw SchemaError("line " + std::to_string(lineno) + ": unknown class index " + std::to_string(label));
    }
    Example e;
    e.domain = static_cast<int>(domain);
    e.id = row++;
    e.x.reserve(static_cast<std::size_t>(m));
    for (std::size_t k = 2; k < fields.size(); ++k) e.x.push_back(parse_real(fields[k], lineno));
    auto& dd = domains[static_cast<std::size_t>(domain)];
    if (label >= 0) {
      e.label = static_cast<int>(label);
      e.truth = e.label;
      dd.labeled.push_back(std::move(e));
    } else {
      dd.unlabeled.push_back(std::move(e));
    }
  }
  std::erase_if(domains, [](const DomainData& d) { return d.labeled.empty() && d.unlabeled.empty(); });
  return MultiDomainDataset(schema.num_classes, m, std::move(domains));
}

}  // namespace ssdg
