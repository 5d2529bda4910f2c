#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "ssdg/data.hpp"
#include "ssdg/errors.hpp"

using namespace ssdg;
namespace fs = std::filesystem;

namespace {

GenerateParams small_params() {
  GenerateParams p;
  p.num_classes = 3;
  p.num_domains = 3;
  p.input_dim = 6;
  p.per_class_per_domain = 10;
  p.labels_per_class = 2;
  return p;
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ssdg_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("generation is a pure function of its inputs") {
  const auto p = small_params();
  const ShiftSpec spec = ShiftSpec::preset(ShiftPreset::RotationOffset, p.num_domains, 42);
  const MultiDomainDataset a = generate(spec, p);
  const MultiDomainDataset b = generate(spec, p);
  CHECK(a == b);
  const MultiDomainDataset c = generate(ShiftSpec::preset(ShiftPreset::RotationOffset, p.num_domains, 43), p);
  CHECK_FALSE(a == c);
}

TEST_CASE("labeled subsets are exactly class balanced") {
  GenerateParams p = small_params();
  p.labels_per_class = 5;
  p.per_class_per_domain = 12;
  const auto ds = generate(ShiftSpec::preset(ShiftPreset::RotationOffset, p.num_domains, 1), p);
  for (const auto& d : ds.domains()) {
    std::map<int, int> counts;
    for (const auto& e : d.labeled) ++counts[*e.label];
    CHECK(counts.size() == static_cast<std::size_t>(p.num_classes));
    for (const auto& [c, n] : counts) CHECK(n == 5);
    CHECK(d.labeled.size() + d.unlabeled.size() == static_cast<std::size_t>(p.num_classes * p.per_class_per_domain));
    for (const auto& e : d.unlabeled) {
      CHECK_FALSE(e.label.has_value());
      CHECK(e.truth.has_value());
    }
  }
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("one domain or infeasible counts is a config error") {
  GenerateParams p = small_params();
  p.num_domains = 1;
  CHECK_THROWS_AS(generate(ShiftSpec::preset(ShiftPreset::None, 1, 0), p), ConfigError);
  p = small_params();
  p.labels_per_class = p.per_class_per_domain + 1;
  CHECK_THROWS_AS(generate(ShiftSpec::preset(ShiftPreset::None, p.num_domains, 0), p), ConfigError);
  p = small_params();
  p.num_classes = 1;
  CHECK_THROWS_AS(generate(ShiftSpec::preset(ShiftPreset::None, p.num_domains, 0), p), ConfigError);
}

TEST_CASE("domain rotations preserve norms") {
  GenerateParams p = small_params();
  p.input_dim = 9;
  const ShiftSpec spec = ShiftSpec::preset(ShiftPreset::RotationOffset, 4, 7);
  p.num_domains = 4;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int d = 0; d < 4; ++d) {
    const Tensor2 r = domain_rotation(spec, p, d);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor2 x(1, 9);
      for (double& v : x.data()) v = g(rng);
      const Tensor2 y = matmul_values(x, r);
      CHECK(std::abs(l2_norm(y.row(0)) - l2_norm(x.row(0))) <= 1e-9);
    }
  }
}

TEST_CASE("zero shift makes domains identically distributed") {
  GenerateParams p = small_params();
  p.per_class_per_domain = 400;
  p.num_classes = 2;
  const auto ds = generate(ShiftSpec::preset(ShiftPreset::None, p.num_domains, 3), p);
  // Per-domain class means agree up to sampling error (σ/√n ≈ 0.05).
  std::vector<std::vector<double>> means;
  for (const auto& d : ds.domains()) {
    std::vector<double> m(6, 0.0);
    int n = 0;
    for (const auto* part : {&d.labeled, &d.unlabeled})
      for (const auto& e : *part)
        if (e.truth == 0) {
          for (std::size_t k = 0; k < 6; ++k) m[k] += e.x[k];
          ++n;
        }
    for (auto& v : m) v /= n;
    means.push_back(m);
  }
  for (std::size_t d = 1; d < means.size(); ++d)
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(means[d][k] - means[0][k]) < 0.3);
}

TEST_CASE("augmentation edge cases") {
  const std::vector<double> x{1.0, -2.0, 3.5};
  Augmenter id(AugmentConfig{0.0, 0.0, 0.0}, Rng(1));
  CHECK(id.weak(x) == x);
  CHECK(id.strong(x) == x);
  Augmenter drop(AugmentConfig{0.05, 0.25, 1.0}, Rng(1));
  CHECK(drop.strong(x) == std::vector<double>(3, 0.0));
  CHECK_THROWS_AS(AugmentConfig({0.3, 0.1, 0.1}).validate(), ConfigError);
  CHECK_THROWS_AS(AugmentConfig({0.05, 0.25, 1.5}).validate(), ConfigError);
}

TEST_CASE("weak noise has the configured scale") {
  Augmenter aug(AugmentConfig{0.05, 0.25, 0.1}, Rng(77));
  const std::vector<double> x{0.3, -1.0};
  const int n = 100000;
  double s0 = 0, s1 = 0;
  for (int i = 0; i < n; ++i) {
    const auto y = aug.weak(x);
    s0 += (y[0] - x[0]) * (y[0] - x[0]);
    s1 += (y[1] - x[1]) * (y[1] - x[1]);
  }
  CHECK(std::sqrt(s0 / n) == doctest::Approx(0.05).epsilon(0.02));
  CHECK(std::sqrt(s1 / n) == doctest::Approx(0.05).epsilon(0.02));
}

TEST_CASE("strong view drops coordinates at the configured rate") {
  Augmenter aug(AugmentConfig{0.0, 0.25, 0.3}, Rng(5));
  const std::vector<double> x(10, 1.0);
  int zeros = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i)
    for (double v : aug.strong(x)) zeros += v == 0.0;
  CHECK(static_cast<double>(zeros) / (10.0 * n) == doctest::Approx(0.3).epsilon(0.03));
}

TEST_CASE("csv round trip is exact") {
  const auto p = small_params();
  const auto ds = generate(ShiftSpec::preset(ShiftPreset::RotationOffset, p.num_domains, 9), p);
  const fs::path path = temp_file("roundtrip.csv");
  save_csv(ds, path);
  const auto back = load_csv(path, CsvSchema{p.num_classes, p.num_domains, p.input_dim});
  CHECK(back == ds);
  // Saving again gives the same bytes.
  const fs::path again = temp_file("roundtrip2.csv");
  save_csv(back, again);
  std::ifstream a(path), b(again);
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("csv label -1 is unlabeled") {
  const fs::path path = temp_file("sentinel.csv");
  write(path, "domain,label,x0,x1\n0,1,0.5,1\n0,-1,0.25,2\n1,0,1,1\n1,-1,3,3\n1,1,1,2\n0,0,2,2\n");
  const auto ds = load_csv(path, CsvSchema{2, 2, 2});
  CHECK(ds.domain(0).labeled.size() == 2);
  CHECK(ds.domain(0).unlabeled.size() == 1);
  CHECK_FALSE(ds.domain(0).unlabeled[0].label.has_value());
  CHECK(ds.domain(0).unlabeled[0].x == std::vector<double>{0.25, 2});
}

TEST_CASE("csv header mismatch names the expected header") {
  const fs::path path = temp_file("header.csv");
  write(path, "domain,label,a0,a1\n0,1,0.5,1\n");
  try {
    (void)load_csv(path, CsvSchema{2, 2, 2});
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("domain,label,x0,x1") != std::string::npos);
  }
}

TEST_CASE("malformed csv row reports its line") {
  const fs::path path = temp_file("malformed.csv");
  write(path, "domain,label,x0,x1\n0,1,0.5,1\n0,1,abc,1\n");
  try {
    (void)load_csv(path, CsvSchema{2, 2, 2});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  write(path, "domain,label,x0,x1\n0,1,0.5\n");
  CHECK_THROWS_AS((void)load_csv(path, CsvSchema{2, 2, 2}), ParseError);
}

TEST_CASE("unknown domain or class index is a schema error") {
  const fs::path path = temp_file("schema.csv");
  write(path, "domain,label,x0,x1\n5,1,0.5,1\n");
  CHECK_THROWS_AS((void)load_csv(path, CsvSchema{2, 2, 2}), SchemaError);
  write(path, "domain,label,x0,x1\n0,7,0.5,1\n");
  CHECK_THROWS_AS((void)load_csv(path, CsvSchema{2, 2, 2}), SchemaError);
}

TEST_CASE("held-out view drops the domain entirely") {
  const auto p = small_params();
  const auto ds = generate(ShiftSpec::preset(ShiftPreset::RotationOffset, p.num_domains, 9), p);
  const auto src = ds.without(1);
  CHECK(src.domain_ids() == std::vector<int>{0, 2});
  CHECK_FALSE(src.has_domain(1));
  const auto target = ds.evaluation_set(1);
  CHECK(target.size() == static_cast<std::size_t>(p.num_classes * p.per_class_per_domain));
  for (const auto& e : target) CHECK(e.label == e.truth);
}
