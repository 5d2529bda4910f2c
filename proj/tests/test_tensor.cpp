#include <doctest.h>

#include <cmath>
#include <random>

#include "oracle.hpp"
#include "ssdg/errors.hpp"
#include "ssdg/tensor.hpp"

using namespace ssdg;

TEST_CASE("tensor shape must match data length") {
  CHECK_THROWS_AS(Tensor2(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  const Tensor2 t{{1, 2, 3}, {4, 5, 6}};
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6);
}

TEST_CASE("identity times M is M") {
  const Tensor2 m{{1.5, -2}, {0.25, 7}};
  CHECK(matmul_values(Tensor2::identity(2), m) == m);
}

TEST_CASE("small hand product") {
  const Tensor2 a{{1, 2}, {3, 4}};
  const Tensor2 b{{1}, {1}};
  CHECK(matmul_values(a, b) == Tensor2{{3}, {7}});
}

TEST_CASE("matmul agrees with a triple loop") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  Tensor2 a(3, 4), b(4, 2);
  for (double& v : a.data()) v = g(rng);
  for (double& v : b.data()) v = g(rng);
  const Tensor2 c = matmul_values(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  const Tensor2 a(2, 3), b(2, 2);
  try {
    (void)matmul_values(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("2x2") != std::string::npos);
  }
}

TEST_CASE("softmax values") {
  const Tensor2 u = softmax_values(Tensor2{{0, 0, 0}});
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Tensor2 p = softmax_values(Tensor2{{0, 0, 5}});
  const double e5 = std::exp(5.0);
  CHECK(p[0] == doctest::Approx(1.0 / (2 + e5)).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(e5 / (2 + e5)).epsilon(1e-14));
  CHECK(p[0] == doctest::Approx(0.00665).epsilon(1e-3));
  CHECK(p[2] == doctest::Approx(0.98670).epsilon(1e-5));
}

TEST_CASE("softmax rows sum to one and ignore row shifts") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor2 x(3, 5);
    for (double& v : x.data()) v = g(rng);
    const Tensor2 p = softmax_values(x);
    Tensor2 shifted = x;
    const double c = g(rng) * 10;
    for (double& v : shifted.data()) v += c;
    const Tensor2 q = softmax_values(shifted);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (double v : p.row(r)) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    CHECK(max_abs_diff(p, q) <= 1e-12);
  }
}

TEST_CASE("cosine similarity") {
  const std::vector<double> a{1, 2}, b{2, 1}, o{-2, 1};
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(a, o) == doctest::Approx(0.0));
  const std::vector<double> z{0, 0};
  CHECK_THROWS_AS((void)cosine_similarity(a, z), DegenerateInputError);
}

TEST_CASE("cosine is invariant to positive scaling") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(7), b(7);
    for (auto& v : a) v = g(rng);
    for (auto& v : b) v = g(rng);
    for (double lambda : {0.1, 3.0, 10.0, 1e4}) {
      std::vector<double> la = a;
      for (auto& v : la) v *= lambda;
      CHECK(std::abs(cosine_similarity(la, b) - cosine_similarity(a, b)) <= 1e-12);
    }
    CHECK(cosine_similarity(a, b) == doctest::Approx(oracle::cosine(a, b)).epsilon(1e-13));
  }
}

TEST_CASE("argmax picks the lowest index on ties") {
  const std::vector<double> v{0.2, 0.7, 0.7, 0.1};
  CHECK(argmax(v) == 1);
}
