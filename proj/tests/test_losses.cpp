#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "ssdg/errors.hpp"
#include "ssdg/gradcheck.hpp"
#include "ssdg/losses.hpp"

using namespace ssdg;

namespace {

LossConfig unit_temperature() {
  LossConfig c;
  c.temperature = 1.0;
  return c;
}

// Prototypes in R^(C+1) whose cosines with e0 are exactly `z`.
Tensor2 with_similarities(const std::vector<double>& z) {
  const std::size_t C = z.size();
  Tensor2 k(C, C + 1);
  for (std::size_t c = 0; c < C; ++c) {
    k(c, 0) = z[c];
    k(c, c + 1) = std::sqrt(1.0 - z[c] * z[c]);
  }
  return k;
}

std::vector<double> e0(std::size_t n) {
  std::vector<double> v(n, 0.0);
  v[0] = 1.0;
  return v;
}

}  // namespace

TEST_CASE("pseudo-label gate") {
  const auto pl = pseudo_label(std::vector<double>{0, 0, 5}, 0.95);
  REQUIRE(pl);
  CHECK(pl->cls == 2);
  CHECK(pl->confidence == doctest::Approx(std::exp(5.0) / (2 + std::exp(5.0))).epsilon(1e-14));
  CHECK(pl->confidence == doctest::Approx(0.9867).epsilon(1e-4));
  CHECK_FALSE(pseudo_label(std::vector<double>{0, 0, 0}, 0.95));
  const auto any = pseudo_label(std::vector<double>{0.3, 0.3, 0.1}, 0.0);
  REQUIRE(any);
  CHECK(any->cls == 0);
}

TEST_CASE("lowering tau never shrinks the confident set") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto z = fixtures::gaussian_vec(rng, 4);
    bool prev = false;
    for (double tau : {1.01, 0.99, 0.9, 0.7, 0.5, 0.3, 0.0}) {
      const bool now = pseudo_label(z, tau).has_value();
      CHECK((!prev || now));
      prev = now;
    }
    CHECK(prev);
  }
}

TEST_CASE("supervised loss cases") {
  Model m = Model::init(ModelDims{3, {4}, 3, 4}, 2);
  Augmenter none(AugmentConfig{0, 0, 0}, Rng(1));
  std::vector<Example> batch;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 3; ++i) batch.push_back(Example{fixtures::gaussian_vec(rng, 3), i % 4, 0, i % 4, 0});

  Model zero = m;
  for (double& v : zero.parameter("classifier.weight").value.data()) v = 0.0;
  CHECK(supervised_loss(zero, batch, none) == doctest::Approx(std::log(4.0)).epsilon(1e-13));

  double hand = 0;
  for (const auto& e : batch) hand += oracle::ce(oracle::softmax(oracle::logits(m, e.x)), static_cast<std::size_t>(*e.label));
  CHECK(supervised_loss(m, batch, none) == doctest::Approx(hand / 3).epsilon(1e-12));

  // Huge correct margin: bias of the true class dominates.
  Model sure = zero;
  std::vector<Example> one{Example{{0.1, 0.2, 0.3}, 2, 0, 2, 0}};
  sure.parameter("classifier.bias").value[2] = 60.0;
  CHECK(supervised_loss(sure, one, none) < 1e-20);

  std::vector<Example> bad{Example{{0, 0, 0}, std::nullopt, 0, 1, 0}};
  CHECK_THROWS_AS((void)supervised_loss(m, bad, none), ContractError);
}

TEST_CASE("unsupervised loss cases") {
  const Model m = Model::init(ModelDims{3, {4}, 3, 3}, 4);
  Augmenter none(AugmentConfig{0, 0, 0}, Rng(1));
  std::mt19937_64 rng(9);
  std::vector<Example> u;
  for (int i = 0; i < 2; ++i) u.push_back(Example{fixtures::gaussian_vec(rng, 3), std::nullopt, 0, 0, 0});

  const std::vector<std::optional<PseudoLabel>> nobody(2);
  CHECK(unsupervised_loss(m, u, nobody, none) == 0.0);

  std::vector<std::optional<PseudoLabel>> pls;
  for (const auto& e : u) pls.push_back(pseudo_label(m.logits(Tensor2::row_vector(e.x)).row(0), 0.0));
  double hand = 0;
  for (std::size_t i = 0; i < 2; ++i)
    hand += oracle::ce(oracle::softmax(oracle::logits(m, u[i].x)), static_cast<std::size_t>(pls[i]->cls));
  CHECK(unsupervised_loss(m, u, pls, none) == doctest::Approx(hand / 2).epsilon(1e-12));

  // Identity strong view collapses to supervised CE against the pseudo-labels.
  std::vector<Example> as_labeled = u;
  for (std::size_t i = 0; i < 2; ++i) as_labeled[i].label = pls[i]->cls;
  CHECK(unsupervised_loss(m, u, pls, none) == doctest::Approx(supervised_loss(m, as_labeled, none)).epsilon(1e-14));

  // Only confident rows count.
  std::vector<std::optional<PseudoLabel>> first{pls[0], std::nullopt};
  CHECK(unsupervised_loss(m, u, first, none) ==
        doctest::Approx(oracle::ce(oracle::softmax(oracle::logits(m, u[0].x)), static_cast<std::size_t>(pls[0]->cls))));
}

TEST_CASE("FBC on orthonormal two-class prototypes") {
  const Tensor2 k = Tensor2::identity(2);
  const PrototypeBank bank = PrototypeBank::from_matrices({{0, k}, {1, k}});
  const double v = fbc_loss(bank, std::vector<double>{1, 0}, 0, 1, PseudoLabel{0, 1.0}, unit_temperature());
  CHECK(v == doctest::Approx(2 * std::log1p(std::exp(-1.0))).epsilon(1e-14));
  CHECK(v == doctest::Approx(0.6265).epsilon(1e-4));
}

TEST_CASE("SA hand cases") {
  LossConfig cfg = unit_temperature();
  cfg.top_n = 2;
  const Tensor2 same = with_similarities({0.9, 0.5, 0.3, 0.1});
  const Tensor2 diff = with_similarities({0.2, 0.7, -0.4, 0.0});
  const PrototypeBank bank = PrototypeBank::from_matrices({{0, same}, {1, diff}});
  CHECK(sa_loss(bank, e0(5), 0, 1, cfg) == doctest::Approx(1.4).epsilon(1e-14));

  const SimilarityProfile s = similarity_profile(bank, e0(5), 0, 1, 2);
  CHECK(s.phi_same == doctest::Approx(0.9));
  CHECK(s.Phi_same == doctest::Approx(0.5));
  CHECK(s.phi_diff == doctest::Approx(0.2));
  CHECK(s.diff_domain == 1);

  // Perfect alignment.
  const Tensor2 orth = Tensor2::identity(3);
  const PrototypeBank aligned = PrototypeBank::from_matrices({{0, orth}, {1, orth}});
  LossConfig c3 = unit_temperature();
  c3.top_n = 2;
  CHECK(sa_loss(aligned, std::vector<double>{1, 0, 0}, 0, 1, c3) == doctest::Approx(0.0).epsilon(1e-15));

  // C = 2 resolves N to 1: the hard-negative average is empty.
  const Tensor2 two = with_similarities({0.6, 0.8});
  const Tensor2 two_diff = with_similarities({0.3, 0.1});
  const PrototypeBank b2 = PrototypeBank::from_matrices({{0, two}, {1, two_diff}});
  LossConfig auto_n = unit_temperature();
  CHECK(auto_n.resolved_top_n(2) == 1);
  CHECK(sa_loss(b2, e0(3), 0, 1, auto_n) == doctest::Approx((1 - 0.8) + (1 - 0.1)).epsilon(1e-14));
}

TEST_CASE("top-N defaults to half the classes rounded up") {
  LossConfig c;
  CHECK(c.resolved_top_n(2) == 1);
  CHECK(c.resolved_top_n(5) == 3);
  CHECK(c.resolved_top_n(6) == 3);
  c.top_n = 7;
  CHECK_THROWS_AS(c.validate(6), ConfigError);
  c.top_n = 0;
  c.temperature = 0;
  CHECK_THROWS_AS(c.validate(6), ConfigError);
}

TEST_CASE("fewer than two source domains is a config error") {
  Rng rng(1);
  const std::vector<int> one{3};
  CHECK_THROWS_AS((void)draw_other_domain(rng, one, 3), ConfigError);
  const PrototypeBank bank = PrototypeBank::from_matrices({{0, Tensor2::identity(2)}});
  CHECK_THROWS_AS((void)fbc_loss(bank, std::vector<double>{1, 0}, 0, 1, PseudoLabel{0, 1}, LossConfig{}), ConfigError);
}

TEST_CASE("other-domain draws are uniform over the remaining sources") {
  Rng rng(5);
  const std::vector<int> src{0, 1, 2, 3};
  std::vector<int> hits(4, 0);
  for (int i = 0; i < 30000; ++i) ++hits[static_cast<std::size_t>(draw_other_domain(rng, src, 2))];
  CHECK(hits[2] == 0);
  for (int d : {0, 1, 3}) CHECK(hits[static_cast<std::size_t>(d)] / 30000.0 == doctest::Approx(1.0 / 3).epsilon(0.03));
}

TEST_CASE("FBC and SA match the scalar oracle on random instances") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int C = 2 + static_cast<int>(rng() % 5);
    const int D = 2 + static_cast<int>(rng() % 3);
    const std::size_t h = 3 + rng() % 5;
    const PrototypeBank bank = fixtures::random_bank(rng, C, D, h);
    const auto f = fixtures::gaussian_vec(rng, h);
    const int di = static_cast<int>(rng() % static_cast<unsigned>(D));
    const int dj = (di + 1 + static_cast<int>(rng() % static_cast<unsigned>(D - 1))) % D;
    const PseudoLabel pl{static_cast<int>(rng() % static_cast<unsigned>(C)), 1.0};
    LossConfig cfg;
    cfg.temperature = 0.2 + 0.1 * static_cast<double>(rng() % 10);
    cfg.top_n = 1 + static_cast<int>(rng() % static_cast<unsigned>(C));
    const auto ks = oracle::bank_rows(bank, di), kd = oracle::bank_rows(bank, dj);
    const auto of = oracle::fbc(ks, kd, f, static_cast<std::size_t>(pl.cls), cfg.temperature);
    const auto os = oracle::sa(ks, kd, f, cfg.top_n);
    CHECK(std::abs(fbc_loss(bank, f, di, dj, pl, cfg) - (of.same + of.diff)) <= 1e-9);
    CHECK(std::abs(sa_loss(bank, f, di, dj, cfg) - (os.same + os.diff)) <= 1e-9);
  }
}

TEST_CASE("loss invariants on random instances") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int C = 2 + static_cast<int>(rng() % 5);
    const std::size_t h = 4;
    const PrototypeBank bank = fixtures::random_bank(rng, C, 3, h);
    const auto f = fixtures::gaussian_vec(rng, h);
    const PseudoLabel pl{static_cast<int>(rng() % static_cast<unsigned>(C)), 1.0};
    LossConfig cfg;
    const double fbc = fbc_loss(bank, f, 0, 2, pl, cfg);
    const double sa = sa_loss(bank, f, 0, 2, cfg);
    CHECK(fbc >= 0.0);
    const auto prof = similarity_profile(bank, f, 0, 2, cfg.resolved_top_n(C));
    const double per_same = 1 - prof.phi_same + prof.Phi_same, per_diff = 1 - prof.phi_diff;
    CHECK(per_same + per_diff >= -1.0);
    CHECK(per_same + per_diff <= 5.0);
    CHECK(sa == doctest::Approx(per_same + per_diff).epsilon(1e-14));

    for (double lambda : {0.1, 3.0, 10.0}) {
      std::vector<double> g = f;
      for (double& v : g) v *= lambda;
      CHECK(std::abs(fbc_loss(bank, g, 0, 2, pl, cfg) - fbc) <= 1e-9);
      CHECK(std::abs(sa_loss(bank, g, 0, 2, cfg) - sa) <= 1e-9);
    }

    // Relabel classes by a random permutation π.
    std::vector<std::size_t> pi(static_cast<std::size_t>(C));
    std::iota(pi.begin(), pi.end(), 0);
    std::shuffle(pi.begin(), pi.end(), rng);
    std::map<int, Tensor2> permuted;
    for (int d : bank.domains()) {
      Tensor2 k(static_cast<std::size_t>(C), h);
      for (std::size_t c = 0; c < pi.size(); ++c) {
        const auto src = bank.prototype(d, static_cast<int>(c));
        std::copy(src.begin(), src.end(), k.row(pi[c]).begin());
      }
      permuted.emplace(d, std::move(k));
    }
    const PrototypeBank pb = PrototypeBank::from_matrices(std::move(permuted));
    const PseudoLabel ppl{static_cast<int>(pi[static_cast<std::size_t>(pl.cls)]), 1.0};
    CHECK(std::abs(fbc_loss(pb, f, 0, 2, ppl, cfg) - fbc) <= 1e-12);
    CHECK(std::abs(sa_loss(pb, f, 0, 2, cfg) - sa) <= 1e-12);
  }
}

TEST_CASE("identical banks make the different-domain halves mirror the same-domain ones") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int C = 2 + static_cast<int>(rng() % 5);
    const Tensor2 k = fixtures::gaussian(rng, static_cast<std::size_t>(C), 5);
    const PrototypeBank bank = PrototypeBank::from_matrices({{0, k}, {1, k}, {2, k}});
    const auto f = fixtures::gaussian_vec(rng, 5);
    const PseudoLabel pl{static_cast<int>(rng() % static_cast<unsigned>(C)), 1.0};
    LossConfig cfg;
    Tape tape;
    const FbcParts parts = fbc_parts(bank, tape.constant(Tensor2::row_vector(f)), 0, 2, pl, cfg);
    CHECK(fbc_loss(bank, f, 0, 2, pl, cfg) == doctest::Approx(2 * parts.same.scalar()).epsilon(1e-14));
    const auto prof = similarity_profile(bank, f, 0, 2, cfg.resolved_top_n(C));
    CHECK(prof.phi_diff == prof.phi_same);
    CHECK(prof.phi_same == *std::max_element(prof.z_same.begin(), prof.z_same.end()));
  }
}

TEST_CASE("total loss with nothing confident is the supervised term") {
  const auto toy = fixtures::toy_problem(3, 3, 2);
  LossConfig cfg;
  cfg.tau = 1.5;
  Tape tape;
  const auto bound = toy.model.bind(tape);
  const TapedLoss l = total_loss(tape, toy.model, bound, toy.bank, toy.batch, cfg);
  CHECK(l.breakdown.confident == 0);
  CHECK(l.breakdown.l_u == 0.0);
  CHECK(l.breakdown.l_fbc == 0.0);
  CHECK(l.breakdown.l_sa == 0.0);
  CHECK(l.breakdown.total == l.breakdown.l_s);
}

TEST_CASE("total loss matches the scalar oracle on toy batches") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const int C = 2 + static_cast<int>(seed % 5);
    const int D = 2 + static_cast<int>(seed % 3);
    const auto toy = fixtures::toy_problem(seed, C, D);
    for (double tau : {0.0, 0.4}) {
      for (bool weak : {true, false}) {
        LossConfig cfg;
        cfg.tau = tau;
        cfg.temperature = 0.5;
        cfg.features_from_weak_view = weak;
        cfg.terms = LossTerms{seed % 2 == 0, true, true, seed % 3 != 0};
        Tape tape;
        const auto bound = toy.model.bind(tape);
        const LossBreakdown b = total_loss(tape, toy.model, bound, toy.bank, toy.batch, cfg).breakdown;
        const LossBreakdown o = oracle::total(toy.model, toy.bank, toy.batch, cfg);
        CHECK(b.confident == o.confident);
        CHECK(b.unlabeled == o.unlabeled);
        CHECK(std::abs(b.l_s - o.l_s) <= 1e-9);
        CHECK(std::abs(b.l_u - o.l_u) <= 1e-9);
        CHECK(std::abs(b.l_fbc - o.l_fbc) <= 1e-9);
        CHECK(std::abs(b.l_sa - o.l_sa) <= 1e-9);
        CHECK(b.total == ((b.l_s + b.l_u) + b.l_fbc) + b.l_sa);
        CHECK(b.l_s >= 0);
        CHECK(b.l_u >= 0);
        CHECK(b.l_fbc >= 0);
      }
    }
  }
}

TEST_CASE("disabled terms contribute exactly zero") {
  const auto toy = fixtures::toy_problem(5, 4, 3);
  LossConfig cfg;
  cfg.tau = 0.0;
  cfg.terms = LossTerms::baseline();
  Tape tape;
  const auto bound = toy.model.bind(tape);
  const LossBreakdown b = total_loss(tape, toy.model, bound, toy.bank, toy.batch, cfg).breakdown;
  CHECK(b.confident == b.unlabeled);
  CHECK(b.l_fbc == 0.0);
  CHECK(b.l_sa == 0.0);
  CHECK(b.l_u > 0.0);
}

TEST_CASE("total loss gradient matches finite differences") {
  GradCheckOptions opts;
  opts.configurations = 4;
  const GradCheckSweep sweep = gradcheck_sweep(opts, 8);
  REQUIRE(sweep.cases.size() == 4);
  for (const auto& c : sweep.cases) {
    CHECK(c.parameters <= 2000);
    CHECK(c.confident > 0);
    CHECK(c.report.max_rel_error <= 1e-4);
  }
  CHECK(sweep.passed);
}
