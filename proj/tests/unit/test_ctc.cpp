#include <cmath>

#include "doctest.h"
#include "memarray/ctc.hpp"
#include "memarray/errors.hpp"
#include "support.hpp"

using namespace mema;
using testing::LatticeKind;

namespace {

// log sum over all complete labelings that start with `prefix`.
double brute_prefix(const CtcLattice& lat, const std::vector<int>& prefix) {
  const std::size_t T = lat.frames();
  const std::size_t K = lat.classes();
  std::size_t n = 1;
  for (std::size_t t = 0; t < T; ++t) n *= K;
  std::vector<int> path(T);
  double total = kNegInf;
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::size_t rem = idx;
    double lp = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rem % K);
      rem /= K;
      lp += lat.at(t, path[t]);
    }
    const auto y = ctc_collapse(path);
    if (y.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), y.begin())) {
      total = log_add(total, lp);
    }
  }
  return total;
}

}  // namespace

TEST_CASE("ctc_project rows are log-simplices; zero weights give uniform rows") {
  Rng rng(1);
  CtcParams p(4, 5);
  p.init(rng, 1.0);
  const Matrix h = testing::random_matrix(6, 4, rng);
  const CtcLattice lat = ctc_project(p, h);
  for (std::size_t t = 0; t < lat.frames(); ++t) CHECK(std::abs(log_sum_exp(lat.logprobs.row(t))) < 1e-9);
  CtcParams z(4, 5);
  const CtcLattice u = ctc_project(z, h);
  for (double v : u.logprobs.data()) CHECK(v == doctest::Approx(std::log(0.2)).epsilon(1e-14));
  CHECK_THROWS_AS(ctc_project(p, testing::random_matrix(2, 3, rng)), ShapeError);
}

TEST_CASE("ctc_forward_loss: single alignment has zero loss") {
  Matrix scores(3, 4, -1e9);
  scores(0, 1) = 0;
  scores(1, 3) = 0;
  scores(2, 2) = 0;
  const CtcLattice lat = make_lattice(scores);
  CHECK(ctc_forward_loss(lat, Transcript{{0, 2, 1}}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ctc_forward_loss matches brute force on uniform T'=4, |U|=2, 'ab'") {
  const CtcLattice lat = make_lattice(Matrix(4, 3));
  const double a = ctc_forward_loss(lat, Transcript{{0, 1}});
  const double b = ctc_brute_force(lat, Transcript{{0, 1}});
  CHECK(std::abs(a - b) < 1e-10);
}

TEST_CASE("ctc_forward_loss errors") {
  const CtcLattice lat = make_lattice(Matrix(2, 3));
  CHECK_THROWS_AS(ctc_forward_loss(lat, Transcript{{0, 0}}), UnrealizableError);  // needs 3 frames
  CHECK_THROWS_AS(ctc_forward_loss(lat, Transcript{{5}}), DataError);
  CHECK_THROWS_AS(ctc_forward_loss(lat, Transcript{}), DataError);
  CHECK(ctc_min_frames(Transcript{{0, 0, 1}}) == 4);
  CHECK_THROWS_AS(ctc_brute_force(make_lattice(Matrix(10, 5)), Transcript{{0}}), ConfigError);
}

TEST_CASE("ctc_brute_force: one-hot lattice and completeness") {
  Matrix scores(3, 3, -1e9);
  scores(0, 1) = 0;
  scores(1, 1) = 0;
  scores(2, 2) = 0;  // path a a b -> "ab"
  const CtcLattice lat = make_lattice(scores);
  CHECK(ctc_brute_force(lat, Transcript{{0, 1}}) == doctest::Approx(0.0));
  CHECK(ctc_brute_force(lat, Transcript{{1}}) > 1e8);  // only paths through -1e9 scores

  Rng rng(2);
  const CtcLattice r = testing::random_lattice(4, 2, LatticeKind::kRandom, rng);
  double total = std::exp(ctc_prefix_end(ctc_prefix_init(r)));  // empty labeling
  for (const auto& seq : testing::all_sequences(2, 4)) {
    if (seq.empty()) continue;
    const double l = ctc_brute_force(r, Transcript{seq});
    if (std::isfinite(l)) total += std::exp(-l);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ctc forward equals brute force on the exhaustive small grid") {
  Rng rng(77);
  for (std::size_t T = 1; T <= 6; ++T) {
    for (int U = 2; U <= 3; ++U) {
      for (std::size_t L = 1; L <= 3; ++L) {
        for (auto kind : {LatticeKind::kUniform, LatticeKind::kRandom, LatticeKind::kNearOneHot}) {
          const CtcLattice lat = testing::random_lattice(T, U, kind, rng);
          const Transcript t = testing::random_transcript(L, U, rng);
          if (ctc_min_frames(t) > T) {
            CHECK_THROWS_AS(ctc_forward_loss(lat, t), UnrealizableError);
            continue;
          }
          const double a = ctc_forward_loss(lat, t);
          const double b = ctc_brute_force(lat, t);
          CHECK(std::abs(a - b) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("prefix init and end") {
  Rng rng(4);
  const CtcLattice lat = testing::random_lattice(5, 3, LatticeKind::kRandom, rng);
  const auto st = ctc_prefix_init(lat);
  double blank = 0.0;
  for (std::size_t t = 0; t < 5; ++t) blank += lat.at(t, kBlank);
  CHECK(ctc_prefix_end(st) == doctest::Approx(blank).epsilon(1e-14));
  const CtcLattice one = testing::random_lattice(1, 2, LatticeKind::kRandom, rng);
  CHECK(ctc_prefix_init(one).gamma_b[0] == one.at(0, kBlank));
  const auto copy = st;
  CHECK(copy == st);
}

TEST_CASE("prefix score matches enumeration and conserves probability") {
  const CtcLattice uni = make_lattice(Matrix(3, 3));
  const auto a = ctc_prefix_extend(ctc_prefix_init(uni), uni, 0);
  CHECK(std::abs(a.score - brute_prefix(uni, {0})) < 1e-10);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto T = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const int U = static_cast<int>(rng.uniform_int(2, 3));
    const CtcLattice lat = testing::random_lattice(T, U, LatticeKind::kRandom, rng);
    auto st = ctc_prefix_init(lat);
    std::vector<int> prefix;
    for (int depth = 0; depth < 3; ++depth) {
      double mass = std::exp(ctc_prefix_end(st));
      std::vector<CtcPrefixState> ext;
      for (int c = 0; c < U; ++c) {
        ext.push_back(ctc_prefix_extend(st, lat, c));
        mass += std::exp(ext.back().score);
        auto p = prefix;
        p.push_back(c);
        const double bf = brute_prefix(lat, p);
        if (std::isinf(bf)) {
          CHECK(ext.back().score == kNegInf);
        } else {
          CHECK(std::abs(ext.back().score - bf) < 1e-10);
        }
      }
      CHECK(std::abs(mass - std::exp(st.score)) < 1e-9);
      const int c = static_cast<int>(rng.uniform_int(0, U - 1));
      prefix.push_back(c);
      st = ext[static_cast<std::size_t>(c)];
    }
  }
}

TEST_CASE("full-sequence prefix score equals the forward loss") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto T = static_cast<std::size_t>(rng.uniform_int(4, 10));
    const CtcLattice lat = testing::random_lattice(T, 3, LatticeKind::kRandom, rng);
    const Transcript t = testing::random_transcript(static_cast<std::size_t>(rng.uniform_int(1, 3)), 3, rng);
    if (ctc_min_frames(t) > T) continue;
    auto st = ctc_prefix_init(lat);
    for (int c : t.labels) st = ctc_prefix_extend(st, lat, c);
    CHECK(std::abs(ctc_prefix_end(st) + ctc_forward_loss(lat, t)) < 1e-9);
  }
}

TEST_CASE("unrealizable extension has -inf score") {
  const CtcLattice lat = make_lattice(Matrix(1, 3));
  const auto a = ctc_prefix_extend(ctc_prefix_init(lat), lat, 0);
  const auto aa = ctc_prefix_extend(a, lat, 0);
  CHECK(aa.score == kNegInf);
  const auto ab = ctc_prefix_extend(a, lat, 1);
  CHECK(ab.score == kNegInf);
}

TEST_CASE("ctc loss gradient through the projection passes grad_check") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(300 + seed);
    const auto T = static_cast<std::size_t>(rng.uniform_int(3, 7));
    CtcParams p(3, 4);
    p.init(rng, 1.0);
    Matrix h = testing::random_matrix(T, 3, rng);
    const Transcript t = testing::random_transcript(static_cast<std::size_t>(rng.uniform_int(1, 2)), 3, rng);
    if (ctc_min_frames(t) > T) continue;
    CtcParams g(3, 4);
    auto [loss, dscores] = ctc_loss_grad(ctc_project(p, h), t);
    Matrix dh = dense_backward(p, h, dscores, g);
    auto f = [&] { return ctc_forward_loss(ctc_project(p, h), t); };
    const auto res = grad_check(f, {make_group("ctc", p), {"h", false, {{"h", &h}}}},
                                {make_group("ctc", g), {"h", false, {{"h", &dh}}}}, 1e-5);
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
  }
}
