#include <doctest.h>

#include <cmath>

#include "tagunify/lattice.hpp"
#include "test_support.hpp"

using namespace tagunify;
using namespace tagunify::test;

TEST_CASE("uniform lattices have closed-form partition functions") {
  CHECK(log_partition(Lattice::zeros(1, 2)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(log_partition(Lattice::zeros(2, 2)) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(log_partition(Lattice::zeros(1, 1)) == doctest::Approx(0.0));
}

TEST_CASE("uniform lattice marginals are 1/L and pairwise 1/L^2") {
  Lattice lat = Lattice::zeros(3, 4);
  MarginalTable m = node_marginals(lat);
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 4; ++i) CHECK(m.at(t, i) == doctest::Approx(0.25).epsilon(1e-12));
  auto pair = pairwise_marginals(lat);
  for (double p : pair) CHECK(p == doctest::Approx(1.0 / 16).epsilon(1e-12));
}

TEST_CASE("single-token emission behaves like a softmax") {
  Lattice lat = Lattice::zeros(1, 2);
  lat.emis(0, 0) = std::log(3.0);
  lat.emis(0, 1) = std::log(1.0);
  MarginalTable m = node_marginals(lat);
  CHECK(m.at(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(m.at(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("constrained partition: fixed path returns its raw score exactly") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Lattice lat = random_lattice(rng, 1 + static_cast<int>(rng.below(5)), 2 + static_cast<int>(rng.below(3)));
    LabelSequence y;
    for (int t = 0; t < lat.T; ++t) y.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(lat.L))));
    // Exact equality: sentinel leakage underflows to zero.
    CHECK(constrained_log_partition(lat, LabelConstraint::fixed(y)) == path_score(lat, y));
  }
}

TEST_CASE("constrained partition: two of three labels allowed on one token") {
  Lattice lat = Lattice::zeros(1, 3);
  LabelConstraint c;
  c.allowed = {{0, 1}};
  CHECK(constrained_log_partition(lat, c) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("figure-style partial annotation marginal matches brute force") {
  // Three tokens over {O, B-GPE, B-DATE}-like labels; O tokens may be DATE.
  Rng rng(11);
  Lattice lat = random_lattice(rng, 3, 3);
  LabelConstraint c;
  c.allowed = {{0, 2}, {0, 2}, {1}};
  CHECK(close_rel(constrained_log_partition(lat, c),
                  brute_force_constrained_log_partition(lat, c), 1e-10));
  // Full constraint equals the unconstrained value.
  CHECK(close_rel(constrained_log_partition(lat, LabelConstraint::all(3, 3)),
                  log_partition(lat), 1e-12));
}

TEST_CASE("clamped node marginals: vacuous and forced cases") {
  Rng rng(13);
  Lattice lat = random_lattice(rng, 4, 3);
  std::vector<int> all{0, 1, 2};
  MarginalTable vacuous = clamped_node_marginals(lat, 2, all);
  MarginalTable plain = node_marginals(lat);
  for (size_t i = 0; i < plain.p.size(); ++i)
    CHECK(vacuous.p[i] == doctest::Approx(plain.p[i]).epsilon(1e-12));

  std::vector<int> forced{1};
  MarginalTable m = clamped_node_marginals(lat, 2, forced);
  CHECK(m.at(2, 1) == 1.0);
  CHECK(m.at(2, 0) == 0.0);
  CHECK(m.at(2, 2) == 0.0);
}

TEST_CASE("transition dominance concentrates pairwise mass") {
  Lattice lat = Lattice::zeros(2, 2);
  lat.trans(0, 1) = 50.0;
  auto pair = pairwise_marginals(lat);
  CHECK(pair[1] > 0.999);  // (0,1) slot
  CHECK_THROWS(pairwise_marginals(Lattice::zeros(1, 2)));
}

TEST_CASE("viterbi follows dominant emissions and breaks ties low") {
  Lattice lat = Lattice::zeros(4, 3);
  for (int t = 0; t < 4; ++t) lat.emis(t, 1) = 10.0;
  ViterbiResult r = viterbi(lat);
  CHECK(r.path == LabelSequence{1, 1, 1, 1});
  CHECK(r.score == doctest::Approx(40.0));

  ViterbiResult tie = viterbi(Lattice::zeros(3, 3));
  CHECK(tie.path == LabelSequence{0, 0, 0});
}

TEST_CASE("brute force oracle sanity: T=1, L=1") {
  Lattice lat = Lattice::zeros(1, 1);
  lat.start[0] = 0.3;
  lat.emis(0, 0) = 0.5;
  lat.stop[0] = -0.1;
  CHECK(brute_force_log_partition(lat) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(brute_force_viterbi(lat).score == doctest::Approx(0.7).epsilon(1e-12));
  Lattice big = Lattice::zeros(30, 10);
  CHECK_THROWS(brute_force_log_partition(big));
}

TEST_CASE("dp inference matches brute force on random lattices") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    int T = 1 + static_cast<int>(rng.below(6));
    int L = 1 + static_cast<int>(rng.below(4));
    Lattice lat = random_lattice(rng, T, L);

    CHECK(close_rel(log_partition(lat), brute_force_log_partition(lat), 1e-10));

    MarginalTable m = node_marginals(lat);
    MarginalTable bm = brute_force_node_marginals(lat);
    for (size_t i = 0; i < m.p.size(); ++i) CHECK(std::abs(m.p[i] - bm.p[i]) <= 1e-10);

    if (T >= 2) {
      auto pair = pairwise_marginals(lat);
      auto bpair = brute_force_pairwise_marginals(lat);
      for (size_t i = 0; i < pair.size(); ++i) CHECK(std::abs(pair[i] - bpair[i]) <= 1e-10);
    }

    ViterbiResult v = viterbi(lat);
    ViterbiResult bv = brute_force_viterbi(lat);
    CHECK(v.path == bv.path);
    CHECK(close_rel(v.score, bv.score, 1e-10));

    // Random constraint.
    LabelConstraint c;
    for (int t = 0; t < T; ++t) {
      std::vector<int> allowed;
      for (int i = 0; i < L; ++i)
        if (rng.uniform() < 0.6) allowed.push_back(i);
      if (allowed.empty()) allowed.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(L))));
      c.allowed.push_back(allowed);
    }
    CHECK(close_rel(constrained_log_partition(lat, c),
                    brute_force_constrained_log_partition(lat, c), 1e-10));

    // Random clamp.
    int ct = static_cast<int>(rng.below(static_cast<uint64_t>(T)));
    MarginalTable cm = clamped_node_marginals(lat, ct, c.allowed[static_cast<size_t>(ct)]);
    MarginalTable bcm = brute_force_clamped_node_marginals(lat, ct, c.allowed[static_cast<size_t>(ct)]);
    for (size_t i = 0; i < cm.p.size(); ++i) CHECK(std::abs(cm.p[i] - bcm.p[i]) <= 1e-10);
  }
}

TEST_CASE("marginal tables are row-stochastic and consistent") {
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    int T = 2 + static_cast<int>(rng.below(5));
    int L = 2 + static_cast<int>(rng.below(3));
    Lattice lat = random_lattice(rng, T, L);
    MarginalTable m = node_marginals(lat);
    auto pair = pairwise_marginals(lat);
    for (int t = 0; t < T; ++t) {
      double row = 0.0;
      for (int i = 0; i < L; ++i) row += m.at(t, i);
      CHECK(std::abs(row - 1.0) <= 1e-9);
    }
    // sum_j p(y_t = i, y_{t+1} = j) = p_{t,i}
    for (int t = 0; t + 1 < T; ++t)
      for (int i = 0; i < L; ++i) {
        double s = 0.0;
        for (int j = 0; j < L; ++j) s += pair[(static_cast<size_t>(t) * L + i) * L + j];
        CHECK(std::abs(s - m.at(t, i)) <= 1e-9);
      }
  }
}

TEST_CASE("viterbi score never exceeds the log partition") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    Lattice lat = random_lattice(rng, 1 + static_cast<int>(rng.below(6)), 1 + static_cast<int>(rng.below(4)));
    ViterbiResult v = viterbi(lat);
    double lz = log_partition(lat);
    CHECK(v.score <= lz + 1e-12);
    if (lat.L > 1) CHECK(v.score < lz);  // several paths carry mass
  }
}

TEST_CASE("enlarging an allowed set never decreases the constrained partition") {
  Rng rng(321);
  for (int trial = 0; trial < 30; ++trial) {
    int T = 2 + static_cast<int>(rng.below(4));
    int L = 3;
    Lattice lat = random_lattice(rng, T, L);
    LabelConstraint narrow, wide;
    for (int t = 0; t < T; ++t) {
      narrow.allowed.push_back({static_cast<int>(rng.below(3))});
      std::vector<int> w = narrow.allowed.back();
      int extra = static_cast<int>(rng.below(3));
      if (std::find(w.begin(), w.end(), extra) == w.end()) w.push_back(extra);
      std::sort(w.begin(), w.end());
      wide.allowed.push_back(w);
    }
    CHECK(constrained_log_partition(lat, wide) >=
          constrained_log_partition(lat, narrow) - 1e-12);
  }
}

TEST_CASE("shifting one token's emissions shifts log Z and fixes marginals") {
  Rng rng(555);
  Lattice lat = random_lattice(rng, 4, 3);
  double lz = log_partition(lat);
  MarginalTable m = node_marginals(lat);

  Lattice shifted = lat;
  const double c = 1.7;
  for (int i = 0; i < 3; ++i) shifted.emis(2, i) += c;
  CHECK(log_partition(shifted) == doctest::Approx(lz + c).epsilon(1e-12));
  MarginalTable ms = node_marginals(shifted);
  for (size_t i = 0; i < m.p.size(); ++i) CHECK(ms.p[i] == doctest::Approx(m.p[i]).epsilon(1e-9));
}

TEST_CASE("constraint validation catches dimension and range errors") {
  Lattice lat = Lattice::zeros(2, 2);
  LabelConstraint wrong_len;
  wrong_len.allowed = {{0}};
  CHECK_THROWS(constrained_log_partition(lat, wrong_len));
  LabelConstraint empty_set;
  empty_set.allowed = {{0}, {}};
  CHECK_THROWS(constrained_log_partition(lat, empty_set));
  std::vector<int> none;
  CHECK_THROWS(lat.restricted_at(0, none));
}
