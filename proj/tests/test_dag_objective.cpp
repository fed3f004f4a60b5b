#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dagnmt/dag_objective.hpp"
#include "dagnmt/ops.hpp"
#include "testutil.hpp"

using namespace dagnmt;
using testutil::random_dag;
using testutil::random_dag_leaf;

namespace {

// independent oracle: marginal likelihood by explicit path enumeration
double enumerated_log_likelihood(const DagTables& dag, const std::vector<int>& y) {
  auto paths = enumerate_paths(dag.S, static_cast<int>(y.size()));
  double mx = kNegInf;
  std::vector<double> vals;
  vals.reserve(paths.size());
  for (const auto& p : paths) {
    vals.push_back(path_log_prob(dag, y, p));
    mx = std::max(mx, vals.back());
  }
  double sum = 0.0;
  for (double v : vals) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

long long binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long r = 1;
  for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
  return r;
}

}  // namespace

TEST_CASE("enumerate_paths: base cases and counts") {
  auto p22 = enumerate_paths(2, 2);
  REQUIRE(p22.size() == 1);
  CHECK(p22[0] == Path{0, 1});

  // S=5, T=3: inner index ranges over the three middle steps
  auto p53 = enumerate_paths(5, 3);
  REQUIRE(p53.size() == 3);
  CHECK(p53[0] == Path{0, 1, 4});
  CHECK(p53[1] == Path{0, 2, 4});
  CHECK(p53[2] == Path{0, 3, 4});

  for (int S = 2; S <= 10; ++S)
    for (int T = 2; T <= S; ++T)
      CHECK(static_cast<long long>(enumerate_paths(S, T).size()) == binomial(S - 2, T - 2));

  CHECK_THROWS_AS(enumerate_paths(13, 4), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_paths(5, 1), std::invalid_argument);
}

TEST_CASE("enumerate_paths: lexicographic, no duplicates") {
  auto paths = enumerate_paths(9, 5);
  for (size_t i = 1; i < paths.size(); ++i) CHECK(paths[i - 1] < paths[i]);
}

TEST_CASE("path_log_prob: single forced path and hand computation") {
  Rng rng(2);
  DagOutput dag = random_dag(2, 4, rng);
  DagTables tab = tables(dag);
  std::vector<int> y = {1, 3};
  const double expect = tab.word_at(0, 1) + tab.link_at(0, 1) + tab.word_at(1, 3);
  CHECK(path_log_prob(tab, y, {0, 1}) == doctest::Approx(expect).epsilon(1e-12));

  // hand-filled 4-step lattice, T=3 over path (0, 2, 3)
  DagOutput d4 = random_dag(4, 5, rng);
  DagTables t4 = tables(d4);
  std::vector<int> y3 = {2, 0, 4};
  const double hand = t4.word_at(0, 2) + t4.link_at(0, 2) + t4.word_at(2, 0) +
                      t4.link_at(2, 3) + t4.word_at(3, 4);
  CHECK(path_log_prob(t4, y3, {0, 2, 3}) == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("path_log_prob: constraint violations name the constraint") {
  Rng rng(3);
  DagOutput dag = random_dag(4, 3, rng);
  DagTables tab = tables(dag);
  CHECK_THROWS_WITH_AS(path_log_prob(tab, {1}, {0}), doctest::Contains("length must be >= 2"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(path_log_prob(tab, {1, 2}, {1, 3}), doctest::Contains("a[0]"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(path_log_prob(tab, {1, 2}, {0, 2}), doctest::Contains("a[T-1]"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(path_log_prob(tab, {1, 2, 0}, {0, 3, 3}),
                       doctest::Contains("strictly increase"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(path_log_prob(tab, {1, 9}, {0, 3}), doctest::Contains("vocabulary"),
                       std::invalid_argument);
}

TEST_CASE("dag_log_likelihood: unique path when T equals S") {
  Rng rng(4);
  for (int S : {2, 3, 5}) {
    DagOutput dag = random_dag(S, 4, rng);
    DagTables tab = tables(dag);
    std::vector<int> y;
    for (int t = 0; t < S; ++t) y.push_back(t % 4);
    Path identity;
    for (int t = 0; t < S; ++t) identity.push_back(t);
    CHECK(dag_log_likelihood_value(tab, y) ==
          doctest::Approx(path_log_prob(tab, y, identity)).epsilon(1e-12));
  }
}

TEST_CASE("dag_log_likelihood: S=4, T=3 equals logsumexp of the two paths") {
  Rng rng(5);
  DagOutput dag = random_dag(4, 3, rng);
  DagTables tab = tables(dag);
  std::vector<int> y = {0, 2, 1};
  const double p1 = path_log_prob(tab, y, {0, 1, 3});
  const double p2 = path_log_prob(tab, y, {0, 2, 3});
  const double mx = std::max(p1, p2);
  const double expect = mx + std::log(std::exp(p1 - mx) + std::exp(p2 - mx));
  CHECK(dag_log_likelihood_value(tab, y) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("DP equals brute-force enumeration for all S <= 8") {
  Rng rng(6);
  for (int S = 2; S <= 8; ++S) {
    for (int T = 2; T <= S; ++T) {
      for (int rep = 0; rep < 5; ++rep) {
        DagOutput dag = random_dag(S, 4, rng);
        DagTables tab = tables(dag);
        std::vector<int> y;
        for (int t = 0; t < T; ++t) y.push_back(rng.uniform_int(0, 3));
        const double dp = dag_log_likelihood_value(tab, y);
        const double brute = enumerated_log_likelihood(tab, y);
        CHECK(std::fabs(dp - brute) <= 1e-9);
      }
    }
  }
}

TEST_CASE("total mass over all lengths and sequences is one") {
  Rng rng(7);
  const int V = 3;
  for (int S = 3; S <= 6; ++S) {
    DagOutput dag = random_dag(S, V, rng);
    DagTables tab = tables(dag);
    double mass = 0.0;
    for (int T = 2; T <= S; ++T) {
      std::vector<int> y(static_cast<size_t>(T), 0);
      while (true) {
        mass += std::exp(dag_log_likelihood_value(tab, y));
        int pos = T - 1;
        while (pos >= 0 && y[static_cast<size_t>(pos)] == V - 1) {
          y[static_cast<size_t>(pos)] = 0;
          --pos;
        }
        if (pos < 0) break;
        ++y[static_cast<size_t>(pos)];
      }
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("forward table: initialization and feasibility band") {
  Rng rng(21);
  const int S = 6;
  DagOutput dag = random_dag(S, 4, rng);
  DagTables tab = tables(dag);
  std::vector<int> y = {1, 2, 0, 3};
  const int T = static_cast<int>(y.size());
  std::vector<double> alpha = dag_forward_table(tab, y);
  REQUIRE(alpha.size() == static_cast<size_t>(T) * S);
  // first row: only step 0 is live, holding its word score
  CHECK(alpha[0] == doctest::Approx(tab.word_at(0, y[0])).epsilon(1e-12));
  for (int s = 1; s < S; ++s) CHECK(alpha[static_cast<size_t>(s)] <= kNegInf * 0.5);
  // cells outside the band (too early to host t tokens, or too late to still
  // reach the final step) stay at the sentinel
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s) {
      // the first step is pinned to 0; later rows span the feasibility band
      const bool feasible =
          t == 0 ? s == 0 : (s >= t && s <= S - 1 - (T - 1 - t));
      if (!feasible) CHECK(alpha[static_cast<size_t>(t) * S + s] <= kNegInf * 0.5);
      else CHECK(alpha[static_cast<size_t>(t) * S + s] > kNegInf * 0.5);
    }
  // final cell is the marginal likelihood
  CHECK(alpha[static_cast<size_t>(T - 1) * S + (S - 1)] ==
        doctest::Approx(dag_log_likelihood_value(tab, y)).epsilon(1e-12));
}

TEST_CASE("errors: target longer than lattice, too-short target") {
  Rng rng(8);
  DagOutput dag = random_dag(3, 3, rng);
  DagTables tab = tables(dag);
  std::vector<int> long_y = {0, 1, 2, 0};
  CHECK_THROWS_WITH_AS(dag_log_likelihood_value(tab, long_y),
                       doctest::Contains("target longer than lattice"), std::invalid_argument);
  std::vector<int> short_y = {0};
  CHECK_THROWS_AS(dag_log_likelihood_value(tab, short_y), std::invalid_argument);
  CHECK_THROWS_AS(dag_log_likelihood(dag, long_y), std::invalid_argument);
}

TEST_CASE("objective gradients match finite differences on raw tables") {
  Rng rng(9);
  for (int S : {3, 5, 6}) {
    DagOutput dag = random_dag_leaf(S, 4, rng);
    std::vector<int> y;
    const int T = std::max(2, S - 2);
    for (int t = 0; t < T; ++t) y.push_back(rng.uniform_int(0, 3));

    auto f_word = [&]() { return mul_scalar(dag_log_likelihood(dag, y), -1.0); };
    CHECK(testutil::max_grad_rel_error(dag.word_logp, f_word) < 1e-4);
    CHECK(testutil::max_grad_rel_error(dag.link_logp, f_word) < 1e-4);
  }
}

TEST_CASE("gradients flow through log_softmax heads") {
  Rng rng(10);
  const int S = 5, V = 4;
  Tensor word_raw = testutil::random_tensor({S, V}, rng);
  Tensor link_raw = testutil::random_tensor({S, S}, rng);
  std::vector<int> y = {1, 0, 3};
  auto f = [&]() {
    DagOutput dag;
    dag.S = S;
    dag.V = V;
    dag.word_logp = log_softmax(word_raw, 1);
    dag.link_logp = link_log_softmax(link_raw);
    return mul_scalar(dag_log_likelihood(dag, y), -1.0);
  };
  CHECK(testutil::max_grad_rel_error(word_raw, f) < 1e-4);
  CHECK(testutil::max_grad_rel_error(link_raw, f) < 1e-4);
}

TEST_CASE("monotonicity: raising a feasible word log-prob never lowers the likelihood") {
  Rng rng(11);
  DagOutput dag = random_dag(6, 4, rng);
  std::vector<int> y = {2, 1, 3, 0};
  DagTables tab = tables(dag);
  const double base = dag_log_likelihood_value(tab, y);
  // bump word score for y[1] at every step it could occupy
  for (int s = 1; s <= 4; ++s) {
    Tensor bumped = Tensor::from({6, 4}, dag.word_logp.values());
    bumped.values()[static_cast<size_t>(s) * 4 + y[1]] += 0.25;
    DagTables tab2{6, 4, bumped.data(), dag.link_logp.data()};
    CHECK(dag_log_likelihood_value(tab2, y) >= base - 1e-12);
  }
}

TEST_CASE("batch_dag_loss: single sample, idempotent mean, permutation invariance") {
  Rng rng(12);
  DagOutput d1 = random_dag(5, 4, rng);
  DagOutput d2 = random_dag(6, 4, rng);
  std::vector<int> y1 = {0, 1, 2};
  std::vector<int> y2 = {3, 3, 1, 0};

  BatchLoss single = batch_dag_loss({{&d1, &y1}});
  CHECK(single.loss.item() ==
        doctest::Approx(-dag_log_likelihood_value(tables(d1), y1)).epsilon(1e-12));
  CHECK(single.used == 1);

  BatchLoss twice = batch_dag_loss({{&d1, &y1}, {&d1, &y1}});
  CHECK(twice.loss.item() == doctest::Approx(single.loss.item()).epsilon(1e-12));

  BatchLoss ab = batch_dag_loss({{&d1, &y1}, {&d2, &y2}});
  BatchLoss ba = batch_dag_loss({{&d2, &y2}, {&d1, &y1}});
  CHECK(std::fabs(ab.loss.item() - ba.loss.item()) <= 1e-9);
}

TEST_CASE("batch_dag_loss: oversized targets are skipped and counted; empty batch errors") {
  Rng rng(13);
  DagOutput d = random_dag(3, 4, rng);
  std::vector<int> ok = {0, 1};
  std::vector<int> too_long = {0, 1, 2, 3};
  BatchLoss r = batch_dag_loss({{&d, &ok}, {&d, &too_long}});
  CHECK(r.used == 1);
  CHECK(r.skipped == 1);
  CHECK_THROWS_AS(batch_dag_loss({{&d, &too_long}}), std::runtime_error);
}
