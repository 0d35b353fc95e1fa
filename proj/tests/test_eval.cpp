#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "eqface/errors.hpp"
#include "eqface/eval.hpp"
#include "oracles.hpp"

using namespace eqface;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

// Random score sets; `levels` > 0 quantizes scores so ties are common.
ScoreSets random_scores(std::mt19937_64& rng, std::size_t n_gen, std::size_t n_imp, int levels) {
  std::normal_distribution<double> g(0.5, 0.2), i(0.0, 0.2);
  auto q = [&](double x) { return levels > 0 ? std::round(x * levels) / levels : x; };
  ScoreSets s;
  for (std::size_t k = 0; k < n_gen; ++k) s.genuine.push_back(q(g(rng)));
  for (std::size_t k = 0; k < n_imp; ++k) s.impostor.push_back(q(i(rng)));
  return s;
}

}  // namespace

TEST_CASE("similarity matrix examples") {
  const std::vector<Vec> eye{v2(1, 0), v2(0, 1)};
  const std::vector<std::int64_t> labels{0, 1};
  const auto m = similarity_matrix(eye, labels, eye, labels);
  CHECK(m.values == Mat::Identity(2, 2));

  const std::vector<Vec> refs{v2(1, 0), v2(0.6, 0.8)};
  const auto m2 = similarity_matrix(refs, labels, eye, labels);
  CHECK(m2.values(0, 0) == 1);
  CHECK(m2.values(0, 1) == 0);
  CHECK(m2.values(1, 0) == 0.6);
  CHECK(m2.values(1, 1) == 0.8);
  CHECK(m2.same_identity()[0][0]);
  CHECK_FALSE(m2.same_identity()[0][1]);

  CHECK_THROWS_AS(similarity_matrix(std::vector<Vec>{}, {}, eye, labels), EmptyInput);
}

TEST_CASE("similarity entries stay within [-1, 1]") {
  std::mt19937_64 rng(1);
  std::vector<Vec> a, b;
  std::vector<std::int64_t> la, lb;
  for (int i = 0; i < 40; ++i) {
    a.push_back(oracle::random_unit(rng, 7));
    b.push_back(oracle::random_unit(rng, 7));
    la.push_back(i % 5);
    lb.push_back(i % 3);
  }
  const auto m = similarity_matrix(a, la, b, lb);
  CHECK(m.values.maxCoeff() <= 1 + 1e-9);
  CHECK(m.values.minCoeff() >= -1 - 1e-9);
}

TEST_CASE("tar at far: four-pair example") {
  ScoreSets s{{0.9, 0.8}, {0.3, 0.1}};
  const double target[] = {0.5};
  const auto r = tar_at_far(s, target);
  REQUIRE(r.size() == 1);
  CHECK(r[0].tar == 1.0);
  CHECK(r[0].threshold == 0.3);
  CHECK(r[0].far == 0.5);
  CHECK(r[0].achievable);
}

TEST_CASE("tar at far: separable and identical distributions") {
  std::mt19937_64 rng(2);
  ScoreSets sep;
  for (int i = 0; i < 200; ++i) {
    sep.genuine.push_back(0.6 + 0.3 * std::uniform_real_distribution<double>(0, 1)(rng));
    sep.impostor.push_back(0.5 * std::uniform_real_distribution<double>(0, 1)(rng));
  }
  const double targets[] = {0.005, 0.01, 0.1};
  for (const auto& r : tar_at_far(sep, targets)) CHECK(r.tar == 1.0);

  ScoreSets same;
  for (int i = 0; i < 100; ++i) same.genuine.push_back(i * 0.01);
  same.impostor = same.genuine;
  const double t2[] = {0.01, 0.05, 0.3, 0.5};
  for (const auto& r : tar_at_far(same, t2)) CHECK(r.tar == r.far);
}

TEST_CASE("tar at far: unreachable targets") {
  // Every impostor ties the top genuine score, so only +inf meets FAR 0.
  ScoreSets s{{0.5, 0.2}, {0.5, 0.5}};
  const double target[] = {0.1};
  const auto r = tar_at_far(s, target);
  CHECK(r[0].threshold == kInf);
  CHECK(r[0].tar == 0.0);
  CHECK(r[0].far == 0.0);
  CHECK_FALSE(r[0].achievable);
  CHECK_THROWS_AS(tar_at_far(ScoreSets{{}, {0.1}}, target), InsufficientPairs);
  CHECK_THROWS_AS(tar_at_far(ScoreSets{{0.1}, {}}, target), InsufficientPairs);
}

TEST_CASE("tar at far, roc and rank-n match brute-force oracles") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> size(1, 100);
  const double targets[] = {1e-4, 1e-3, 1e-2, 0.1, 0.5};
  for (int t = 0; t < 50; ++t) {
    const ScoreSets s = random_scores(rng, static_cast<std::size_t>(size(rng)),
                                      static_cast<std::size_t>(size(rng)) * 99, t % 2 ? 20 : 0);
    const auto got = tar_at_far(s, targets);
    for (std::size_t k = 0; k < std::size(targets); ++k) {
      const auto want = oracle::tar_at_far(s.genuine, s.impostor, targets[k]);
      CHECK(got[k].tar == want.tar);
      CHECK(got[k].threshold == want.threshold);
      CHECK(got[k].far == want.far);
    }
    const auto curve = roc_curve(s);
    const auto want_curve = oracle::roc(s.genuine, s.impostor);
    REQUIRE(curve.size() == want_curve.size());
    for (std::size_t k = 0; k < curve.size(); ++k) {
      CHECK(curve[k].threshold == want_curve[k].threshold);
      CHECK(curve[k].far == want_curve[k].far);
      CHECK(curve[k].tar == want_curve[k].tar);
    }
  }
}

TEST_CASE("rank-n matches the full-sort oracle") {
  std::mt19937_64 rng(4);
  const int ns[] = {1, 2, 5, 10};
  for (int t = 0; t < 50; ++t) {
    const int n_ref = 5 + t % 20, n_query = 10 + t % 30;
    Mat sim(n_ref, n_query);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < n_ref; ++i) {
      for (int j = 0; j < n_query; ++j) sim(i, j) = std::round(u(rng) * 8) / 8;
    }
    std::vector<std::int64_t> rl(n_ref), ql(n_query);
    for (auto& l : rl) l = std::uniform_int_distribution<int>(0, 6)(rng);
    for (auto& l : ql) l = std::uniform_int_distribution<int>(0, 8)(rng);
    if (std::find(rl.begin(), rl.end(), ql[0]) == rl.end()) ql[0] = rl[0];
    const auto got = rank_n(sim, rl, ql, ns);
    for (std::size_t k = 0; k < std::size(ns); ++k) {
      CHECK(got[k].accuracy == oracle::rank_accuracy(sim, rl, ql, ns[k]));
    }
  }
}

TEST_CASE("rank-n toy case") {
  // Three references (ids 0, 1, 2) and two queries (ids 1, 2).
  Mat sim(3, 2);
  sim << 0.9, 0.1,  //
      0.8, 0.7,     //
      0.2, 0.6;
  const std::vector<std::int64_t> rl{0, 1, 2}, ql{1, 2};
  const int ns[] = {1, 2, 3};
  const auto r = rank_n(sim, rl, ql, ns);
  CHECK(r[0].accuracy == 0.0);
  CHECK(r[1].accuracy == 1.0);
  CHECK(r[2].accuracy == 1.0);

  // Ties go to the lower reference index.
  Mat tie(2, 1);
  tie << 0.5, 0.5;
  const int one[] = {1};
  CHECK(rank_n(tie, std::vector<std::int64_t>{7, 8}, std::vector<std::int64_t>{8}, one)[0]
            .accuracy == 0.0);
  CHECK(rank_n(tie, std::vector<std::int64_t>{8, 7}, std::vector<std::int64_t>{8}, one)[0]
            .accuracy == 1.0);
}

TEST_CASE("rank-n properties") {
  std::mt19937_64 rng(5);
  Mat sim(12, 30);
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 30; ++j) sim(i, j) = std::uniform_real_distribution<double>(-1, 1)(rng);
  }
  std::vector<std::int64_t> rl(12), ql(30);
  for (int i = 0; i < 12; ++i) rl[i] = i % 6;
  for (int j = 0; j < 30; ++j) ql[j] = j % 9;  // ids 6..8 are out of gallery
  std::vector<int> ns(12);
  std::iota(ns.begin(), ns.end(), 1);
  const auto r = rank_n(sim, rl, ql, ns);
  for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k].accuracy >= r[k - 1].accuracy);
  CHECK(r.back().accuracy == 1.0);

  // A query identical to a reference column is a rank-1 hit.
  Mat exact = Mat::Zero(3, 1);
  exact(1, 0) = 1;
  const int one[] = {1};
  CHECK(rank_n(exact, std::vector<std::int64_t>{0, 1, 2}, std::vector<std::int64_t>{1}, one)[0]
            .accuracy == 1.0);
  CHECK_THROWS_AS(
      rank_n(exact, std::vector<std::int64_t>{0, 1, 2}, std::vector<std::int64_t>{5}, one),
      NoInGalleryQueries);
}

TEST_CASE("permuting references leaves metrics unchanged") {
  std::mt19937_64 rng(6);
  std::vector<Vec> refs, queries;
  std::vector<std::int64_t> rl, ql;
  for (int i = 0; i < 20; ++i) {
    refs.push_back(oracle::random_unit(rng, 4));
    rl.push_back(i % 10);
  }
  for (int j = 0; j < 25; ++j) {
    queries.push_back(oracle::random_unit(rng, 4));
    ql.push_back(j % 12);
  }
  const double targets[] = {0.01, 0.1};
  const int ns[] = {1, 5};
  const auto m = similarity_matrix(refs, rl, queries, ql);
  const auto tar = tar_at_far(m.values, m.same_identity(), targets);
  const auto rank = rank_n(m.values, rl, ql, ns);

  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec> prefs;
  std::vector<std::int64_t> prl;
  for (auto p : perm) {
    prefs.push_back(refs[p]);
    prl.push_back(rl[p]);
  }
  const auto pm = similarity_matrix(prefs, prl, queries, ql);
  const auto ptar = tar_at_far(pm.values, pm.same_identity(), targets);
  const auto prank = rank_n(pm.values, prl, ql, ns);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(ptar[k].tar == tar[k].tar);
    CHECK(ptar[k].threshold == tar[k].threshold);
    CHECK(prank[k].accuracy == rank[k].accuracy);
  }
}

TEST_CASE("roc curve shape") {
  ScoreSets sep{{0.9, 0.8}, {0.3, 0.1}};
  const auto c = roc_curve(sep);
  CHECK(c.front().threshold == kInf);
  CHECK(c.back().threshold == -kInf);
  CHECK(c.back().far == 1.0);
  CHECK(c.back().tar == 1.0);
  bool passes = false;
  for (const auto& p : c) passes |= (p.far == 0.0 && p.tar == 1.0);
  CHECK(passes);

  std::mt19937_64 rng(7);
  const ScoreSets s = random_scores(rng, 300, 3000, 0);
  const auto curve = roc_curve(s);
  for (std::size_t k = 1; k < curve.size(); ++k) {
    CHECK(curve[k].threshold < curve[k - 1].threshold);
    CHECK(curve[k].far >= curve[k - 1].far);
    CHECK(curve[k].tar >= curve[k - 1].tar);
  }

  // Identical distributions stay near the diagonal.
  ScoreSets same;
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 4000; ++i) {
    same.genuine.push_back(n(rng));
    same.impostor.push_back(n(rng));
  }
  for (const auto& p : roc_curve(same)) CHECK(std::abs(p.tar - p.far) < 0.05);
}

TEST_CASE("csv emitters") {
  const std::vector<RocPoint> pts{{kInf, 0, 0}, {0.5, 0.25, 0.75}, {-kInf, 1, 1}};
  const std::string roc = roc_to_csv(pts);
  CHECK(roc.rfind("threshold,far,tar\n", 0) == 0);
  CHECK(roc.find("0.5,0.25,0.75\n") != std::string::npos);
  const std::vector<MetricRow> rows{{"rank", "1", 0.5}};
  CHECK(metrics_to_csv(rows) == "metric,operating_point,value\nrank,1,0.5\n");
}
