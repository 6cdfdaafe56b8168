#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rftl/statfit.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace rftl;
using namespace rftl::stats;

namespace {

TransferRecord record(std::string s, std::string t, double acc, double leep, double logme) {
  TransferRecord r;
  r.source = std::move(s);
  r.target = std::move(t);
  r.method = Method::Head;
  r.accuracy = acc;
  r.leep = leep;
  r.logme = logme;
  r.n_examples = 10;
  return r;
}

}  // namespace

TEST_CASE("pearson r") {
  const std::vector<double> x{1, 2, 3}, y{2, 4, 6}, ny{-1, -2, -3};
  CHECK(pearson_r(x, y) == doctest::Approx(1.0));
  CHECK(pearson_r(x, ny) == doctest::Approx(-1.0));
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4};
  CHECK(std::abs(pearson_r(a, b) - 0.8) < 1e-12);
  CHECK(pearson_r(b, a) == pearson_r(a, b));
  const std::vector<double> flat{2, 2, 2};
  CHECK_THROWS_AS(pearson_r(x, flat), Error);
  CHECK_THROWS_AS(pearson_r(std::vector<double>{1}, std::vector<double>{1}), Error);
  CHECK_THROWS_AS(pearson_r(x, a), Error);
}

TEST_CASE("weighted tau matches the pairwise definition") {
  const std::vector<double> x{1, 2, 3, 4, 5}, rev{5, 4, 3, 2, 1};
  CHECK(weighted_tau(x, x) == doctest::Approx(1.0));
  CHECK(weighted_tau(x, rev) == doctest::Approx(-1.0));
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 7;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Small integer values force plenty of ties.
      a[i] = trial % 2 ? static_cast<double>(rng() % 4) : std::ldexp(static_cast<double>(rng() % 1000), -7);
      b[i] = static_cast<double>(rng() % 5);
    }
    const double expected = oracle::weighted_tau(a, b);
    CHECK(std::abs(weighted_tau(a, b) - expected) < 1e-12);
    CHECK(weighted_tau(a, b) == doctest::Approx(weighted_tau(b, a)).epsilon(1e-12));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 50 + rng() % 100;
    std::vector<double> a(n), b(n);
    std::normal_distribution<double> nd;
    for (std::size_t i = 0; i < n; ++i) a[i] = nd(rng), b[i] = a[i] + nd(rng);
    CHECK(std::abs(weighted_tau(a, b) - oracle::weighted_tau(a, b)) < 1e-12);
  }
  CHECK_THROWS_AS(weighted_tau(std::vector<double>{1}, std::vector<double>{2}), Error);
}

TEST_CASE("correlations are invariant to joint permutation") {
  Rng rng(2);
  std::normal_distribution<double> nd;
  std::vector<double> a(30), b(30);
  for (std::size_t i = 0; i < 30; ++i) a[i] = nd(rng), b[i] = 0.5 * a[i] + nd(rng);
  std::vector<std::size_t> p(30);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  std::vector<double> pa(30), pb(30);
  for (std::size_t i = 0; i < 30; ++i) pa[i] = a[p[i]], pb[i] = b[p[i]];
  CHECK(pearson_r(pa, pb) == doctest::Approx(pearson_r(a, b)).epsilon(1e-12));
  CHECK(weighted_tau(pa, pb) == doctest::Approx(weighted_tau(a, b)).epsilon(1e-12));
}

TEST_CASE("ordinary least squares") {
  const std::vector<double> x{0, 1}, y{1, 3};
  const auto f = linear_fit(x, y);
  CHECK(f.beta0 == doctest::Approx(2.0));
  CHECK(f.beta1 == doctest::Approx(1.0));

  const std::vector<double> x3{0, 1, 2}, y3{1, 3, 5};
  const auto f3 = linear_fit(x3, y3);
  // Mirror of (1, 3) through the centroid is (1, 3) itself; add the pair (0.5, 2), (1.5, 4).
  const std::vector<double> x5{0, 1, 2, 0.5, 1.5}, y5{1, 3, 5, 2, 4};
  const auto f5 = linear_fit(x5, y5);
  CHECK(f5.beta0 == doctest::Approx(f3.beta0));
  CHECK(f5.beta1 == doctest::Approx(f3.beta1));

  Rng rng(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> xs(100), ys(100);
  for (std::size_t i = 0; i < 100; ++i) xs[i] = u(rng), ys[i] = 0.5 * xs[i] + 0.1 + noise(rng);
  const auto g = linear_fit(xs, ys);
  CHECK(std::abs(g.beta0 - 0.5) < 0.01);
  double mean_res = 0;
  for (std::size_t i = 0; i < 100; ++i) mean_res += (ys[i] - g(xs[i])) / 100;
  CHECK(std::abs(mean_res) < 1e-9);

  CHECK_THROWS_AS(linear_fit(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), Error);
  CHECK_THROWS_AS(linear_fit(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST_CASE("margin of error") {
  const std::vector<double> r{0.02, -0.02, 0.02, -0.02};
  CHECK(margin_of_error(r, 0.95) == doctest::Approx(0.0392).epsilon(1e-12));
  CHECK(margin_of_error(std::vector<double>(5, 0.0), 0.95) == 0.0);
  CHECK(margin_of_error(r, 0.90) < margin_of_error(r, 0.95));
  CHECK(margin_of_error(r, 0.95) < margin_of_error(r, 0.99));
  CHECK(z_score(0.90) == 1.645);
  CHECK(z_score(0.99) == 2.576);
  CHECK_THROWS_AS(z_score(0.8), Error);
  CHECK_THROWS_AS(margin_of_error(std::vector<double>{}, 0.95), Error);
}

TEST_CASE("source selection") {
  CHECK(select_source({{"A", -0.5}, {"B", -0.2}}) == "B");
  CHECK(select_source({{"only", -3.0}}) == "only");
  CHECK(select_source({{"b", 1.0}, {"a", 1.0}, {"c", 0.5}}) == "a");
  std::map<std::string, double> s{{"x", -0.9}, {"y", -0.1}, {"z", -0.4}}, t;
  for (const auto& [k, v] : s) t[k] = std::exp(3 * v) + 7;
  CHECK(select_source(s) == select_source(t));
  CHECK_THROWS_AS(select_source({}), Error);
}

TEST_CASE("accuracy prediction") {
  AccuracyPredictor p;
  p.beta0 = 2.0;
  p.beta1 = 1.0;
  p.mean_abs_residual = 0.02;
  p.n_fit = 10;
  const auto pr = predict_accuracy(p, -0.3, 0.95);
  CHECK(pr.estimate == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(pr.lower == doctest::Approx(0.3608).epsilon(1e-12));
  CHECK(pr.upper == doctest::Approx(0.4392).epsilon(1e-12));
  CHECK_FALSE(pr.clamped);

  const auto hi = predict_accuracy(p, 0.1, 0.95);
  CHECK(hi.estimate == 1.0);
  CHECK(hi.upper == 1.0);
  CHECK(hi.clamped);
  CHECK(hi.lower <= hi.estimate);

  p.mean_abs_residual = 0.0;
  const auto d = predict_accuracy(p, -0.25, 0.99);
  CHECK(d.lower == d.estimate);
  CHECK(d.upper == d.estimate);

  AccuracyPredictor empty;
  CHECK_THROWS_AS(predict_accuracy(empty, 0.0, 0.95), Error);
}

TEST_CASE("fitting predictors on records") {
  std::vector<TransferRecord> recs;
  for (int i = 0; i < 8; ++i) {
    const double s = -1.0 + 0.1 * i;
    recs.push_back(record("s" + std::to_string(i), "t", 0.5 * s + 0.9 + (i % 2 ? 0.01 : -0.01), s, 2 * s));
  }
  auto failed = record("bad", "t", 0.0, 0.0, 0.0);
  failed.status = "error: boom";
  recs.push_back(failed);
  const auto p = fit_predictor(tmetrics::Kind::Leep, recs);
  CHECK(p.n_fit == 8);
  CHECK(p.fitted());
  CHECK(p.beta0 == doctest::Approx(0.5).epsilon(0.05));
  CHECK(p.mean_abs_residual == doctest::Approx(0.01).epsilon(0.2));
  const auto q = fit_predictor(tmetrics::Kind::LogMe, recs);
  CHECK(q.beta0 == doctest::Approx(0.25).epsilon(0.05));

  auto mirrored = recs;
  for (auto& r : mirrored) r.logme = r.leep;
  CHECK(agreement_frequency(mirrored, p, fit_predictor(tmetrics::Kind::LogMe, mirrored)) == 1.0);
  const double f = agreement_frequency(recs, p, q);
  CHECK(f >= 0.0);
  CHECK(f <= 1.0);
  CHECK(loo_coverage(tmetrics::Kind::Leep, recs, 0.99) >= 0.5);
  CHECK_THROWS_AS(fit_predictor(tmetrics::Kind::Leep, std::span(recs).first(2)), Error);
  CHECK_THROWS_AS(agreement_frequency(std::vector<TransferRecord>{}, p, q), Error);
}

TEST_CASE("predictor persistence") {
  test::TempDir tmp;
  AccuracyPredictor p;
  p.metric = tmetrics::Kind::LogMe;
  p.beta0 = 0.123456789012345;
  p.beta1 = -0.5;
  p.mean_abs_residual = 0.031;
  p.n_fit = 17;
  save_predictor(tmp.path() / "p.json", p);
  const auto q = load_predictor(tmp.path() / "p.json");
  CHECK(q.metric == p.metric);
  CHECK(q.beta0 == p.beta0);
  CHECK(q.beta1 == p.beta1);
  CHECK(q.mean_abs_residual == p.mean_abs_residual);
  CHECK(q.n_fit == 17);
  CHECK(q.z_table == p.z_table);
}
