#include "oracles.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace scraps;
using Catch::Matchers::WithinAbs;

namespace {

// Small integer-valued draws so ties are common.
std::vector<double> draw(Rng& rng, std::size_t n, int levels) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) * 0.5;
  return v;
}

}  // namespace

TEST_CASE("drop and lift", "[metrics]") {
  const std::vector<double> orig = {1, 2, 3, 4};
  std::vector<double> minus = orig;
  for (auto& v : minus) v -= 1.0;
  auto dl = drop_lift(orig, minus);
  CHECK(dl.drop_pct == 100.0);
  CHECK(dl.lift_pct == 0.0);
  dl = drop_lift(orig, orig);
  CHECK(dl.drop_pct == 0.0);
  CHECK(dl.lift_pct == 0.0);
  dl = drop_lift(orig, std::vector<double>{0, 3, 3, 5});
  CHECK(dl.drop_pct == 25.0);
  CHECK(dl.lift_pct == 50.0);
  CHECK(dl.n == 4);
  CHECK_THROWS_AS(drop_lift(orig, std::vector<double>{1, 2}), ConfigError);
  CHECK_THROWS_AS(drop_lift(std::vector<double>{}, std::vector<double>{}), ConfigError);

  std::vector<double> shifted_o = orig, shifted_c = {0, 3, 3, 5};
  for (auto& v : shifted_o) v += 17.5;
  for (auto& v : shifted_c) v += 17.5;
  const auto sh = drop_lift(shifted_o, shifted_c);
  CHECK(sh.drop_pct == 25.0);
  CHECK(sh.lift_pct == 50.0);
}

TEST_CASE("AUC-ROC", "[metrics]") {
  CHECK(auc_roc(std::vector<double>{2, 3}, std::vector<double>{0, 1}) == 1.0);
  CHECK(auc_roc(std::vector<double>{1, 1}, std::vector<double>{1, 1}) == 0.5);
  CHECK_THAT(auc_roc(std::vector<double>{0.9, 0.4}, std::vector<double>{0.5, 0.1}), WithinAbs(0.75, 1e-15));
  CHECK_THROWS_AS(auc_roc(std::vector<double>{}, std::vector<double>{1}), ConfigError);

  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pos = draw(rng, 1 + rng.below(15), 6);
    const auto neg = draw(rng, 1 + rng.below(15), 6);
    const double a = auc_roc(pos, neg);
    CHECK_THAT(a + auc_roc(neg, pos), WithinAbs(1.0, 1e-9));
    std::vector<double> tp, tn;
    for (double v : pos) tp.push_back(std::exp(3.0 * v) - 4.0);
    for (double v : neg) tn.push_back(std::exp(3.0 * v) - 4.0);
    CHECK_THAT(auc_roc(tp, tn), WithinAbs(a, 1e-12));
    CHECK_THAT(eer(tp, tn), WithinAbs(eer(pos, neg), 1e-12));
  }
}

TEST_CASE("AUC confidence half-width", "[metrics]") {
  Rng rng(2);
  std::vector<double> pos(400), neg(400);
  for (auto& v : pos) v = rng.normal(1.0, 1.0);
  for (auto& v : neg) v = rng.normal();
  const double delong = auc_ci_delong(pos, neg);
  CHECK(delong > 0.01);
  CHECK(delong < 0.06);
  CHECK(auc_ci_delong(std::vector<double>{2, 3}, std::vector<double>{0, 1}) == 0.0);

  const double boot = auc_ci_bootstrap(pos, neg, 1000, 4);
  CHECK(boot == auc_ci_bootstrap(pos, neg, 1000, 4));
  CHECK(std::abs(boot - delong) < 0.2 * delong);
  CHECK(auc_ci_bootstrap(std::vector<double>{2, 3}, std::vector<double>{0, 1}, 200, 1) == 0.0);
  CHECK_THROWS_AS(auc_ci_bootstrap(pos, std::vector<double>{}, 10, 1), ConfigError);
}

TEST_CASE("bootstrap matches explicit resampling", "[metrics]") {
  Rng data(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> pos(static_cast<std::size_t>(data.range(1, 15))), neg(static_cast<std::size_t>(data.range(1, 15)));
    for (auto& v : pos) v = static_cast<double>(data.below(4));
    for (auto& v : neg) v = static_cast<double>(data.below(4)) - 0.5 * (trial % 2);
    Rng rng(trial);
    std::vector<double> aucs;
    for (int b = 0; b < 50; ++b) {
      std::vector<double> bn, bp;
      for (std::size_t j = 0; j < neg.size(); ++j) bn.push_back(neg[rng.below(neg.size())]);
      for (std::size_t i = 0; i < pos.size(); ++i) bp.push_back(pos[rng.below(pos.size())]);
      aucs.push_back(oracle::auc(bp, bn));
    }
    std::sort(aucs.begin(), aucs.end());
    const double expected = (quantile_sorted(aucs, 0.975) - quantile_sorted(aucs, 0.025)) / 2.0;
    CHECK_THAT(auc_ci_bootstrap(pos, neg, 50, static_cast<std::uint64_t>(trial)), WithinAbs(expected, 1e-12));
  }
}

TEST_CASE("equal error rate", "[metrics]") {
  CHECK(eer(std::vector<double>{5, 6, 7}, std::vector<double>{1, 2}) == 0.0);
  const std::vector<double> same = {0.3, 0.1, 0.7, 0.5};
  CHECK(eer(same, same) == 0.5);
  CHECK_THAT(eer(std::vector<double>{3, 2, 1}, std::vector<double>{2.5, 0.5, 0}), WithinAbs(1.0 / 3.0, 1e-15));
  CHECK_THROWS_AS(eer(std::vector<double>{1}, std::vector<double>{}), ConfigError);
}

TEST_CASE("binomial confidence half-width at n = 1152", "[metrics]") {
  CHECK(std::round(binomial_ci(0.4931, 1152) * 1e4) / 1e4 == 0.0289);
  CHECK(std::round(binomial_ci(0.9106, 1152) * 1e4) / 1e4 == 0.0165);
  CHECK(binomial_ci(0.0, 1152) == 0.0);
  CHECK(binomial_ci(0.0, 1) == 0.0);
  CHECK_THROWS_AS(binomial_ci(0.5, 0), ConfigError);
  CHECK_THROWS_AS(binomial_ci(1.5, 10), ConfigError);

  // (percentage, two-decimal half-width) reference pairs, n = 1152
  const std::vector<std::pair<double, double>> reference = {
      {46.01, 2.88}, {53.99, 2.88}, {43.49, 2.86}, {56.51, 2.86}, {52.78, 2.88}, {8.94, 1.65},
      {49.31, 2.89}, {50.69, 2.89}, {45.14, 2.87}, {54.86, 2.87}, {76.91, 2.43}, {7.20, 1.49},
      {53.21, 2.88}, {46.79, 2.88}, {47.83, 2.88}, {52.17, 2.88}, {91.06, 1.65}, {2.60, 0.92},
      {79.43, 2.33}, {20.57, 2.33}, {63.54, 2.78}, {36.46, 2.78}, {96.44, 1.07}, {1.22, 0.63},
      {95.23, 1.23}, {4.77, 1.23},  {92.10, 1.56}, {7.90, 1.56},  {98.44, 0.72}, {0.87, 0.54},
      {99.57, 0.38}, {0.43, 0.38},  {99.22, 0.51}, {0.78, 0.51},  {99.48, 0.42}, {0.35, 0.34},
      {99.65, 0.34}, {0.35, 0.34},  {99.13, 0.54}, {0.87, 0.54},  {99.57, 0.38}, {0.35, 0.34},
      {99.65, 0.34}, {0.35, 0.34},  {99.39, 0.45}, {0.61, 0.45},  {99.83, 0.24}, {0.17, 0.24}};
  for (const auto& [pct, ci] : reference) {
    INFO(pct);
    CHECK(std::round(binomial_ci_pct(pct, 1152) * 100.0) / 100.0 == ci);
  }
}

TEST_CASE("spearman correlation", "[metrics]") {
  const std::vector<double> x = {1, 2, 3, 4};
  CHECK_THAT(spearman(x, std::vector<double>{10, 20, 30, 45}), WithinAbs(1.0, 1e-12));
  CHECK_THAT(spearman(x, std::vector<double>{4, 3, 2, -1}), WithinAbs(-1.0, 1e-12));
  CHECK_THAT(spearman(x, std::vector<double>{1, 3, 2, 4}), WithinAbs(0.8, 1e-12));
  CHECK_THROWS_AS(spearman(x, std::vector<double>{1, 2}), ConfigError);
  CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{1}), ConfigError);
  CHECK_THROWS_AS(spearman(x, std::vector<double>{2, 2, 2, 2}), ConfigError);
  CHECK(average_ranks(std::vector<double>{5, 1, 5, 3}) == std::vector<double>{3.5, 1, 3.5, 2});
}

TEST_CASE("metrics agree with brute-force oracles", "[metrics]") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t np = 1 + rng.below(20), nn = 1 + rng.below(20);
    const int levels = 2 + static_cast<int>(rng.below(8));
    const auto pos = draw(rng, np, levels);
    const auto neg = draw(rng, nn, levels);
    CHECK(std::abs(auc_roc(pos, neg) - oracle::auc(pos, neg)) < 1e-9);
    CHECK(std::abs(eer(pos, neg) - oracle::eer(pos, neg)) < 1e-9);

    const std::size_t n = 2 + rng.below(19);
    const auto x = draw(rng, n, levels), y = draw(rng, n, levels);
    const auto rx = oracle::ranks(x), ry = oracle::ranks(y);
    const bool degenerate = std::all_of(rx.begin(), rx.end(), [&](double r) { return r == rx[0]; }) ||
                            std::all_of(ry.begin(), ry.end(), [&](double r) { return r == ry[0]; });
    if (degenerate)
      CHECK_THROWS(spearman(x, y));
    else
      CHECK(std::abs(spearman(x, y) - oracle::spearman(x, y)) < 1e-9);

    const auto dl = drop_lift(x, y);
    const auto [d, l] = oracle::drop_lift(x, y);
    CHECK(std::abs(dl.drop_pct - d) < 1e-9);
    CHECK(std::abs(dl.lift_pct - l) < 1e-9);
    CHECK(dl.drop_pct + dl.lift_pct <= 100.0);
  }
}

TEST_CASE("threshold ROC", "[metrics]") {
  std::vector<double> metric, scores;
  for (int i = 0; i < 20; ++i) {
    metric.push_back(i);
    scores.push_back(-i);
  }
  const auto roc = threshold_roc(scores, metric, 9.5);
  CHECK_THAT(roc.auc, WithinAbs(1.0, 1e-12));
  CHECK(roc.points.front().fpr == 0.0);
  CHECK(roc.points.front().tpr == 0.0);
  CHECK(roc.points.back().fpr == 1.0);
  CHECK(roc.points.back().tpr == 1.0);
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
    CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
  }

  Rng rng(4);
  std::vector<double> m2(200), s2(200);
  for (auto& v : m2) v = rng.uniform();
  for (auto& v : s2) v = rng.normal();
  const auto chance = threshold_roc(s2, m2, 0.5);
  CHECK(std::abs(chance.auc - 0.5) < 0.1);

  // trapezoid AUC equals the Mann-Whitney statistic of the detector
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < 200; ++i) (m2[i] > 0.5 ? pos : neg).push_back(-s2[i]);
  CHECK_THAT(chance.auc, WithinAbs(auc_roc(pos, neg), 1e-12));

  CHECK_THROWS_AS(threshold_roc(s2, m2, 2.0), ConfigError);
}
