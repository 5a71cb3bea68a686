#pragma once

#include <scraps/common.hpp>

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

namespace scraps {

struct DropLift {
  double drop_pct = 0.0;
  double lift_pct = 0.0;
  std::size_t n = 0;
};

// Percentage of pairs whose score decreased / increased; ties count for neither.
inline DropLift drop_lift(std::span<const double> original, std::span<const double> corrupted) {
  if (original.size() != corrupted.size())
    throw ConfigError("drop_lift: length mismatch (" + std::to_string(original.size()) + " vs " +
                      std::to_string(corrupted.size()) + ")");
  if (original.empty()) throw ConfigError("drop_lift: no pairs");
  std::size_t drops = 0, lifts = 0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    if (corrupted[i] < original[i]) ++drops;
    if (corrupted[i] > original[i]) ++lifts;
  }
  const double n = static_cast<double>(original.size());
  return {100.0 * drops / n, 100.0 * lifts / n, original.size()};
}

// Normal-approximation 95% half-width of a binomial proportion.
inline double binomial_ci(double p, std::size_t n) {
  if (n == 0) throw ConfigError("binomial_ci: n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("binomial_ci: proportion must be in [0, 1]");
  return 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

// Same, with the proportion and result in percentage points.
inline double binomial_ci_pct(double pct, std::size_t n) { return 100.0 * binomial_ci(pct / 100.0, n); }

namespace detail {

inline void require_nonempty(std::span<const double> pos, std::span<const double> neg, const char* what) {
  if (pos.empty() || neg.empty()) throw ConfigError(std::string(what) + ": both score sets must be nonempty");
}

// For each x in `queries`: 2 * #{s in sorted: s < x} + #{s == x}.
inline std::vector<std::int64_t> doubled_wins(std::span<const double> queries, const std::vector<double>& sorted) {
  std::vector<std::int64_t> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto [lo, hi] = std::equal_range(sorted.begin(), sorted.end(), queries[i]);
    out[i] = 2 * (lo - sorted.begin()) + (hi - lo);
  }
  return out;
}

}  // namespace detail

// Mann-Whitney estimate of P(pos > neg), ties counted as one half.
inline double auc_roc(std::span<const double> pos, std::span<const double> neg) {
  detail::require_nonempty(pos, neg, "auc_roc");
  std::vector<double> sorted(neg.begin(), neg.end());
  std::sort(sorted.begin(), sorted.end());
  const auto wins = detail::doubled_wins(pos, sorted);
  const std::int64_t total = std::accumulate(wins.begin(), wins.end(), std::int64_t{0});
  return static_cast<double>(total) / (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// DeLong 95% half-width for the AUC.
inline double auc_ci_delong(std::span<const double> pos, std::span<const double> neg) {
  detail::require_nonempty(pos, neg, "auc_ci_halfwidth");
  if (pos.size() < 2 || neg.size() < 2) return 0.0;
  std::vector<double> sneg(neg.begin(), neg.end()), spos(pos.begin(), pos.end());
  std::sort(sneg.begin(), sneg.end());
  std::sort(spos.begin(), spos.end());
  const auto pos_wins = detail::doubled_wins(pos, sneg);
  const auto neg_wins = detail::doubled_wins(neg, spos);  // positives below each negative
  auto variance = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size() - 1);
  };
  std::vector<double> v10(pos.size()), v01(neg.size());
  for (std::size_t i = 0; i < pos.size(); ++i) v10[i] = pos_wins[i] / (2.0 * static_cast<double>(neg.size()));
  for (std::size_t j = 0; j < neg.size(); ++j) v01[j] = 1.0 - neg_wins[j] / (2.0 * static_cast<double>(pos.size()));
  const double var = variance(v10) / static_cast<double>(pos.size()) + variance(v01) / static_cast<double>(neg.size());
  return 1.96 * std::sqrt(std::max(var, 0.0));
}

// Percentile-bootstrap 95% half-width for the AUC: positives and negatives
// are resampled separately; each resample draws all negatives, then all
// positives. Returns (q97.5 - q2.5) / 2.
inline double auc_ci_bootstrap(std::span<const double> pos, std::span<const double> neg, std::size_t resamples = 1000,
                               std::uint64_t seed = 0) {
  detail::require_nonempty(pos, neg, "auc_ci_bootstrap");
  if (resamples < 2) throw ConfigError("auc_ci_bootstrap: need at least 2 resamples");
  std::vector<std::size_t> order(neg.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return neg[a] < neg[b]; });
  std::vector<std::size_t> rank_of(neg.size());
  std::vector<double> sorted(neg.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    rank_of[order[k]] = k;
    sorted[k] = neg[order[k]];
  }
  std::vector<std::size_t> lo(pos.size()), hi(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const auto [a, b] = std::equal_range(sorted.begin(), sorted.end(), pos[i]);
    lo[i] = static_cast<std::size_t>(a - sorted.begin());
    hi[i] = static_cast<std::size_t>(b - sorted.begin());
  }
  Rng rng(seed);
  std::vector<std::int64_t> prefix(neg.size() + 1);
  std::vector<double> aucs(resamples);
  const double denom = 2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size());
  for (auto& auc : aucs) {
    std::fill(prefix.begin(), prefix.end(), 0);
    for (std::size_t j = 0; j < neg.size(); ++j) ++prefix[rank_of[rng.below(neg.size())] + 1];
    std::partial_sum(prefix.begin(), prefix.end(), prefix.begin());
    std::int64_t wins = 0;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      const auto d = rng.below(pos.size());
      wins += prefix[lo[d]] + prefix[hi[d]];
    }
    auc = static_cast<double>(wins) / denom;
  }
  std::sort(aucs.begin(), aucs.end());
  auto quantile = [&](double q) {
    const double at = q * static_cast<double>(aucs.size() - 1);
    const auto k = static_cast<std::size_t>(at);
    const auto k1 = std::min(k + 1, aucs.size() - 1);
    return aucs[k] + (at - static_cast<double>(k)) * (aucs[k1] - aucs[k]);
  };
  return (quantile(0.975) - quantile(0.025)) / 2.0;
}

// Equal-error rate. A score accepts when score >= threshold; thresholds are
// every observed score plus +inf. Returns (FAR + FRR) / 2 at the threshold
// minimizing |FAR - FRR| (lowest such threshold on ties).
inline double eer(std::span<const double> pos, std::span<const double> neg) {
  detail::require_nonempty(pos, neg, "eer");
  std::vector<double> sp(pos.begin(), pos.end()), sn(neg.begin(), neg.end());
  std::sort(sp.begin(), sp.end());
  std::sort(sn.begin(), sn.end());
  std::vector<double> thresholds;
  thresholds.reserve(sp.size() + sn.size() + 1);
  std::merge(sp.begin(), sp.end(), sn.begin(), sn.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  const double P = static_cast<double>(sp.size()), N = static_cast<double>(sn.size());
  double best_gap = std::numeric_limits<double>::infinity(), best = 0.5;
  std::size_t ip = 0, in = 0;  // counts of scores strictly below the threshold
  for (double t : thresholds) {
    while (ip < sp.size() && sp[ip] < t) ++ip;
    while (in < sn.size() && sn[in] < t) ++in;
    const double frr = static_cast<double>(ip) / P;
    const double far = static_cast<double>(sn.size() - in) / N;
    const double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best = 0.5 * (far + frr);
    }
  }
  return best;
}

// Average ranks (1-based); ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("spearman: length mismatch");
  if (x.size() < 2) throw ConfigError("spearman: need at least 2 points");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ConfigError("spearman: zero rank variance");
  return sxy / std::sqrt(sxx * syy);
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// ROC of `detector` (higher = more positive) against binary labels.
inline RocCurve roc_curve(std::span<const double> detector, const std::vector<bool>& labels) {
  if (detector.size() != labels.size()) throw ConfigError("roc_curve: length mismatch");
  const auto npos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t nneg = labels.size() - npos;
  if (npos == 0 || nneg == 0) throw ConfigError("roc_curve: labels contain a single class");
  std::vector<std::size_t> order(detector.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return detector[a] > detector[b]; });
  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = detector[order[i]];
    while (i < order.size() && detector[order[i]] == t) {
      labels[order[i]] ? ++tp : ++fp;
      ++i;
    }
    const RocPoint pt{static_cast<double>(fp) / nneg, static_cast<double>(tp) / npos, t};
    const auto& prev = roc.points.back();
    roc.auc += (pt.fpr - prev.fpr) * 0.5 * (pt.tpr + prev.tpr);
    roc.points.push_back(pt);
  }
  return roc;
}

// Positive class: metric > threshold. Low scores should flag it, so the
// detector is the negated score.
inline RocCurve threshold_roc(std::span<const double> scores, std::span<const double> metric, double threshold) {
  if (scores.size() != metric.size()) throw ConfigError("threshold_roc: length mismatch");
  std::vector<bool> labels(metric.size());
  for (std::size_t i = 0; i < metric.size(); ++i) labels[i] = metric[i] > threshold;
  std::vector<double> detector(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) detector[i] = -scores[i];
  return roc_curve(detector, labels);
}

}  // namespace scraps
