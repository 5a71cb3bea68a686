#pragma once

#include <scraps/contrastive.hpp>
#include <scraps/corpus.hpp>
#include <scraps/corruption.hpp>
#include <scraps/metrics.hpp>

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace scraps {

// ---------------------------------------------------------------------------
// Batched eval-mode encoding. Batches are always formed the same way for a
// given list, so re-encoding an unchanged item reproduces its score exactly.

inline constexpr std::size_t kEncodeChunk = 64;

inline MatF encode_all(const Model& model, const std::vector<PhonemeSequence>& seqs,
                       std::size_t chunk = kEncodeChunk) {
  MatF out(static_cast<Eigen::Index>(seqs.size()), model.config.d_embed);
  for (std::size_t i = 0; i < seqs.size(); i += chunk) {
    const std::size_t n = std::min(chunk, seqs.size() - i);
    std::vector<PhonemeSequence> batch(seqs.begin() + i, seqs.begin() + i + n);
    out.middleRows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) =
        encode_phonemes(batch, model.params, model.config).rows;
  }
  return out;
}

inline MatF encode_all(const Model& model, const std::vector<MelSpectrogram>& mels,
                       std::size_t chunk = kEncodeChunk) {
  MatF out(static_cast<Eigen::Index>(mels.size()), model.config.d_embed);
  for (std::size_t i = 0; i < mels.size(); i += chunk) {
    const std::size_t n = std::min(chunk, mels.size() - i);
    std::vector<MelSpectrogram> batch(mels.begin() + i, mels.begin() + i + n);
    out.middleRows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) =
        encode_mel(batch, model.params, model.config).rows;
  }
  return out;
}

inline std::vector<double> paired_scores(const MatF& phonetic, const MatF& acoustic) {
  std::vector<double> s(static_cast<std::size_t>(phonetic.rows()));
  for (Eigen::Index i = 0; i < phonetic.rows(); ++i) s[i] = phonetic.row(i).dot(acoustic.row(i));
  return s;
}

// ---------------------------------------------------------------------------
// Report types

struct EvalRecord {
  std::string method;
  double amount = 0.0;
  std::optional<double> drop_pct, drop_ci, lift_pct, lift_ci;
  std::optional<double> auc, auc_ci, eer;
  std::size_t n = 0;

  bool operator==(const EvalRecord&) const = default;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  nlohmann::json metadata = nlohmann::json::object();

  bool operator==(const EvalReport&) const = default;
};

// Merges rows with the same (method, amount), e.g. a sensitivity and a
// robustness sweep over the same grid.
inline EvalReport merge_reports(const EvalReport& a, const EvalReport& b) {
  EvalReport out = a;
  for (const auto& r : b.records) {
    auto it = std::find_if(out.records.begin(), out.records.end(),
                           [&](const EvalRecord& x) { return x.method == r.method && x.amount == r.amount; });
    if (it == out.records.end()) {
      out.records.push_back(r);
      continue;
    }
    auto take = [](std::optional<double>& dst, const std::optional<double>& src) {
      if (src) dst = src;
    };
    take(it->drop_pct, r.drop_pct);
    take(it->drop_ci, r.drop_ci);
    take(it->lift_pct, r.lift_pct);
    take(it->lift_ci, r.lift_ci);
    take(it->auc, r.auc);
    take(it->auc_ci, r.auc_ci);
    take(it->eer, r.eer);
    it->n = std::max(it->n, r.n);
  }
  for (auto& [k, v] : b.metadata.items()) out.metadata[k] = v;
  return out;
}

// ---------------------------------------------------------------------------
// Corruption of a whole sample. Item i uses its own stream derived from
// (seed, i); the stream does not depend on the amount, so higher amounts
// corrupt a superset of what lower amounts corrupt.

inline std::vector<std::size_t> mix_partners(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> partner(n, 0);
  if (n < 2) return partner;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed ^ 0x6D69785FULL, i));
    partner[i] = (i + 1 + rng.below(n - 1)) % n;
  }
  return partner;
}

inline std::vector<PhonemeSequence> corrupt_phonemes(const std::vector<Example>& sample, double amount,
                                                     std::uint64_t seed, const Vocabulary& vocab) {
  std::vector<PhonemeSequence> out;
  out.reserve(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i)
    out.push_back(substitute_phonemes(sample[i].phonemes, amount, derive_seed(seed, i), vocab));
  return out;
}

inline std::vector<MelSpectrogram> corrupt_mels(const std::vector<Example>& sample, CorruptionMethod method,
                                                double amount, std::uint64_t seed) {
  std::vector<MelSpectrogram> out;
  out.reserve(sample.size());
  const auto partners = mix_partners(sample.size(), seed);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (method == CorruptionMethod::kGaussian)
      out.push_back(gaussian_noise(sample[i].mel, amount, derive_seed(seed, i)));
    else
      out.push_back(mix_spectrograms(sample[i].mel, sample[partners[i]].mel, amount));
  }
  return out;
}

inline std::vector<PhonemeSequence> phonemes_of(const std::vector<Example>& sample) {
  std::vector<PhonemeSequence> v;
  v.reserve(sample.size());
  for (const auto& e : sample) v.push_back(e.phonemes);
  return v;
}

inline std::vector<MelSpectrogram> mels_of(const std::vector<Example>& sample) {
  std::vector<MelSpectrogram> v;
  v.reserve(sample.size());
  for (const auto& e : sample) v.push_back(e.mel);
  return v;
}

inline void check_amounts(const std::vector<double>& amounts) {
  if (amounts.empty()) throw ConfigError("no corruption amounts given");
  for (double a : amounts)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("corruption amount out of [0, 1]: " + std::to_string(a));
}

inline void check_model(const Model& model) {
  model.config.validate();
  if (model.params.heads.empty() || model.params.phonetic.embedding.rows() != model.config.vocab_size)
    throw ConfigError("model parameters do not match its configuration");
}

// ---------------------------------------------------------------------------
// Sensitivity: fraction of matched pairs whose raw dot-product score drops /
// lifts after corrupting one side.

inline EvalReport sensitivity_sweep(const Model& model, const std::vector<Example>& sample, CorruptionMethod method,
                                    const std::vector<double>& amounts, std::uint64_t seed) {
  check_model(model);
  check_amounts(amounts);
  if (sample.empty()) throw ConfigError("sensitivity_sweep: empty sample");
  const auto seqs = phonemes_of(sample);
  const auto mels = mels_of(sample);
  const MatF t_clean = encode_all(model, seqs);
  const MatF a_clean = encode_all(model, mels);
  const auto clean = paired_scores(t_clean, a_clean);
  EvalReport report;
  for (double amount : amounts) {
    std::vector<double> corrupted;
    if (corrupts_phonemes(method))
      corrupted = paired_scores(encode_all(model, corrupt_phonemes(sample, amount, seed, model.vocab)), a_clean);
    else
      corrupted = paired_scores(t_clean, encode_all(model, corrupt_mels(sample, method, amount, seed)));
    const auto dl = drop_lift(clean, corrupted);
    EvalRecord r;
    r.method = method_name(method);
    r.amount = amount;
    r.drop_pct = dl.drop_pct;
    r.lift_pct = dl.lift_pct;
    r.drop_ci = binomial_ci_pct(dl.drop_pct, dl.n);
    r.lift_ci = binomial_ci_pct(dl.lift_pct, dl.n);
    r.n = dl.n;
    report.records.push_back(r);
  }
  report.metadata["seed"] = seed;
  return report;
}

// ---------------------------------------------------------------------------
// Robustness: within each chunk, matched pairs (diagonal) are positives and
// all other pairs negatives; scores are pooled over chunks.

enum class ScoreKind {
  kProbability,  // row-wise softmax over the chunk (phonetic query vs acoustic candidates)
  kRaw,          // dot products
};

struct PooledScores {
  std::vector<double> pos;
  std::vector<double> neg;
};

inline PooledScores pooled_chunk_scores(const MatF& phonetic, const MatF& acoustic, std::size_t chunk,
                                        double temperature, ScoreKind kind) {
  if (chunk < 2) throw ConfigError("robustness chunk size must be >= 2");
  PooledScores out;
  const auto n = static_cast<std::size_t>(phonetic.rows());
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    if (m < 2) break;  // a single trailing item has no negatives
    const auto s0 = static_cast<Eigen::Index>(start), sm = static_cast<Eigen::Index>(m);
    ScoreMatrix<float> L = score_matrix<float>(phonetic.middleRows(s0, sm), acoustic.middleRows(s0, sm), temperature);
    const MatF values = kind == ScoreKind::kRaw ? L.logits : normalize_scores(L, Axis::kRows).values;
    for (Eigen::Index i = 0; i < sm; ++i)
      for (Eigen::Index j = 0; j < sm; ++j) (i == j ? out.pos : out.neg).push_back(values(i, j));
  }
  return out;
}

inline EvalRecord robustness_record(const MatF& phonetic, const MatF& acoustic, std::size_t chunk, double temperature,
                                    ScoreKind kind, std::uint64_t ci_seed = 0) {
  const auto pooled = pooled_chunk_scores(phonetic, acoustic, chunk, temperature, kind);
  if (pooled.pos.empty() || pooled.neg.empty()) throw ConfigError("robustness: sample too small for one chunk");
  EvalRecord r;
  r.auc = auc_roc(pooled.pos, pooled.neg);
  r.auc_ci = auc_ci_bootstrap(pooled.pos, pooled.neg, 1000, ci_seed);
  r.eer = eer(pooled.pos, pooled.neg);
  r.n = pooled.pos.size();
  return r;
}

inline EvalReport robustness_sweep(const Model& model, const std::vector<Example>& sample, CorruptionMethod method,
                                   const std::vector<double>& amounts, std::uint64_t seed, std::size_t chunk = 128,
                                   ScoreKind kind = ScoreKind::kProbability) {
  check_model(model);
  check_amounts(amounts);
  if (chunk < 2) throw ConfigError("robustness_sweep: chunk size must be >= 2");
  if (sample.size() < 2) throw ConfigError("robustness_sweep: need at least 2 pairs");
  const auto seqs = phonemes_of(sample);
  const auto mels = mels_of(sample);
  const MatF t_clean = encode_all(model, seqs);
  const MatF a_clean = encode_all(model, mels);
  EvalReport report;
  for (double amount : amounts) {
    MatF t = t_clean, a = a_clean;
    if (corrupts_phonemes(method))
      t = encode_all(model, corrupt_phonemes(sample, amount, seed, model.vocab));
    else
      a = encode_all(model, corrupt_mels(sample, method, amount, seed));
    EvalRecord r = robustness_record(t, a, chunk, model.config.temperature, kind, seed);
    r.method = method_name(method);
    r.amount = amount;
    report.records.push_back(r);
  }
  report.metadata["seed"] = seed;
  report.metadata["chunk"] = chunk;
  report.metadata["score"] = kind == ScoreKind::kRaw ? "raw" : "probability";
  return report;
}

// ---------------------------------------------------------------------------
// Retrieval and text-less scoring.

struct RetrievalHit {
  std::size_t index = 0;
  double probability = 0.0;
  double score = 0.0;
};

// Softmax (T = 1) over the dot products of one phonetic query with every
// candidate, ranked by descending probability.
inline std::vector<RetrievalHit> rank_candidates(const Eigen::Matrix<float, 1, Eigen::Dynamic>& query,
                                                 const MatF& candidates, std::size_t k) {
  if (candidates.rows() == 0) throw ConfigError("retrieve: no candidates");
  if (k == 0 || k > static_cast<std::size_t>(candidates.rows()))
    throw ConfigError("retrieve: k must be in [1, " + std::to_string(candidates.rows()) + "]");
  const Eigen::VectorXd scores = (candidates * query.transpose()).cast<double>();
  const double m = scores.maxCoeff();
  const Eigen::VectorXd e = (scores.array() - m).exp();
  const double z = e.sum();
  std::vector<RetrievalHit> hits(static_cast<std::size_t>(candidates.rows()));
  for (std::size_t i = 0; i < hits.size(); ++i) hits[i] = {i, e[i] / z, scores[i]};
  std::stable_sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) { return a.score > b.score; });
  hits.resize(k);
  return hits;
}

inline std::vector<RetrievalHit> retrieve_topk(const PhonemeSequence& query, const std::vector<MelSpectrogram>& candidates,
                                               const Model& model, std::size_t k) {
  if (candidates.empty()) throw ConfigError("retrieve: no candidates");
  const MatF q = encode_phonemes(std::vector<PhonemeSequence>{query}, model.params, model.config).rows;
  return rank_candidates(q.row(0), encode_all(model, candidates), k);
}

// Correspondence of two recordings: both go through the acoustic encoder.
inline double score_audio_pair(const MelSpectrogram& a, const MelSpectrogram& b, const Model& model) {
  const MatF ea = encode_mel(std::vector<MelSpectrogram>{a}, model.params, model.config).rows;
  const MatF eb = encode_mel(std::vector<MelSpectrogram>{b}, model.params, model.config).rows;
  return ea.row(0).dot(eb.row(0));
}

// ---------------------------------------------------------------------------
// Matched-pair score distribution by phoneme-sequence length.

struct LengthBucket {
  double lo = 0.0;
  double hi = 0.0;  // exclusive; may be +inf
  std::size_t count = 0;
  double mean = 0.0, min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline std::vector<LengthBucket> bucket_scores(const std::vector<std::size_t>& lengths, const std::vector<double>& scores,
                                               const std::vector<double>& edges) {
  if (edges.size() < 2) throw ConfigError("length_profile: need at least two bucket edges");
  if (!std::is_sorted(edges.begin(), edges.end())) throw ConfigError("length_profile: bucket edges must ascend");
  std::vector<std::vector<double>> groups(edges.size() - 1);
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const double len = static_cast<double>(lengths[i]);
    auto it = std::upper_bound(edges.begin(), edges.end(), len);
    if (it == edges.begin() || it == edges.end())
      throw ConfigError("length_profile: length " + std::to_string(lengths[i]) + " not covered by buckets");
    groups[static_cast<std::size_t>(it - edges.begin()) - 1].push_back(scores[i]);
  }
  std::vector<LengthBucket> out;
  for (std::size_t b = 0; b < groups.size(); ++b) {
    auto& g = groups[b];
    std::sort(g.begin(), g.end());
    LengthBucket lb;
    lb.lo = edges[b];
    lb.hi = edges[b + 1];
    lb.count = g.size();
    if (!g.empty()) {
      lb.mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
      lb.min = g.front();
      lb.max = g.back();
      lb.q1 = quantile_sorted(g, 0.25);
      lb.median = quantile_sorted(g, 0.5);
      lb.q3 = quantile_sorted(g, 0.75);
    }
    out.push_back(lb);
  }
  return out;
}

inline std::vector<LengthBucket> length_profile(const Model& model, const std::vector<Example>& sample,
                                                const std::vector<double>& edges) {
  if (edges.empty()) throw ConfigError("length_profile: empty bucket set");
  const auto seqs = phonemes_of(sample);
  const auto scores = paired_scores(encode_all(model, seqs), encode_all(model, mels_of(sample)));
  std::vector<std::size_t> lengths;
  for (const auto& s : seqs) lengths.push_back(s.size());
  return bucket_scores(lengths, scores, edges);
}

}  // namespace scraps
