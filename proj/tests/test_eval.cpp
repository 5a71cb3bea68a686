#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace scraps;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

struct Fixture {
  test::TempDir dir;
  Corpus corpus;
  Model model;

  Fixture() {
    const auto out = test::small_corpus(dir / "corpus", 40, 0);
    corpus = load_corpus(out.train_manifest);
    model = Model::init(test::tiny_config(), corpus.vocab, 5);
  }
};

}  // namespace

TEST_CASE("sensitivity sweep", "[eval]") {
  Fixture f;
  const std::vector<double> amounts = {0.0, 0.3, 1.0};
  for (auto method : {CorruptionMethod::kSubstitute, CorruptionMethod::kGaussian, CorruptionMethod::kMix}) {
    const auto report = sensitivity_sweep(f.model, f.corpus.examples, method, amounts, 3);
    REQUIRE(report.records.size() == 3);
    const auto& zero = report.records[0];
    CHECK(zero.drop_pct == 0.0);
    CHECK(zero.lift_pct == 0.0);
    for (const auto& r : report.records) {
      CHECK(r.method == method_name(method));
      CHECK(r.n == f.corpus.examples.size());
      REQUIRE(r.drop_pct);
      REQUIRE(r.lift_pct);
      REQUIRE(r.drop_ci);
      REQUIRE(r.lift_ci);
      CHECK(*r.drop_pct + *r.lift_pct <= 100.0);
      CHECK_FALSE(r.auc.has_value());
    }
    CHECK(report == sensitivity_sweep(f.model, f.corpus.examples, method, amounts, 3));
  }
  CHECK_THROWS_AS(sensitivity_sweep(f.model, f.corpus.examples, CorruptionMethod::kMix, {1.5}, 1), ConfigError);
  CHECK_THROWS_AS(sensitivity_sweep(f.model, {}, CorruptionMethod::kMix, {0.5}, 1), ConfigError);

  Model broken = f.model;
  broken.params.heads.clear();
  CHECK_THROWS_AS(sensitivity_sweep(broken, f.corpus.examples, CorruptionMethod::kMix, {0.5}, 1), ConfigError);
}

TEST_CASE("robustness sweep", "[eval]") {
  Fixture f;
  const std::vector<double> amounts = {0.0, 0.5};
  const auto report = robustness_sweep(f.model, f.corpus.examples, CorruptionMethod::kGaussian, amounts, 3, 16);
  REQUIRE(report.records.size() == 2);
  for (const auto& r : report.records) {
    REQUIRE(r.auc);
    REQUIRE(r.eer);
    CHECK(*r.auc >= 0.0);
    CHECK(*r.auc <= 1.0);
    CHECK(r.n == f.corpus.examples.size());
  }
  CHECK(report == robustness_sweep(f.model, f.corpus.examples, CorruptionMethod::kGaussian, amounts, 3, 16));
  CHECK_THROWS_WITH(robustness_sweep(f.model, f.corpus.examples, CorruptionMethod::kGaussian, amounts, 3, 1),
                    ContainsSubstring("chunk"));

  // pooled positives/negatives: diagonal vs off-diagonal of each chunk
  Rng rng(1);
  const MatF t = test::random_matrix(5, 3, rng).cast<float>();
  const MatF a = test::random_matrix(5, 3, rng).cast<float>();
  const auto pooled = pooled_chunk_scores(t, a, 2, 1.0, ScoreKind::kRaw);
  CHECK(pooled.pos.size() == 4);  // the trailing single item has no negatives
  CHECK(pooled.neg.size() == 4);
  CHECK_THAT(pooled.pos[0], WithinAbs(t.row(0).dot(a.row(0)), 1e-6));
  CHECK_THAT(pooled.neg[0], WithinAbs(t.row(0).dot(a.row(1)), 1e-6));
  const auto probs = pooled_chunk_scores(t, a, 5, 1.0, ScoreKind::kProbability);
  CHECK(probs.pos.size() == 5);
  CHECK(probs.neg.size() == 20);
}

TEST_CASE("mix partners are never the item itself", "[eval]") {
  for (std::size_t n : {2u, 3u, 10u, 97u}) {
    const auto p = mix_partners(n, 7);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(p[i] != i);
      CHECK(p[i] < n);
    }
    CHECK(p == mix_partners(n, 7));
  }
}

TEST_CASE("retrieval", "[eval]") {
  Fixture f;
  const auto mels = mels_of(f.corpus.examples);
  const auto& query = f.corpus.examples[3].phonemes;
  const auto hits = retrieve_topk(query, mels, f.model, mels.size());
  REQUIRE(hits.size() == mels.size());
  double total = 0.0;
  for (const auto& h : hits) total += h.probability;
  CHECK_THAT(total, WithinAbs(1.0, 1e-6));

  // brute-force ranking of raw dot products
  const MatF q = encode_phonemes(std::vector<PhonemeSequence>{query}, f.model.params, f.model.config).rows;
  std::vector<std::pair<double, std::size_t>> naive;
  for (std::size_t i = 0; i < mels.size(); ++i) {
    const MatF c = encode_mel(std::vector<MelSpectrogram>{mels[i]}, f.model.params, f.model.config).rows;
    naive.emplace_back(q.row(0).dot(c.row(0)), i);
  }
  std::stable_sort(naive.begin(), naive.end(), [](auto& x, auto& y) { return x.first > y.first; });
  for (std::size_t r = 0; r < hits.size(); ++r) {
    CHECK(hits[r].index == naive[r].second);
    CHECK_THAT(hits[r].score, WithinAbs(naive[r].first, 1e-4));
  }

  const auto top2 = retrieve_topk(query, mels, f.model, 2);
  CHECK(top2.size() == 2);
  CHECK(top2[0].index == hits[0].index);
  const auto single = retrieve_topk(query, {mels[0]}, f.model, 1);
  CHECK(single[0].probability == 1.0);
  CHECK_THROWS_AS(retrieve_topk(query, {}, f.model, 1), ConfigError);
  CHECK_THROWS_AS(retrieve_topk(query, mels, f.model, mels.size() + 1), ConfigError);
}

TEST_CASE("audio pair scoring", "[eval]") {
  Fixture f;
  const auto& a = f.corpus.examples[0].mel;
  const auto& b = f.corpus.examples[1].mel;
  CHECK_THAT(score_audio_pair(a, b, f.model), WithinAbs(score_audio_pair(b, a, f.model), 1e-6));
  const MatF ea = encode_mel(std::vector<MelSpectrogram>{a}, f.model.params, f.model.config).rows;
  CHECK_THAT(score_audio_pair(a, a, f.model), WithinAbs(ea.row(0).squaredNorm(), 1e-5));
  MelSpectrogram raw = a;
  raw.standardized = false;
  CHECK_THROWS(score_audio_pair(raw, b, f.model));
}

TEST_CASE("length profile", "[eval]") {
  Fixture f;
  const auto& sample = f.corpus.examples;
  const double inf = std::numeric_limits<double>::infinity();
  const auto one = length_profile(f.model, sample, {0.0, inf});
  REQUIRE(one.size() == 1);
  CHECK(one[0].count == sample.size());
  const auto scores = paired_scores(encode_all(f.model, phonemes_of(sample)), encode_all(f.model, mels_of(sample)));
  double mean = 0.0;
  for (double s : scores) mean += s / static_cast<double>(scores.size());
  CHECK_THAT(one[0].mean, WithinAbs(mean, 1e-9));
  CHECK(one[0].min <= one[0].q1);
  CHECK(one[0].q1 <= one[0].median);
  CHECK(one[0].median <= one[0].q3);
  CHECK(one[0].q3 <= one[0].max);

  const std::vector<double> edges = {0, 4, 5, 7, inf};
  const auto buckets = length_profile(f.model, sample, edges);
  std::size_t total = 0;
  for (const auto& b : buckets) total += b.count;
  CHECK(total == sample.size());
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    std::vector<double> group;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const double len = static_cast<double>(sample[i].phonemes.size());
      if (len >= edges[b] && len < edges[b + 1]) group.push_back(scores[i]);
    }
    CHECK(buckets[b].count == group.size());
    if (!group.empty()) {
      double m = 0.0;
      for (double s : group) m += s / static_cast<double>(group.size());
      CHECK_THAT(buckets[b].mean, WithinAbs(m, 1e-9));
      CHECK(buckets[b].min == *std::min_element(group.begin(), group.end()));
      CHECK(buckets[b].max == *std::max_element(group.begin(), group.end()));
    }
  }
  CHECK_THROWS_AS(length_profile(f.model, sample, {}), ConfigError);
  CHECK_THROWS_AS(length_profile(f.model, sample, {5.0, 6.0}), ConfigError);
  CHECK_THAT(quantile_sorted({1, 2, 3, 4}, 0.5), WithinAbs(2.5, 1e-15));
}

TEST_CASE("report emission", "[eval]") {
  Fixture f;
  auto report = merge_reports(
      sensitivity_sweep(f.model, f.corpus.examples, CorruptionMethod::kGaussian, {0.0, 0.5}, 1),
      robustness_sweep(f.model, f.corpus.examples, CorruptionMethod::kGaussian, {0.0, 0.5}, 1, 16));
  report = merge_reports(report, sensitivity_sweep(f.model, f.corpus.examples, CorruptionMethod::kMix, {0.5}, 1));
  report.metadata["checkpoint"] = "x.sckp";
  REQUIRE(report.records.size() == 3);
  CHECK(report.records[0].drop_pct.has_value());
  CHECK(report.records[0].auc.has_value());

  const auto json = format_report(report, ReportFormat::kJson);
  CHECK(report_from_json(nlohmann::json::parse(json)) == report);
  CHECK(json == format_report(report, ReportFormat::kJson));

  const auto csv = format_report(report, ReportFormat::kCsv);
  CHECK(csv.rfind("method,amount,drop_pct,drop_ci,lift_pct,lift_ci,auc,eer,n\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3);

  const auto tsv = format_report(report, ReportFormat::kTsvPlot);
  CHECK(tsv.rfind("amount\tseries\tvalue\tci\n", 0) == 0);
  CHECK(tsv.find("gaussian/auc") != std::string::npos);

  test::TempDir dir;
  emit_report(report, "csv", dir / "a.csv");
  emit_report(report, "csv", dir / "b.csv");
  CHECK(detail::slurp(dir / "a.csv") == detail::slurp(dir / "b.csv"));
  CHECK_THROWS_AS(emit_report(report, "xml", dir / "c.xml"), ConfigError);
  CHECK_THROWS_AS(emit_report(report, "csv", dir / "missing/dir/c.csv"), IoError);
}
