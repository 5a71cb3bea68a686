#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

using namespace scraps;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

TrainConfig tiny_train(const std::string& out_dir) {
  TrainConfig c;
  c.model = test::tiny_config();
  c.batch_size = 8;
  c.max_steps = 20;
  c.eval_every = 10;
  c.dev_eval_size = 16;
  c.lr = 2e-3;
  c.seed = 21;
  c.checkpoint_dir = out_dir;
  return c;
}

bool same_params(EncoderParams<float>& a, EncoderParams<float>& b) {
  auto na = a.named();
  auto nb = b.named();
  if (na.size() != nb.size()) return false;
  for (std::size_t i = 0; i < na.size(); ++i)
    if (na[i].first != nb[i].first || *na[i].second != *nb[i].second) return false;
  return true;
}

}  // namespace

TEST_CASE("batching", "[train]") {
  const auto batches = make_batches(100, 32, 5);
  REQUIRE(batches.size() == 3);
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    CHECK(b.size() == 32);
    seen.insert(b.begin(), b.end());
  }
  CHECK(seen.size() == 96);
  CHECK(*seen.rbegin() < 100);
  CHECK(batches == make_batches(100, 32, 5));
  CHECK(batches != make_batches(100, 32, 6));
  CHECK(make_batches(64, 64, 1).size() == 1);
  CHECK_THROWS_WITH(make_batches(10, 32, 1), ContainsSubstring("fewer than batch size"));
  CHECK_THROWS_AS(make_batches(10, 0, 1), ConfigError);
  CHECK(epoch_seed(1, 0) != epoch_seed(1, 1));
}

TEST_CASE("config validation and serialization", "[train]") {
  TrainConfig c = desk_preset();
  c.seed = 9;
  c.model.share_integrator = false;
  c.model.use_integrator = false;
  nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK_FALSE(back.model.share_integrator);
  CHECK_FALSE(back.model.use_integrator);

  const auto partial = nlohmann::json{{"lr", 0.01}}.get<TrainConfig>();
  CHECK(partial.lr == 0.01);
  CHECK(partial.batch_size == TrainConfig{}.batch_size);

  TrainConfig bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.lr = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.eval_every = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training steps", "[train]") {
  test::TempDir dir;
  const auto out = test::small_corpus(dir / "corpus");
  const auto corpus = load_corpus(out.train_manifest);
  std::vector<PhonemeSequence> ph;
  std::vector<MelSpectrogram> mel;
  for (std::size_t i = 0; i < 8; ++i) {
    ph.push_back(corpus.examples[i].phonemes);
    mel.push_back(corpus.examples[i].mel);
  }

  SECTION("first loss is near ln B") {
    auto st = init_train_state(tiny_train(dir / "ck"), corpus.vocab);
    const double loss = train_step(st, ph, mel);
    CHECK(std::abs(loss - std::log(8.0)) < 0.5);
    CHECK(st.step == 1);
    CHECK(state_is_finite(st));
  }

  SECTION("steps are deterministic") {
    auto a = init_train_state(tiny_train(dir / "ck"), corpus.vocab);
    auto b = init_train_state(tiny_train(dir / "ck"), corpus.vocab);
    for (int i = 0; i < 3; ++i) CHECK(train_step(a, ph, mel) == train_step(b, ph, mel));
    CHECK(same_params(a.model.params, b.model.params));
    CHECK(same_params(a.adam_v, b.adam_v));
  }

  SECTION("overfits a fixed batch") {
    auto cfg = tiny_train(dir / "ck");
    cfg.model.dropout = 0.0;
    cfg.lr = 3e-3;
    auto st = init_train_state(cfg, corpus.vocab);
    double loss = 0.0;
    for (int i = 0; i < 200; ++i) loss = train_step(st, ph, mel);
    CHECK(loss < 0.05);
  }

  SECTION("sharing survives updates") {
    auto st = init_train_state(tiny_train(dir / "ck"), corpus.vocab);
    train_step(st, ph, mel);
    CHECK(st.model.params.heads.size() == 1);
    CHECK(&st.model.params.head(Modality::kPhonetic) == &st.model.params.head(Modality::kAcoustic));
  }

  SECTION("non-finite loss is reported") {
    auto st = init_train_state(tiny_train(dir / "ck"), corpus.vocab);
    st.model.params.phonetic.embedding(Vocabulary::kFirstPhoneme, 0) = std::numeric_limits<float>::quiet_NaN();
    for (auto& p : ph) p.ids.assign(p.ids.size(), Vocabulary::kFirstPhoneme);
    CHECK_THROWS_WITH(train_step(st, ph, mel), ContainsSubstring("non-finite loss at step 0"));
  }

  SECTION("gradient clipping and weight decay stay finite") {
    auto cfg = tiny_train(dir / "ck");
    cfg.grad_clip = 0.1;
    cfg.weight_decay = 0.01;
    auto st = init_train_state(cfg, corpus.vocab);
    for (int i = 0; i < 5; ++i) train_step(st, ph, mel);
    CHECK(state_is_finite(st));
  }
}

TEST_CASE("fit loop", "[train]") {
  test::TempDir dir;
  const auto out = test::small_corpus(dir / "corpus");
  auto cfg = tiny_train(dir / "run");
  cfg.train_manifest = out.train_manifest;
  cfg.dev_manifest = out.dev_manifest;

  SECTION("eval cadence") {
    cfg.max_steps = 100;
    cfg.eval_every = 25;
    const auto res = fit(cfg);
    REQUIRE(res.log.size() == 100);
    int evals = 0;
    for (const auto& r : res.log) {
      CHECK(r.step >= 1);
      if (r.dev_auc) {
        ++evals;
        CHECK(r.step % 25 == 0);
        CHECK(r.dev_eer.has_value());
      }
    }
    CHECK(evals == 4);
    for (int s : {25, 50, 75, 100})
      CHECK(std::filesystem::exists(dir / ("run/" + step_checkpoint_name(s))));
    CHECK(std::filesystem::exists(res.final_checkpoint));

    std::ifstream log(dir / "run/metrics.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.at("step").get<int>() == ++lines);
    }
    CHECK(lines == 100);
  }

  SECTION("resume reproduces an uninterrupted run") {
    cfg.max_steps = 24;
    cfg.eval_every = 12;
    auto full = fit(cfg);

    auto half = cfg;
    half.max_steps = 12;
    half.checkpoint_dir = dir / "half";
    fit(half);
    auto rest = cfg;
    rest.checkpoint_dir = dir / "half";
    FitOptions opts;
    opts.resume_from = dir / "half/final.sckp";
    auto resumed = fit(rest, opts);

    REQUIRE(resumed.log.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(resumed.log[i].step == full.log[12 + i].step);
      CHECK_THAT(resumed.log[i].loss, WithinAbs(full.log[12 + i].loss, 1e-6));
    }
    auto fp = full.state.model.params.named();
    auto rp = resumed.state.model.params.named();
    double worst = 0.0;
    for (std::size_t i = 0; i < fp.size(); ++i)
      worst = std::max(worst, static_cast<double>((*fp[i].second - *rp[i].second).cwiseAbs().maxCoeff()));
    CHECK(worst <= 1e-6);
    std::ifstream log(dir / "half/metrics.jsonl");
    CHECK(std::count(std::istreambuf_iterator<char>(log), {}, '\n') == 24);
  }

  SECTION("identical seeds give byte-identical checkpoints") {
    cfg.max_steps = 10;
    const auto a = fit(cfg);
    cfg.checkpoint_dir = dir / "run2";
    const auto b = fit(cfg);
    const bool same_checkpoint = detail::slurp(a.final_checkpoint) == detail::slurp(b.final_checkpoint);
    const bool same_log = detail::slurp(dir / "run/metrics.jsonl") == detail::slurp(dir / "run2/metrics.jsonl");
    CHECK(same_checkpoint);
    CHECK(same_log);
  }

  SECTION("missing checkpoint dir and small corpus are rejected") {
    cfg.checkpoint_dir.clear();
    CHECK_THROWS_AS(fit(cfg), ConfigError);
    cfg.checkpoint_dir = dir / "run";
    cfg.batch_size = 1000;
    CHECK_THROWS_WITH(fit(cfg), ContainsSubstring("fewer than batch size"));
  }
}

TEST_CASE("checkpoints", "[train]") {
  test::TempDir dir;
  const auto out = test::small_corpus(dir / "corpus");
  const auto corpus = load_corpus(out.train_manifest);
  auto cfg = tiny_train(dir / "ck");
  cfg.model.share_integrator = false;
  cfg.model.use_integrator = false;
  cfg.model.normalize_embeddings = true;
  auto st = init_train_state(cfg, corpus.vocab);
  std::vector<PhonemeSequence> ph;
  std::vector<MelSpectrogram> mel;
  for (std::size_t i = 0; i < 8; ++i) {
    ph.push_back(corpus.examples[i].phonemes);
    mel.push_back(corpus.examples[i].mel);
  }
  train_step(st, ph, mel);
  train_step(st, ph, mel);
  const std::string path = dir / "a.sckp";
  save_checkpoint(st, path);

  auto back = load_checkpoint(path);
  CHECK(back.step == 2);
  CHECK(back.rng.state() == st.rng.state());
  CHECK(back.config.checkpoint_dir.empty());
  auto expected = st.config;
  expected.checkpoint_dir.clear();
  CHECK(nlohmann::json(back.config) == nlohmann::json(expected));
  CHECK_FALSE(back.model.config.share_integrator);
  CHECK_FALSE(back.model.config.use_integrator);
  CHECK(back.model.config.normalize_embeddings);
  CHECK(back.model.vocab == st.model.vocab);
  CHECK(same_params(back.model.params, st.model.params));
  CHECK(same_params(back.adam_m, st.adam_m));
  CHECK(same_params(back.adam_v, st.adam_v));
  CHECK(encode_phonemes(ph, back.model.params, back.model.config).rows ==
        encode_phonemes(ph, st.model.params, st.model.config).rows);
  auto model = load_model(path);
  CHECK(encode_mel(mel, model.params, model.config).rows == encode_mel(mel, st.model.params, st.model.config).rows);
  CHECK(train_step(back, ph, mel) == train_step(st, ph, mel));

  SECTION("version mismatch names both versions") {
    auto bytes = detail::slurp(path);
    bytes[4] = static_cast<char>(kSckpVersion + 1);
    detail::spit(dir / "v.sckp", bytes);
    CHECK_THROWS_WITH(load_checkpoint(dir / "v.sckp"),
                      ContainsSubstring("version " + std::to_string(kSckpVersion + 1)) &&
                          ContainsSubstring("supported version " + std::to_string(kSckpVersion)));
  }

  SECTION("corrupt and truncated files") {
    auto bytes = detail::slurp(path);
    detail::spit(dir / "t.sckp", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(dir / "t.sckp"), FormatError);
    detail::spit(dir / "g.sckp", "garbage bytes here");
    CHECK_THROWS_AS(load_checkpoint(dir / "g.sckp"), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.sckp"), IoError);
  }

  SECTION("backbone exports are not checkpoints") {
    auto bm = extract_backbone(st.model, Modality::kAcoustic);
    save_backbone(bm, dir / "b.sckp");
    CHECK_THROWS_AS(load_checkpoint(dir / "b.sckp"), FormatError);
    CHECK_THROWS_AS(load_model(dir / "b.sckp"), FormatError);
    auto loaded = load_backbone(dir / "b.sckp");
    CHECK(loaded.modality() == Modality::kAcoustic);
    CHECK(backbone_outputs(loaded, mel) == backbone_outputs(bm, mel));
    CHECK_THROWS_AS(backbone_outputs(loaded, ph), ConfigError);
  }
}
