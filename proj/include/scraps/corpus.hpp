#pragma once

#include <scraps/smel.hpp>
#include <scraps/standardize.hpp>
#include <scraps/vocab.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <string>
#include <vector>

namespace scraps {

namespace fs = std::filesystem;

struct ManifestEntry {
  std::string id;
  std::vector<std::string> phonemes;
  std::string mel_path;  // as written: relative to the manifest directory
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::string stats_path;
  std::string base_dir;

  std::string resolve(const ManifestEntry& e) const {
    fs::path p(e.mel_path);
    return p.is_absolute() ? p.string() : (fs::path(base_dir) / p).string();
  }
};

inline CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest '" + path + "'");
  CorpusManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  m.stats_path = (fs::path(m.base_dir) / "stats.json").string();
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e{j.at("id").get<std::string>(), j.at("phonemes").get<std::vector<std::string>>(),
                      j.at("mel").get<std::string>()};
      if (!seen.insert(e.id).second) throw FormatError("duplicate utterance id '" + e.id + "'");
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return m;
}

inline void save_manifest(const CorpusManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  for (const auto& e : m.entries) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["phonemes"] = e.phonemes;
    j["mel"] = e.mel_path;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

// A loaded, standardized utterance pair.
struct Example {
  std::string id;
  PhonemeSequence phonemes;
  MelSpectrogram mel;
};

inline std::vector<Example> load_examples(const CorpusManifest& manifest, const Vocabulary& vocab,
                                          const StandardizeStats& stats) {
  std::vector<Example> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    Example ex;
    ex.id = e.id;
    try {
      ex.phonemes.ids = to_ids(e.phonemes, vocab);
    } catch (const ConfigError& err) {
      throw ConfigError("utterance '" + e.id + "': " + err.what());
    }
    if (ex.phonemes.ids.empty()) throw FormatError("utterance '" + e.id + "' has no phonemes");
    ex.mel = standardize(read_smel(manifest.resolve(e)), stats);
    out.push_back(std::move(ex));
  }
  return out;
}

// Loads <dir>/vocab.txt, <dir>/stats.json and the manifest itself.
struct Corpus {
  Vocabulary vocab;
  StandardizeStats stats;
  std::vector<Example> examples;
};

inline Corpus load_corpus(const std::string& manifest_path, const Vocabulary* vocab_override = nullptr) {
  const auto manifest = load_manifest(manifest_path);
  Corpus c;
  c.vocab = vocab_override ? *vocab_override
                           : load_vocab((fs::path(manifest.base_dir) / "vocab.txt").string());
  c.stats = load_stats(manifest.stats_path);
  c.examples = load_examples(manifest, c.vocab, c.stats);
  return c;
}

// ---------------------------------------------------------------------------
// Synthetic corpus. Each phoneme owns a smoothed random spectral template;
// an utterance concatenates templates with random durations, i.i.d. frame
// noise and a per-utterance additive speaker bias.

struct SynthConfig {
  int vocab_size = 40;  // phoneme symbols, excluding reserved IDs
  int n_utterances = 2000;
  int n_dev = 0;        // extra held-out utterances written to dev.jsonl
  int seq_len_min = 5;
  int seq_len_max = 12;
  int frames_per_phoneme_min = 2;
  int frames_per_phoneme_max = 4;
  double noise_sigma = 0.3;
  double speaker_bias_sigma = 0.2;
  std::uint64_t seed = 1;
  int n_mels = 80;
  int smoothing_width = 5;

  void validate() const {
    if (vocab_size < 2) throw ConfigError("synth: vocab_size must be >= 2");
    if (n_utterances < 1) throw ConfigError("synth: n_utterances must be >= 1");
    if (n_dev < 0) throw ConfigError("synth: n_dev must be >= 0");
    if (seq_len_min < 1 || seq_len_max < seq_len_min) throw ConfigError("synth: empty seq_len range");
    if (frames_per_phoneme_min < 1 || frames_per_phoneme_max < frames_per_phoneme_min)
      throw ConfigError("synth: empty frames_per_phoneme range");
    if (!(noise_sigma >= 0.0) || !(speaker_bias_sigma >= 0.0)) throw ConfigError("synth: sigmas must be >= 0");
    if (n_mels < 1 || smoothing_width < 1) throw ConfigError("synth: invalid n_mels/smoothing_width");
  }
};

inline nlohmann::ordered_json synth_config_to_json(const SynthConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"n_utterances", c.n_utterances},
          {"n_dev", c.n_dev},
          {"seq_len_range", {c.seq_len_min, c.seq_len_max}},
          {"frames_per_phoneme_range", {c.frames_per_phoneme_min, c.frames_per_phoneme_max}},
          {"noise_sigma", c.noise_sigma},
          {"speaker_bias_sigma", c.speaker_bias_sigma},
          {"seed", c.seed},
          {"n_mels", c.n_mels},
          {"smoothing_width", c.smoothing_width}};
}

// Partial objects are allowed; absent fields keep their current values.
inline void apply_synth_json(const nlohmann::json& j, SynthConfig& c) {
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("vocab_size", c.vocab_size);
    get("n_utterances", c.n_utterances);
    get("n_dev", c.n_dev);
    if (j.contains("seq_len_range")) {
      c.seq_len_min = j.at("seq_len_range").at(0).get<int>();
      c.seq_len_max = j.at("seq_len_range").at(1).get<int>();
    }
    if (j.contains("frames_per_phoneme_range")) {
      c.frames_per_phoneme_min = j.at("frames_per_phoneme_range").at(0).get<int>();
      c.frames_per_phoneme_max = j.at("frames_per_phoneme_range").at(1).get<int>();
    }
    get("noise_sigma", c.noise_sigma);
    get("speaker_bias_sigma", c.speaker_bias_sigma);
    get("seed", c.seed);
    get("n_mels", c.n_mels);
    get("smoothing_width", c.smoothing_width);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
}

class SynthLanguage {
 public:
  explicit SynthLanguage(const SynthConfig& cfg) : cfg_(cfg), vocab_(xsampa_vocab(cfg.vocab_size)) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 0));
    templates_.resize(cfg.vocab_size, cfg.n_mels);
    const int half = cfg.smoothing_width / 2;
    std::vector<double> raw(static_cast<std::size_t>(cfg.n_mels));
    for (int p = 0; p < cfg.vocab_size; ++p) {
      for (auto& v : raw) v = rng.normal();
      for (int j = 0; j < cfg.n_mels; ++j) {
        double acc = 0.0;
        int n = 0;
        for (int k = j - half; k <= j - half + cfg.smoothing_width - 1; ++k) {
          if (k < 0 || k >= cfg.n_mels) continue;
          acc += raw[k];
          ++n;
        }
        templates_(p, j) = acc / n;
      }
    }
  }

  const Vocabulary& vocab() const { return vocab_; }
  const MatD& templates() const { return templates_; }
  const SynthConfig& config() const { return cfg_; }

  // `symbols` are template indices in [0, vocab_size).
  MelSpectrogram render(const std::vector<int>& symbols, const std::vector<int>& durations, Rng& rng) const {
    if (symbols.size() != durations.size()) throw ConfigError("render: symbols/durations length mismatch");
    std::vector<double> bias(static_cast<std::size_t>(cfg_.n_mels));
    for (auto& b : bias) b = rng.normal() * cfg_.speaker_bias_sigma;
    int frames = 0;
    for (int d : durations) frames += d;
    MelSpectrogram mel;
    mel.data.resize(frames, cfg_.n_mels);
    int f = 0;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      for (int d = 0; d < durations[i]; ++d, ++f) {
        for (int j = 0; j < cfg_.n_mels; ++j)
          mel.data(f, j) = static_cast<float>(templates_(symbols[i], j) + bias[j] +
                                              rng.normal() * cfg_.noise_sigma);
      }
    }
    return mel;
  }

  struct Utterance {
    std::vector<int> symbols;
    std::vector<int> durations;
    MelSpectrogram mel;
  };

  Utterance sample(Rng& rng) const {
    Utterance u;
    const auto len = rng.range(cfg_.seq_len_min, cfg_.seq_len_max);
    for (std::int64_t i = 0; i < len; ++i) u.symbols.push_back(static_cast<int>(rng.below(cfg_.vocab_size)));
    for (std::int64_t i = 0; i < len; ++i)
      u.durations.push_back(static_cast<int>(rng.range(cfg_.frames_per_phoneme_min, cfg_.frames_per_phoneme_max)));
    u.mel = render(u.symbols, u.durations, rng);
    return u;
  }

 private:
  SynthConfig cfg_;
  Vocabulary vocab_;
  MatD templates_;
};

struct SynthOutput {
  std::string train_manifest;
  std::string dev_manifest;  // empty when n_dev == 0
  std::string stats_path;
  std::string vocab_path;
};

// Writes vocab.txt, train.jsonl, [dev.jsonl], stats.json, synth.json and
// mels/*.smel under out_dir. A pure function of the config.
inline SynthOutput synth_corpus(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "mels", ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());

  const SynthLanguage lang(cfg);
  Rng rng(derive_seed(cfg.seed, 1));
  CorpusManifest train, dev;
  std::vector<MelSpectrogram> train_mels;
  const int total = cfg.n_utterances + cfg.n_dev;
  for (int u = 0; u < total; ++u) {
    auto utt = lang.sample(rng);
    std::ostringstream name;
    name << "utt" << std::setw(6) << std::setfill('0') << u;
    const std::string rel = "mels/" + name.str() + ".smel";
    write_smel(utt.mel, (fs::path(out_dir) / rel).string());
    ManifestEntry e{name.str(), {}, rel};
    for (int s : utt.symbols) e.phonemes.push_back(lang.vocab().symbols()[static_cast<std::size_t>(s)]);
    if (u < cfg.n_utterances) {
      train.entries.push_back(std::move(e));
      train_mels.push_back(std::move(utt.mel));
    } else {
      dev.entries.push_back(std::move(e));
    }
  }

  SynthOutput out;
  out.vocab_path = (fs::path(out_dir) / "vocab.txt").string();
  out.stats_path = (fs::path(out_dir) / "stats.json").string();
  out.train_manifest = (fs::path(out_dir) / "train.jsonl").string();
  save_vocab(lang.vocab(), out.vocab_path);
  save_stats(fit_stats(train_mels), out.stats_path);
  save_manifest(train, out.train_manifest);
  if (cfg.n_dev > 0) {
    out.dev_manifest = (fs::path(out_dir) / "dev.jsonl").string();
    save_manifest(dev, out.dev_manifest);
  }
  std::ofstream meta(fs::path(out_dir) / "synth.json", std::ios::binary);
  meta << synth_config_to_json(cfg).dump(2) << '\n';
  if (!meta) throw IoError("failed writing synth.json in '" + out_dir + "'");
  return out;
}

}  // namespace scraps
