#pragma once

#include <scraps/scraps.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace scraps::cli {

// Invalid flag combinations detected after parsing; reported like parse errors.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

template <typename T>
struct Flag {
  T value{};
  CLI::Option* opt = nullptr;

  bool set() const { return opt != nullptr && opt->count() > 0; }
  void apply(T& dst) const {
    if (set()) dst = value;
  }
};

template <typename T>
Flag<T>& add(CLI::App* app, Flag<T>& f, const std::string& name, const std::string& help) {
  f.opt = app->add_option(name, f.value, help);
  return f;
}

inline std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if (item == "inf" || item == "+inf") {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(what + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

inline nlohmann::json read_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(detail::slurp(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

inline void write_text(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-")
    out << text;
  else
    detail::spit(path, text);
}

// First n entries of a manifest (all when n <= 0), standardized with the
// statistics stored beside it.
inline std::vector<Example> load_sample(const Model& model, const std::string& manifest_path, int n) {
  auto manifest = load_manifest(manifest_path);
  if (n > 0 && static_cast<std::size_t>(n) < manifest.entries.size()) manifest.entries.resize(static_cast<std::size_t>(n));
  return load_examples(manifest, model.vocab, load_stats(manifest.stats_path));
}

// A .wav is featurized, anything else read as SMEL; both are then standardized.
inline MelSpectrogram load_input_mel(const std::string& path, const StandardizeStats& stats) {
  const bool wav = path.size() >= 4 && path.compare(path.size() - 4, 4, ".wav") == 0;
  MelSpectrogram mel;
  if (wav) {
    const auto audio = read_wav(path);
    mel = featurize(audio.samples, audio.sample_rate);
  } else {
    mel = read_smel(path);
  }
  return standardize(mel, stats);
}

struct SweepFlags {
  std::string checkpoint, manifest, amounts = "0.05,0.1,0.2,0.4,0.6,0.8,0.95", format = "json", out;
  std::vector<std::string> methods;
  std::uint64_t seed = 0;
  int n = 0;
};

inline void add_sweep_flags(CLI::App* sub, SweepFlags& f) {
  sub->add_option("--checkpoint", f.checkpoint, "Model checkpoint (.sckp)")->required();
  sub->add_option("--manifest", f.manifest, "Evaluation manifest (JSONL); stats.json is read beside it")->required();
  sub->add_option("--method", f.methods, "Corruption method(s): substitute, gaussian, mix")
      ->required()
      ->delimiter(',')
      ->check(CLI::IsMember({"substitute", "gaussian", "mix"}));
  sub->add_option("--amounts", f.amounts, "Comma-separated corruption amounts in [0, 1]")->capture_default_str();
  sub->add_option("--seed", f.seed, "Corruption seed")->required();
  sub->add_option("--n", f.n, "Use the first N pairs (0 = all)")->capture_default_str();
  sub->add_option("--format", f.format, "Report format")
      ->check(CLI::IsMember({"json", "csv", "tsv-plot"}))
      ->capture_default_str();
  sub->add_option("--out", f.out, "Report path (default: stdout)");
}

inline void add_metadata(EvalReport& report, const SweepFlags& f, std::size_t n) {
  report.metadata["checkpoint"] = f.checkpoint;
  report.metadata["dataset"] = f.manifest;
  report.metadata["seed"] = f.seed;
  report.metadata["n"] = n;
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual phonetic/acoustic encoders with a symmetric contrastive loss, plus corruption-based evaluation.",
               "scraps"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  // synth-corpus
  auto* synth = app.add_subcommand("synth-corpus", "Generate a seeded synthetic corpus");
  std::string synth_out, synth_config;
  std::uint64_t synth_seed = 0;
  Flag<int> s_vocab, s_n, s_dev, s_len_min, s_len_max, s_fpp_min, s_fpp_max;
  Flag<double> s_noise, s_bias;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Generator seed")->required();
  synth->add_option("--config", synth_config, "JSON config (defaults < file < flags)");
  add(synth, s_vocab, "--vocab-size", "Number of phoneme symbols");
  add(synth, s_n, "--n-utterances", "Training utterances");
  add(synth, s_dev, "--n-dev", "Held-out utterances");
  add(synth, s_len_min, "--seq-len-min", "Minimum phonemes per utterance");
  add(synth, s_len_max, "--seq-len-max", "Maximum phonemes per utterance");
  add(synth, s_fpp_min, "--frames-min", "Minimum frames per phoneme");
  add(synth, s_fpp_max, "--frames-max", "Maximum frames per phoneme");
  add(synth, s_noise, "--noise-sigma", "Per-frame noise std");
  add(synth, s_bias, "--speaker-bias-sigma", "Per-utterance bias std");

  // featurize
  auto* feat = app.add_subcommand("featurize", "Convert a 16 kHz PCM16 mono WAV into a log-mel SMEL file");
  std::string feat_in, feat_out, feat_stats;
  feat->add_option("--input", feat_in, "Input .wav")->required();
  feat->add_option("--output", feat_out, "Output .smel")->required();
  feat->add_option("--stats", feat_stats, "Standardize with these statistics before writing");

  // train
  auto* train = app.add_subcommand("train", "Train the dual encoders");
  std::string t_config, t_preset = "desk", t_resume;
  std::uint64_t t_seed = 0;
  bool t_quiet = false;
  Flag<std::string> t_train, t_dev, t_out;
  Flag<int> t_steps, t_eval, t_batch, t_dev_n, t_layers, t_heads, t_dmodel, t_dembed;
  Flag<double> t_lr, t_clip, t_wd, t_dropout, t_temp;
  Flag<bool> t_share, t_integrator, t_normalize;
  train->add_option("--config", t_config, "JSON training config (defaults < file < flags)");
  train->add_option("--preset", t_preset, "Base configuration")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  train->add_option("--seed", t_seed, "Seed for initialization, batching and dropout")->required();
  train->add_option("--resume", t_resume, "Continue from this checkpoint");
  train->add_flag("--quiet", t_quiet, "No progress on stderr");
  add(train, t_train, "--train", "Training manifest");
  add(train, t_dev, "--dev", "Dev manifest");
  add(train, t_out, "--out", "Checkpoint directory");
  add(train, t_steps, "--max-steps", "Total optimizer steps");
  add(train, t_eval, "--eval-every", "Dev evaluation / checkpoint interval");
  add(train, t_batch, "--batch-size", "Pairs per batch");
  add(train, t_dev_n, "--dev-eval-size", "Dev pairs used for evaluation");
  add(train, t_lr, "--lr", "Adam learning rate");
  add(train, t_clip, "--grad-clip", "Global gradient-norm clip (0 = off)");
  add(train, t_wd, "--weight-decay", "L2 penalty (0 = off)");
  add(train, t_layers, "--layers", "Transformer layers per encoder");
  add(train, t_heads, "--heads", "Attention heads");
  add(train, t_dmodel, "--d-model", "Transformer width");
  add(train, t_dembed, "--d-embed", "Embedding size");
  add(train, t_dropout, "--dropout", "Dropout rate");
  add(train, t_temp, "--temperature", "Softmax temperature");
  add(train, t_share, "--share-integrator", "Share the integrator between encoders (true/false)");
  add(train, t_integrator, "--use-integrator", "Use the LSTM integrator (true/false)");
  add(train, t_normalize, "--normalize-embeddings", "L2-normalize embeddings (true/false)");

  // eval-sensitivity / eval-robustness
  auto* sens = app.add_subcommand("eval-sensitivity", "Drop/lift of matched-pair scores under corruption");
  SweepFlags sens_flags;
  add_sweep_flags(sens, sens_flags);
  auto* rob = app.add_subcommand("eval-robustness", "Pooled AUC-ROC and EER under corruption");
  SweepFlags rob_flags;
  std::size_t rob_chunk = 128;
  std::string rob_score = "probability";
  add_sweep_flags(rob, rob_flags);
  rob->add_option("--chunk", rob_chunk, "Pairs per score matrix")->capture_default_str();
  rob->add_option("--score", rob_score, "Score fed to AUC/EER")
      ->check(CLI::IsMember({"probability", "raw"}))
      ->capture_default_str();

  // retrieve
  auto* ret = app.add_subcommand("retrieve", "Rank candidate spectrograms for a phoneme query");
  std::string r_ckpt, r_cands, r_phonemes, r_text, r_lexicon;
  std::size_t r_k = 5;
  bool r_lenient = false;
  ret->add_option("--checkpoint", r_ckpt, "Model checkpoint")->required();
  ret->add_option("--candidates", r_cands, "Manifest of candidate spectrograms")->required();
  auto* r_ph_opt = ret->add_option("--phonemes", r_phonemes, "Space-separated phoneme symbols");
  auto* r_text_opt = ret->add_option("--text", r_text, "Text, phonemized with --lexicon");
  r_ph_opt->excludes(r_text_opt);
  ret->add_option("--lexicon", r_lexicon, "Pronunciation lexicon (word ph1 ph2 ...)");
  ret->add_flag("--lenient", r_lenient, "Skip out-of-lexicon words instead of failing");
  ret->add_option("--k", r_k, "Number of hits")->capture_default_str();

  // score-pair
  auto* pair = app.add_subcommand("score-pair", "Score two recordings against each other, no text needed");
  std::string p_ckpt, p_a, p_b, p_stats;
  pair->add_option("--checkpoint", p_ckpt, "Model checkpoint")->required();
  pair->add_option("--a", p_a, "First recording (.wav or .smel)")->required();
  pair->add_option("--b", p_b, "Second recording (.wav or .smel)")->required();
  pair->add_option("--stats", p_stats, "Standardization statistics of the training corpus")->required();

  // length-profile
  auto* prof = app.add_subcommand("length-profile", "Matched-pair score distribution by phoneme length");
  std::string l_ckpt, l_manifest, l_edges = "0,5,10,15,20,inf", l_out;
  int l_n = 0;
  prof->add_option("--checkpoint", l_ckpt, "Model checkpoint")->required();
  prof->add_option("--manifest", l_manifest, "Evaluation manifest")->required();
  prof->add_option("--edges", l_edges, "Bucket edges, comma-separated, 'inf' allowed")->capture_default_str();
  prof->add_option("--n", l_n, "Use the first N pairs (0 = all)")->capture_default_str();
  prof->add_option("--out", l_out, "Output path (default: stdout)");

  // export-backbone
  auto* exp = app.add_subcommand("export-backbone", "Write one transformer backbone without its integrator");
  std::string e_ckpt, e_which, e_out;
  exp->add_option("--checkpoint", e_ckpt, "Model checkpoint")->required();
  exp->add_option("--component", e_which, "phonetic or acoustic")->required();
  exp->add_option("--out", e_out, "Output .sckp")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      SynthConfig cfg = desk_synth_preset();
      if (!synth_config.empty()) apply_synth_json(read_json_file(synth_config), cfg);
      s_vocab.apply(cfg.vocab_size);
      s_n.apply(cfg.n_utterances);
      s_dev.apply(cfg.n_dev);
      s_len_min.apply(cfg.seq_len_min);
      s_len_max.apply(cfg.seq_len_max);
      s_fpp_min.apply(cfg.frames_per_phoneme_min);
      s_fpp_max.apply(cfg.frames_per_phoneme_max);
      s_noise.apply(cfg.noise_sigma);
      s_bias.apply(cfg.speaker_bias_sigma);
      cfg.seed = synth_seed;
      const auto res = synth_corpus(cfg, synth_out);
      out << res.train_manifest << '\n';
      if (!res.dev_manifest.empty()) out << res.dev_manifest << '\n';
      out << res.stats_path << '\n' << res.vocab_path << '\n';
    } else if (feat->parsed()) {
      const auto audio = read_wav(feat_in);
      auto mel = featurize(audio.samples, audio.sample_rate);
      if (!feat_stats.empty()) mel = standardize(mel, load_stats(feat_stats));
      write_smel(mel, feat_out);
      out << feat_out << '\n';
    } else if (train->parsed()) {
      TrainConfig cfg = t_preset == "full" ? TrainConfig{} : desk_preset();
      if (!t_config.empty()) {
        try {
          from_json(read_json_file(t_config), cfg);
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError("'" + t_config + "': " + e.what());
        }
      }
      t_train.apply(cfg.train_manifest);
      t_dev.apply(cfg.dev_manifest);
      t_out.apply(cfg.checkpoint_dir);
      t_steps.apply(cfg.max_steps);
      t_eval.apply(cfg.eval_every);
      t_batch.apply(cfg.batch_size);
      t_dev_n.apply(cfg.dev_eval_size);
      t_lr.apply(cfg.lr);
      t_clip.apply(cfg.grad_clip);
      t_wd.apply(cfg.weight_decay);
      t_layers.apply(cfg.model.n_layers);
      t_heads.apply(cfg.model.n_heads);
      t_dmodel.apply(cfg.model.d_model);
      t_dembed.apply(cfg.model.d_embed);
      t_dropout.apply(cfg.model.dropout);
      t_temp.apply(cfg.model.temperature);
      t_share.apply(cfg.model.share_integrator);
      t_integrator.apply(cfg.model.use_integrator);
      t_normalize.apply(cfg.model.normalize_embeddings);
      cfg.seed = t_seed;
      if (cfg.train_manifest.empty()) throw UsageError("train: --train (or train_manifest in --config) is required");
      if (cfg.checkpoint_dir.empty()) throw UsageError("train: --out (or checkpoint_dir in --config) is required");
      FitOptions opts;
      opts.verbose = !t_quiet;
      if (!t_resume.empty()) opts.resume_from = t_resume;
      const auto res = fit(cfg, opts);
      out << res.final_checkpoint << '\n';
    } else if (sens->parsed() || rob->parsed()) {
      const bool is_sens = sens->parsed();
      const SweepFlags& f = is_sens ? sens_flags : rob_flags;
      const auto amounts = parse_numbers(f.amounts, "--amounts");
      const Model model = load_model(f.checkpoint);
      const auto sample = load_sample(model, f.manifest, f.n);
      EvalReport report;
      for (const auto& m : f.methods) {
        const auto method = parse_method(m);
        const auto part = is_sens ? sensitivity_sweep(model, sample, method, amounts, f.seed)
                                  : robustness_sweep(model, sample, method, amounts, f.seed, rob_chunk,
                                                     rob_score == "raw" ? ScoreKind::kRaw : ScoreKind::kProbability);
        report = merge_reports(report, part);
      }
      add_metadata(report, f, sample.size());
      write_text(format_report(report, parse_report_format(f.format)), f.out, out);
    } else if (ret->parsed()) {
      const Model model = load_model(r_ckpt);
      PhonemeSequence query;
      if (!r_phonemes.empty()) {
        std::vector<std::string> symbols;
        std::istringstream ss(r_phonemes);
        for (std::string s; ss >> s;) symbols.push_back(s);
        query.ids = to_ids(symbols, model.vocab);
      } else if (!r_text.empty()) {
        if (r_lexicon.empty()) throw UsageError("retrieve: --text requires --lexicon");
        std::vector<std::string> skipped;
        query = phonemize(r_text, load_lexicon(r_lexicon), model.vocab,
                          r_lenient ? OovPolicy::kLenient : OovPolicy::kStrict, &skipped);
        for (const auto& w : skipped) err << "warning: skipped out-of-lexicon word '" << w << "'\n";
      } else {
        throw UsageError("retrieve: one of --phonemes or --text is required");
      }
      const auto manifest = load_manifest(r_cands);
      const auto cands = load_examples(manifest, model.vocab, load_stats(manifest.stats_path));
      const auto hits = retrieve_topk(query, mels_of(cands), model, r_k);
      nlohmann::ordered_json j;
      j["query"] = to_symbols(query.ids, model.vocab);
      j["hits"] = nlohmann::ordered_json::array();
      for (std::size_t r = 0; r < hits.size(); ++r)
        j["hits"].push_back({{"rank", r + 1},
                             {"index", hits[r].index},
                             {"id", cands[hits[r].index].id},
                             {"probability", hits[r].probability},
                             {"score", hits[r].score}});
      out << j.dump(2) << '\n';
    } else if (pair->parsed()) {
      const Model model = load_model(p_ckpt);
      const auto stats = load_stats(p_stats);
      const double s = score_audio_pair(load_input_mel(p_a, stats), load_input_mel(p_b, stats), model);
      out << detail::fmt_num(s) << '\n';
    } else if (prof->parsed()) {
      const auto edges = parse_numbers(l_edges, "--edges");
      const Model model = load_model(l_ckpt);
      const auto buckets = length_profile(model, load_sample(model, l_manifest, l_n), edges);
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (const auto& b : buckets) {
        nlohmann::ordered_json row;
        row["lo"] = b.lo;
        row["hi"] = std::isinf(b.hi) ? nlohmann::ordered_json("inf") : nlohmann::ordered_json(b.hi);
        row["count"] = b.count;
        row["mean"] = b.mean;
        row["min"] = b.min;
        row["q1"] = b.q1;
        row["median"] = b.median;
        row["q3"] = b.q3;
        row["max"] = b.max;
        j.push_back(row);
      }
      write_text(j.dump(2) + "\n", l_out, out);
    } else if (exp->parsed()) {
      export_backbone(e_ckpt, e_which, e_out);
      out << e_out << '\n';
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

inline int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace scraps::cli
