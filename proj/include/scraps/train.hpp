#pragma once

#include <scraps/checkpoint.hpp>
#include <scraps/contrastive.hpp>
#include <scraps/corpus.hpp>
#include <scraps/evaluation.hpp>

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace scraps {

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  ModelConfig model;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;     // global-norm clipping; 0 disables
  double weight_decay = 0.0;  // L2 added to the gradient; 0 disables
  int batch_size = 32;
  int max_steps = 5000;
  int eval_every = 500;
  int dev_eval_size = 256;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;
  std::string train_manifest;
  std::string dev_manifest;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (the loss needs negatives)");
    if (max_steps < 1) throw ConfigError("train: max_steps must be >= 1");
    if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: betas must be in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("train: eps must be > 0");
    if (grad_clip < 0.0 || weight_decay < 0.0) throw ConfigError("train: grad_clip/weight_decay must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"model", c.model},
                     {"lr", c.lr},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"eps", c.eps},
                     {"grad_clip", c.grad_clip},
                     {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size},
                     {"max_steps", c.max_steps},
                     {"eval_every", c.eval_every},
                     {"dev_eval_size", c.dev_eval_size},
                     {"seed", c.seed},
                     {"checkpoint_dir", c.checkpoint_dir},
                     {"train_manifest", c.train_manifest},
                     {"dev_manifest", c.dev_manifest}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("model", c.model);
  get("lr", c.lr);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("eps", c.eps);
  get("grad_clip", c.grad_clip);
  get("weight_decay", c.weight_decay);
  get("batch_size", c.batch_size);
  get("max_steps", c.max_steps);
  get("eval_every", c.eval_every);
  get("dev_eval_size", c.dev_eval_size);
  get("seed", c.seed);
  get("checkpoint_dir", c.checkpoint_dir);
  get("train_manifest", c.train_manifest);
  get("dev_manifest", c.dev_manifest);
}

// Small desk-scale model used for the synthetic-corpus experiments.
inline TrainConfig desk_preset() {
  TrainConfig c;
  c.model.n_layers = 2;
  c.model.n_heads = 4;
  c.model.d_model = 64;
  c.model.d_embed = 128;
  c.model.dropout = 0.1;
  c.model.max_phonemes = 64;
  c.model.max_frames = 512;
  c.batch_size = 32;
  c.max_steps = 5000;
  c.eval_every = 500;
  return c;
}

inline SynthConfig desk_synth_preset() {
  SynthConfig s;
  s.vocab_size = 40;
  s.n_utterances = 2000;
  s.n_dev = 256;
  return s;
}

// ---------------------------------------------------------------------------

struct TrainState {
  TrainConfig config;
  Model model;
  EncoderParams<float> adam_m;
  EncoderParams<float> adam_v;
  std::int64_t step = 0;
  Rng rng;  // dropout stream
};

inline TrainState init_train_state(const TrainConfig& cfg, const Vocabulary& vocab) {
  cfg.validate();
  TrainState st;
  st.config = cfg;
  st.model = Model::init(cfg.model, vocab, derive_seed(cfg.seed, 7));
  st.config.model = st.model.config;
  st.adam_m = st.model.params.zeros_like();
  st.adam_v = st.model.params.zeros_like();
  st.rng = Rng(derive_seed(cfg.seed, 8));
  return st;
}

// Seeded permutation of [0, n) cut into full batches; the remainder is dropped.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, std::uint64_t epoch_seed) {
  if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");
  if (n < static_cast<std::size_t>(batch_size))
    throw ConfigError("make_batches: " + std::to_string(n) + " entries is fewer than batch size " +
                      std::to_string(batch_size));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(epoch_seed);
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i + static_cast<std::size_t>(batch_size) <= n; i += static_cast<std::size_t>(batch_size))
    batches.emplace_back(order.begin() + i, order.begin() + i + batch_size);
  return batches;
}

inline std::uint64_t epoch_seed(std::uint64_t seed, std::int64_t epoch) {
  return derive_seed(seed, 1000 + static_cast<std::uint64_t>(epoch));
}

// Loss of one paired batch plus gradients accumulated into `grad`.
// `rng` non-null enables dropout.
template <typename S>
S loss_and_gradients(const EncoderParams<S>& params, const ModelConfig& cfg, const std::vector<PhonemeSequence>& phonemes,
                     const std::vector<MelSpectrogram>& mels, Rng* rng, EncoderParams<S>& grad) {
  if (phonemes.size() != mels.size()) throw ConfigError("batch has mismatched phoneme/mel counts");
  EncoderCache<S> cp, ca;
  const Mat<S> t = forward_phonemes(phonemes, params, cfg, rng, cp);
  const Mat<S> a = forward_mels(mels, params, cfg, rng, ca);
  if (!t.allFinite() || !a.allFinite()) return std::numeric_limits<S>::quiet_NaN();
  const auto res = contrastive_loss_with_grad(score_matrix<S>(t, a, cfg.temperature));
  if (!std::isfinite(static_cast<double>(res.loss))) return res.loss;
  backward_encoder<S>(Modality::kPhonetic, res.grad * a, params, cfg, cp, grad);
  backward_encoder<S>(Modality::kAcoustic, res.grad.transpose() * t, params, cfg, ca, grad);
  return res.loss;
}

inline void adam_update(TrainState& st, EncoderParams<float>& grad) {
  const auto& cfg = st.config;
  auto params = st.model.params.named();
  auto grads = grad.named();
  auto ms = st.adam_m.named();
  auto vs = st.adam_v.named();
  if (cfg.weight_decay > 0.0)
    for (std::size_t i = 0; i < params.size(); ++i) *grads[i].second += static_cast<float>(cfg.weight_decay) * *params[i].second;
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (auto& [name, g] : grads) sq += static_cast<double>(g->squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip)
      for (auto& [name, g] : grads) *g *= static_cast<float>(cfg.grad_clip / norm);
  }
  const double t = static_cast<double>(st.step + 1);
  const auto b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  const auto c1 = static_cast<float>(1.0 - std::pow(cfg.beta1, t));
  const auto c2 = static_cast<float>(1.0 - std::pow(cfg.beta2, t));
  const auto lr = static_cast<float>(cfg.lr), eps = static_cast<float>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].second;
    const auto& g = *grads[i].second;
    auto& m = *ms[i].second;
    auto& v = *vs[i].second;
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

// One optimizer step on a paired batch; returns the pre-update loss.
inline double train_step(TrainState& st, const std::vector<PhonemeSequence>& phonemes,
                         const std::vector<MelSpectrogram>& mels) {
  auto grad = st.model.params.zeros_like();
  const float loss = loss_and_gradients<float>(st.model.params, st.model.config, phonemes, mels, &st.rng, grad);
  if (!std::isfinite(loss)) {
    double norm = 0.0;
    for (auto& [name, p] : st.model.params.named()) norm += static_cast<double>(p->squaredNorm());
    throw TrainingError("non-finite loss at step " + std::to_string(st.step) + " (loss=" + std::to_string(loss) +
                        ", parameter norm=" + std::to_string(std::sqrt(norm)) + ", batch=" +
                        std::to_string(phonemes.size()) + ")");
  }
  adam_update(st, grad);
  ++st.step;
  return loss;
}

inline bool state_is_finite(TrainState& st) {
  for (auto* set : {&st.model.params, &st.adam_m, &st.adam_v})
    for (auto& [name, p] : set->named())
      if (!p->allFinite()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json model_header(const Model& model) {
  return {{"model", model.config}, {"vocab", model.vocab.symbols()}};
}

inline void save_checkpoint(TrainState& st, const std::string& path) {
  SckpFile file;
  file.header = model_header(st.model);
  file.header["kind"] = "checkpoint";
  file.header["train_config"] = st.config;
  file.header["train_config"].erase("checkpoint_dir");  // output location is not recorded
  file.header["step"] = st.step;
  file.header["rng"] = st.rng.state();
  for (auto& [name, m] : st.model.params.named()) file.blobs.push_back(to_blob(name, *m));
  for (auto& [name, m] : st.adam_m.named()) file.blobs.push_back(to_blob("adam.m." + name, *m));
  for (auto& [name, m] : st.adam_v.named()) file.blobs.push_back(to_blob("adam.v." + name, *m));
  write_sckp(file, path);
}

namespace detail {

inline void fill_params(const SckpFile& file, EncoderParams<float>& params, const std::string& prefix,
                        const std::string& origin) {
  for (auto& [name, m] : params.named()) {
    const auto* blob = file.find(prefix + name);
    if (!blob) throw FormatError("'" + origin + "': missing tensor '" + prefix + name + "'");
    from_blob(*blob, *m);
  }
}

inline Model model_from_header(const SckpFile& file, const std::string& origin) {
  try {
    Model model;
    model.config = file.header.at("model").get<ModelConfig>();
    model.vocab = Vocabulary(file.header.at("vocab").get<std::vector<std::string>>());
    if (model.vocab.size() != model.config.vocab_size)
      throw FormatError("'" + origin + "': vocabulary size does not match model config");
    model.params = EncoderParams<float>::init(model.config, 0);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + origin + "': bad checkpoint header: " + e.what());
  }
}

}  // namespace detail

inline TrainState load_checkpoint(const std::string& path) {
  const auto file = read_sckp(path);
  if (file.header.value("kind", "") != "checkpoint") throw FormatError("'" + path + "' is not a training checkpoint");
  TrainState st;
  st.model = detail::model_from_header(file, path);
  try {
    st.config = file.header.at("train_config").get<TrainConfig>();
    st.step = file.header.at("step").get<std::int64_t>();
    st.rng.set_state(file.header.at("rng").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "': bad checkpoint header: " + e.what());
  }
  st.config.model = st.model.config;
  detail::fill_params(file, st.model.params, "", path);
  st.adam_m = st.model.params.zeros_like();
  st.adam_v = st.model.params.zeros_like();
  detail::fill_params(file, st.adam_m, "adam.m.", path);
  detail::fill_params(file, st.adam_v, "adam.v.", path);
  return st;
}

// Model only; accepts training checkpoints.
inline Model load_model(const std::string& path) {
  const auto file = read_sckp(path);
  if (file.header.value("kind", "") != "checkpoint") throw FormatError("'" + path + "' is not a model checkpoint");
  Model model = detail::model_from_header(file, path);
  detail::fill_params(file, model.params, "", path);
  return model;
}

// ---------------------------------------------------------------------------
// Training loop

struct LogRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  std::optional<double> dev_auc;
  std::optional<double> dev_eer;
};

inline nlohmann::ordered_json to_json(const LogRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["loss"] = r.loss;
  if (r.dev_auc) j["dev_auc"] = *r.dev_auc;
  if (r.dev_eer) j["dev_eer"] = *r.dev_eer;
  return j;
}

struct FitOptions {
  std::optional<std::string> resume_from;
  bool verbose = false;
  int progress_every = 100;
};

struct FitResult {
  TrainState state;
  std::vector<LogRecord> log;
  std::string final_checkpoint;
};

inline std::string step_checkpoint_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%08lld.sckp", static_cast<long long>(step));
  return buf;
}

// Dev signal: pooled robustness AUC/EER without corruption.
inline EvalRecord dev_evaluation(const Model& model, const std::vector<Example>& dev) {
  const MatF t = encode_all(model, phonemes_of(dev));
  const MatF a = encode_all(model, mels_of(dev));
  return robustness_record(t, a, std::min<std::size_t>(128, dev.size()), model.config.temperature,
                           ScoreKind::kProbability);
}

inline FitResult fit_on(TrainState st, const std::vector<Example>& train, const std::vector<Example>& dev,
                        const FitOptions& opts = {}) {
  const auto& cfg = st.config;
  namespace fs = std::filesystem;
  if (cfg.checkpoint_dir.empty()) throw ConfigError("train: checkpoint_dir is required");
  std::error_code ec;
  fs::create_directories(cfg.checkpoint_dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory '" + cfg.checkpoint_dir + "': " + ec.message());
  const auto log_path = (fs::path(cfg.checkpoint_dir) / "metrics.jsonl").string();
  std::ofstream log(log_path, opts.resume_from ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write metrics log '" + log_path + "'");
  if (train.size() < static_cast<std::size_t>(cfg.batch_size))
    throw ConfigError("train: " + std::to_string(train.size()) + " training pairs is fewer than batch size " +
                      std::to_string(cfg.batch_size));

  std::vector<Example> dev_sample(dev.begin(), dev.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(
                                                                  dev.size(), static_cast<std::size_t>(cfg.dev_eval_size))));
  FitResult result;
  std::int64_t cached_epoch = -1;
  std::vector<std::vector<std::size_t>> batches;
  const auto started = std::chrono::steady_clock::now();
  while (st.step < cfg.max_steps) {
    const auto per_epoch = static_cast<std::int64_t>(train.size() / static_cast<std::size_t>(cfg.batch_size));
    const std::int64_t epoch = st.step / per_epoch;
    if (epoch != cached_epoch) {
      batches = make_batches(train.size(), cfg.batch_size, epoch_seed(cfg.seed, epoch));
      cached_epoch = epoch;
    }
    const auto& idx = batches[static_cast<std::size_t>(st.step % per_epoch)];
    std::vector<PhonemeSequence> ph;
    std::vector<MelSpectrogram> mel;
    for (auto i : idx) {
      ph.push_back(train[i].phonemes);
      mel.push_back(train[i].mel);
    }
    LogRecord rec;
    rec.loss = train_step(st, ph, mel);
    rec.step = st.step;
    const bool eval_point = st.step % cfg.eval_every == 0 || st.step == cfg.max_steps;
    if (eval_point) {
      if (!state_is_finite(st))
        throw TrainingError("non-finite parameters or optimizer moments at step " + std::to_string(st.step));
      if (dev_sample.size() >= 2) {
        const auto ev = dev_evaluation(st.model, dev_sample);
        rec.dev_auc = ev.auc;
        rec.dev_eer = ev.eer;
      }
    }
    log << to_json(rec).dump() << '\n';
    log.flush();
    if (!log) throw IoError("failed writing metrics log '" + log_path + "'");
    result.log.push_back(rec);
    if (eval_point && st.step % cfg.eval_every == 0)
      save_checkpoint(st, (fs::path(cfg.checkpoint_dir) / step_checkpoint_name(st.step)).string());
    if (opts.verbose && (st.step % opts.progress_every == 0 || eval_point)) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      std::cerr << "step " << st.step << "/" << cfg.max_steps << " loss " << rec.loss;
      if (rec.dev_auc) std::cerr << " dev_auc " << *rec.dev_auc << " dev_eer " << *rec.dev_eer;
      std::cerr << " (" << secs << " s)\n";
    }
  }
  result.final_checkpoint = (fs::path(cfg.checkpoint_dir) / "final.sckp").string();
  save_checkpoint(st, result.final_checkpoint);
  result.state = std::move(st);
  return result;
}

// Loads the corpora named in the config (dev standardized with the training
// statistics) and trains from scratch or from `opts.resume_from`.
inline FitResult fit(const TrainConfig& config, const FitOptions& opts = {}) {
  config.validate();
  if (config.train_manifest.empty()) throw ConfigError("train: train_manifest is required");
  const Corpus train = load_corpus(config.train_manifest);
  std::vector<Example> dev;
  if (!config.dev_manifest.empty()) dev = load_examples(load_manifest(config.dev_manifest), train.vocab, train.stats);
  TrainState st;
  if (opts.resume_from) {
    st = load_checkpoint(*opts.resume_from);
    if (!(st.model.vocab == train.vocab)) throw ConfigError("resume: checkpoint vocabulary differs from the corpus");
    st.config.max_steps = config.max_steps;
    st.config.checkpoint_dir = config.checkpoint_dir;
  } else {
    st = init_train_state(config, train.vocab);
  }
  return fit_on(std::move(st), train.examples, dev, opts);
}

}  // namespace scraps
