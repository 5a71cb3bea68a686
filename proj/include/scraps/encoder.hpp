#pragma once

#include <scraps/audio.hpp>
#include <scraps/layers.hpp>
#include <scraps/vocab.hpp>

#include <json.hpp>

#include <string>
#include <vector>

namespace scraps {

struct ModelConfig {
  int n_layers = 3;
  int n_heads = 8;
  int d_model = 256;
  int ff_multiplier = 4;
  double dropout = 0.1;
  int d_embed = 1024;  // SCRAPS vector size; also the LSTM hidden size
  double temperature = 1.0;
  bool share_integrator = true;
  bool use_integrator = true;
  bool normalize_embeddings = false;
  int max_phonemes = 256;
  int max_frames = 2048;
  int vocab_size = 0;  // including the reserved IDs
  int n_mels = 80;

  void validate() const {
    if (n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
    if (n_heads < 1 || d_model < 1 || d_model % n_heads != 0)
      throw ConfigError("model: d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must be in [0, 1)");
    if (!(temperature > 0.0)) throw ConfigError("model: temperature must be > 0");
    if (d_embed < 1) throw ConfigError("model: d_embed must be >= 1");
    if (ff_multiplier < 1) throw ConfigError("model: ff_multiplier must be >= 1");
    if (vocab_size < Vocabulary::kFirstPhoneme + 1) throw ConfigError("model: vocab_size too small");
    if (max_phonemes < 1 || max_frames < 1 || n_mels < 1) throw ConfigError("model: invalid size limits");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},
                     {"d_model", c.d_model},
                     {"ff_multiplier", c.ff_multiplier},
                     {"dropout", c.dropout},
                     {"d_embed", c.d_embed},
                     {"temperature", c.temperature},
                     {"share_integrator", c.share_integrator},
                     {"use_integrator", c.use_integrator},
                     {"normalize_embeddings", c.normalize_embeddings},
                     {"max_phonemes", c.max_phonemes},
                     {"max_frames", c.max_frames},
                     {"vocab_size", c.vocab_size},
                     {"n_mels", c.n_mels}};
}

// Missing keys keep their defaults, so partial configs are accepted.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("n_layers", c.n_layers);
  get("n_heads", c.n_heads);
  get("d_model", c.d_model);
  get("ff_multiplier", c.ff_multiplier);
  get("dropout", c.dropout);
  get("d_embed", c.d_embed);
  get("temperature", c.temperature);
  get("share_integrator", c.share_integrator);
  get("use_integrator", c.use_integrator);
  get("normalize_embeddings", c.normalize_embeddings);
  get("max_phonemes", c.max_phonemes);
  get("max_frames", c.max_frames);
  get("vocab_size", c.vocab_size);
  get("n_mels", c.n_mels);
}

enum class Modality { kPhonetic, kAcoustic };
enum class Mode { kTrain, kEval };

inline const char* modality_name(Modality m) { return m == Modality::kPhonetic ? "phonetic" : "acoustic"; }

inline Modality parse_modality(const std::string& s) {
  if (s == "phonetic") return Modality::kPhonetic;
  if (s == "acoustic") return Modality::kAcoustic;
  throw ConfigError("unknown encoder component '" + s + "' (expected phonetic or acoustic)");
}

// Transformer backbone of one encoder; `embedding` is used by the phonetic
// side, `prenet` by the acoustic side.
template <typename S>
struct Backbone {
  Modality modality = Modality::kPhonetic;
  Mat<S> embedding;  // vocab x d_model
  nn::Linear<S> prenet;  // n_mels -> d_model
  nn::Transformer<S> transformer;

  void init(Modality m, const ModelConfig& cfg, Rng& rng) {
    modality = m;
    if (m == Modality::kPhonetic)
      nn::normal_init(embedding, cfg.vocab_size, cfg.d_model, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)), rng);
    else
      prenet.init(cfg.n_mels, cfg.d_model, rng);
    transformer.init(cfg.n_layers, cfg.d_model, cfg.n_heads, cfg.ff_multiplier * cfg.d_model, rng);
  }

  void visit(const std::string& prefix, const nn::ParamVisitor<S>& f) {
    if (modality == Modality::kPhonetic)
      f(prefix + ".embedding", embedding);
    else
      prenet.visit(prefix + ".prenet", f);
    transformer.visit(prefix + ".transformer", f);
  }
};

// Integrator head: projection + LSTM whose last state is the embedding, or,
// with the integrator ablated, a projection of the last real position.
template <typename S>
struct Head {
  bool use_integrator = true;
  nn::Linear<S> proj;
  nn::Lstm<S> lstm;

  void init(const ModelConfig& cfg, Rng& rng) {
    use_integrator = cfg.use_integrator;
    if (use_integrator) {
      proj.init(cfg.d_model, cfg.d_model, rng);
      lstm.init(cfg.d_model, cfg.d_embed, rng);
    } else {
      proj.init(cfg.d_model, cfg.d_embed, rng);
    }
  }

  void visit(const std::string& prefix, const nn::ParamVisitor<S>& f) {
    proj.visit(prefix + ".proj", f);
    if (use_integrator) lstm.visit(prefix + ".lstm", f);
  }
};

template <typename S>
struct EncoderParams {
  Backbone<S> phonetic;
  Backbone<S> acoustic;
  std::vector<Head<S>> heads;  // one when shared, else phonetic then acoustic

  bool shared() const { return heads.size() == 1; }
  Head<S>& head(Modality m) { return heads[shared() || m == Modality::kPhonetic ? 0 : 1]; }
  const Head<S>& head(Modality m) const { return heads[shared() || m == Modality::kPhonetic ? 0 : 1]; }
  Backbone<S>& backbone(Modality m) { return m == Modality::kPhonetic ? phonetic : acoustic; }
  const Backbone<S>& backbone(Modality m) const { return m == Modality::kPhonetic ? phonetic : acoustic; }

  static EncoderParams init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    EncoderParams p;
    p.phonetic.init(Modality::kPhonetic, cfg, rng);
    p.acoustic.init(Modality::kAcoustic, cfg, rng);
    p.heads.resize(cfg.share_integrator ? 1 : 2);
    for (auto& h : p.heads) h.init(cfg, rng);
    return p;
  }

  // Parameters in a fixed order with stable names.
  void visit(const nn::ParamVisitor<S>& f) {
    phonetic.visit("phonetic", f);
    acoustic.visit("acoustic", f);
    if (shared()) {
      heads[0].visit("head", f);
    } else {
      heads[0].visit("phonetic_head", f);
      heads[1].visit("acoustic_head", f);
    }
  }

  std::vector<std::pair<std::string, Mat<S>*>> named() {
    std::vector<std::pair<std::string, Mat<S>*>> out;
    visit([&](const std::string& name, Mat<S>& m) { out.emplace_back(name, &m); });
    return out;
  }

  EncoderParams zeros_like() const {
    EncoderParams z = *this;
    z.visit([](const std::string&, Mat<S>& m) { m.setZero(); });
    return z;
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    const_cast<EncoderParams*>(this)->visit([&](const std::string&, Mat<S>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  template <typename T>
  EncoderParams<T> cast() const {
    EncoderParams<T> out;
    out.phonetic.modality = Modality::kPhonetic;
    out.acoustic.modality = Modality::kAcoustic;
    out.phonetic.transformer.blocks.resize(phonetic.transformer.blocks.size());
    out.acoustic.transformer.blocks.resize(acoustic.transformer.blocks.size());
    out.heads.resize(heads.size());
    for (std::size_t i = 0; i < heads.size(); ++i) out.heads[i].use_integrator = heads[i].use_integrator;
    auto src = const_cast<EncoderParams*>(this)->named();
    auto dst = out.named();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<T>();
    for (std::size_t b = 0; b < phonetic.transformer.blocks.size(); ++b)
      out.phonetic.transformer.blocks[b].attn.heads = phonetic.transformer.blocks[b].attn.heads;
    for (std::size_t b = 0; b < acoustic.transformer.blocks.size(); ++b)
      out.acoustic.transformer.blocks[b].attn.heads = acoustic.transformer.blocks[b].attn.heads;
    return out;
  }
};

// B x d_embed matrix of SCRAPS vectors.
template <typename S>
struct EmbeddingBatch {
  Mat<S> rows;
  Modality modality = Modality::kPhonetic;

  Eigen::Index size() const { return rows.rows(); }
};

// Everything the backward pass needs from one encoder forward.
template <typename S>
struct EncoderCache {
  nn::SeqLayout layout;
  std::vector<int> tokens;  // phonetic: padded token ids
  Mat<S> frames;            // acoustic: padded input frames
  Mat<S> input_drop;
  typename nn::Transformer<S>::Cache transformer;
  Mat<S> hidden;  // transformer output
  Mat<S> projected;
  typename nn::Lstm<S>::Cache lstm;
  Mat<S> last_rows;  // no-integrator path: hidden rows at the last positions
  Mat<S> unnormalized;
};

namespace detail {

inline std::vector<int> strip_padding(const PhonemeSequence& seq, std::size_t index) {
  std::vector<int> ids = seq.ids;
  while (!ids.empty() && ids.back() == Vocabulary::kPad) ids.pop_back();
  for (int id : ids)
    if (id == Vocabulary::kPad)
      throw ConfigError("phoneme sequence " + std::to_string(index) + " has PAD before its end");
  return ids;
}

template <typename S>
Mat<S> run_head(const Head<S>& head, const Mat<S>& hidden, EncoderCache<S>& c) {
  const auto& layout = c.layout;
  if (head.use_integrator) {
    c.projected = head.proj.forward(hidden);
    return head.lstm.forward(c.projected, layout, c.lstm);
  }
  c.last_rows.resize(layout.batch, hidden.cols());
  for (int b = 0; b < layout.batch; ++b) c.last_rows.row(b) = hidden.row(layout.row(b, layout.lengths[b] - 1));
  return head.proj.forward(c.last_rows);
}

template <typename S>
Mat<S> run_head_backward(const Head<S>& head, Head<S>& grad, const Mat<S>& dout, const EncoderCache<S>& c) {
  const auto& layout = c.layout;
  if (head.use_integrator) {
    const Mat<S> dz = head.lstm.backward(dout, layout, c.lstm, grad.lstm);
    return head.proj.backward(dz, c.hidden, grad.proj);
  }
  const Mat<S> dlast = head.proj.backward(dout, c.last_rows, grad.proj);
  Mat<S> dhidden = Mat<S>::Zero(layout.rows(), c.hidden.cols());
  for (int b = 0; b < layout.batch; ++b) dhidden.row(layout.row(b, layout.lengths[b] - 1)) = dlast.row(b);
  return dhidden;
}

template <typename S>
Mat<S> l2_normalize_rows(const Mat<S>& x) {
  Mat<S> y = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) y.row(r) /= std::max(x.row(r).norm(), static_cast<S>(1e-12));
  return y;
}

template <typename S>
Mat<S> l2_normalize_backward(const Mat<S>& dy, const Mat<S>& x) {
  Mat<S> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S n = std::max(x.row(r).norm(), static_cast<S>(1e-12));
    const auto y = x.row(r) / n;
    dx.row(r) = (dy.row(r) - y * dy.row(r).dot(y)) / n;
  }
  return dx;
}

template <typename S>
Mat<S> finish(const Mat<S>& out, const ModelConfig& cfg, EncoderCache<S>& c) {
  if (!cfg.normalize_embeddings) return out;
  c.unnormalized = out;
  return l2_normalize_rows(out);
}

}  // namespace detail

// Per-position transformer outputs of the phonetic backbone, BOS/EOS added.
template <typename S>
Mat<S> phonetic_backbone_forward(const std::vector<PhonemeSequence>& batch, const Backbone<S>& bb,
                                 const ModelConfig& cfg, Rng* rng, EncoderCache<S>& c) {
  if (batch.empty()) throw ConfigError("encode_phonemes: empty batch");
  std::vector<std::vector<int>> seqs;
  seqs.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto ids = detail::strip_padding(batch[i], i);
    if (ids.empty()) throw ConfigError("phoneme sequence " + std::to_string(i) + " is empty");
    if (static_cast<int>(ids.size()) > cfg.max_phonemes)
      throw ConfigError("phoneme sequence " + std::to_string(i) + " has " + std::to_string(ids.size()) +
                        " phonemes, limit is " + std::to_string(cfg.max_phonemes));
    for (int id : ids)
      if (id < 0 || id >= cfg.vocab_size)
        throw ConfigError("phoneme sequence " + std::to_string(i) + " has out-of-range id " + std::to_string(id));
    ids.insert(ids.begin(), Vocabulary::kBos);
    ids.push_back(Vocabulary::kEos);
    seqs.push_back(std::move(ids));
  }
  auto& layout = c.layout;
  layout.batch = static_cast<int>(seqs.size());
  layout.lengths.clear();
  layout.max_len = 0;
  for (const auto& s : seqs) {
    layout.lengths.push_back(static_cast<int>(s.size()));
    layout.max_len = std::max(layout.max_len, static_cast<int>(s.size()));
  }
  c.tokens.assign(static_cast<std::size_t>(layout.rows()), Vocabulary::kPad);
  const S scale = std::sqrt(static_cast<S>(cfg.d_model));
  Mat<S> x = Mat<S>::Zero(layout.rows(), cfg.d_model);
  for (int b = 0; b < layout.batch; ++b)
    for (int t = 0; t < layout.lengths[b]; ++t) {
      const int id = seqs[b][t];
      c.tokens[layout.row(b, t)] = id;
      x.row(layout.row(b, t)) = bb.embedding.row(id) * scale;
    }
  nn::add_positional_encoding(x, layout);
  c.input_drop = nn::dropout_mask<S>(x.rows(), x.cols(), cfg.dropout, rng);
  return bb.transformer.forward(nn::apply_mask(x, c.input_drop), layout, cfg.dropout, rng, c.transformer);
}

// Per-position transformer outputs of the acoustic backbone.
template <typename S>
Mat<S> acoustic_backbone_forward(const std::vector<MelSpectrogram>& batch, const Backbone<S>& bb,
                                 const ModelConfig& cfg, Rng* rng, EncoderCache<S>& c) {
  if (batch.empty()) throw ConfigError("encode_mel: empty batch");
  auto& layout = c.layout;
  layout.batch = static_cast<int>(batch.size());
  layout.lengths.clear();
  layout.max_len = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& m = batch[i];
    if (!m.standardized) throw ConfigError("spectrogram " + std::to_string(i) + " is not standardized");
    if (m.frames() < 1) throw ConfigError("spectrogram " + std::to_string(i) + " has no frames");
    if (m.frames() > cfg.max_frames)
      throw ConfigError("spectrogram " + std::to_string(i) + " has " + std::to_string(m.frames()) +
                        " frames, limit is " + std::to_string(cfg.max_frames));
    if (m.n_mels() != cfg.n_mels)
      throw ConfigError("spectrogram " + std::to_string(i) + " has " + std::to_string(m.n_mels()) +
                        " mel bins, model expects " + std::to_string(cfg.n_mels));
    layout.lengths.push_back(m.frames());
    layout.max_len = std::max(layout.max_len, m.frames());
  }
  c.frames = Mat<S>::Zero(layout.rows(), cfg.n_mels);
  for (int b = 0; b < layout.batch; ++b)
    c.frames.middleRows(layout.row(b, 0), layout.lengths[b]) = batch[b].data.template cast<S>();
  Mat<S> x = bb.prenet.forward(c.frames);
  nn::add_positional_encoding(x, layout);
  c.input_drop = nn::dropout_mask<S>(x.rows(), x.cols(), cfg.dropout, rng);
  return bb.transformer.forward(nn::apply_mask(x, c.input_drop), layout, cfg.dropout, rng, c.transformer);
}

// Forward with cache. `rng` non-null enables dropout (train mode).
template <typename S>
Mat<S> forward_phonemes(const std::vector<PhonemeSequence>& batch, const EncoderParams<S>& p,
                        const ModelConfig& cfg, Rng* rng, EncoderCache<S>& c) {
  c.hidden = phonetic_backbone_forward(batch, p.phonetic, cfg, rng, c);
  return detail::finish(detail::run_head(p.head(Modality::kPhonetic), c.hidden, c), cfg, c);
}

template <typename S>
Mat<S> forward_mels(const std::vector<MelSpectrogram>& batch, const EncoderParams<S>& p, const ModelConfig& cfg,
                    Rng* rng, EncoderCache<S>& c) {
  c.hidden = acoustic_backbone_forward(batch, p.acoustic, cfg, rng, c);
  return detail::finish(detail::run_head(p.head(Modality::kAcoustic), c.hidden, c), cfg, c);
}

// Accumulates gradients of one encoder given dL/d(embeddings).
template <typename S>
void backward_encoder(Modality m, const Mat<S>& dout, const EncoderParams<S>& p, const ModelConfig& cfg,
                      const EncoderCache<S>& c, EncoderParams<S>& grad) {
  const Mat<S> d_emb = cfg.normalize_embeddings ? detail::l2_normalize_backward(dout, c.unnormalized) : dout;
  const Mat<S> dhidden = detail::run_head_backward(p.head(m), grad.head(m), d_emb, c);
  const auto& bb = p.backbone(m);
  auto& gbb = grad.backbone(m);
  Mat<S> dx = bb.transformer.backward(dhidden, c.layout, c.transformer, gbb.transformer);
  dx = nn::apply_mask(dx, c.input_drop);
  if (m == Modality::kPhonetic) {
    const S scale = std::sqrt(static_cast<S>(cfg.d_model));
    for (int b = 0; b < c.layout.batch; ++b)
      for (int t = 0; t < c.layout.lengths[b]; ++t) {
        const auto r = c.layout.row(b, t);
        gbb.embedding.row(c.tokens[r]) += dx.row(r) * scale;
      }
  } else {
    bb.prenet.backward(dx, c.frames, gbb.prenet);
  }
}

template <typename S>
EmbeddingBatch<S> encode_phonemes(const std::vector<PhonemeSequence>& batch, const EncoderParams<S>& p,
                                  const ModelConfig& cfg, Mode mode = Mode::kEval, Rng* rng = nullptr) {
  if (mode == Mode::kTrain && rng == nullptr) throw ConfigError("train mode requires an RNG for dropout");
  EncoderCache<S> c;
  return {forward_phonemes(batch, p, cfg, mode == Mode::kTrain ? rng : nullptr, c), Modality::kPhonetic};
}

template <typename S>
EmbeddingBatch<S> encode_mel(const std::vector<MelSpectrogram>& batch, const EncoderParams<S>& p,
                             const ModelConfig& cfg, Mode mode = Mode::kEval, Rng* rng = nullptr) {
  if (mode == Mode::kTrain && rng == nullptr) throw ConfigError("train mode requires an RNG for dropout");
  EncoderCache<S> c;
  return {forward_mels(batch, p, cfg, mode == Mode::kTrain ? rng : nullptr, c), Modality::kAcoustic};
}

// Integrates one L x d_model sequence of transformer outputs into a SCRAPS
// vector with the given head.
template <typename S>
Eigen::Matrix<S, 1, Eigen::Dynamic> integrate(const Mat<S>& hidden, const Head<S>& head) {
  if (hidden.rows() < 1) throw ConfigError("integrate: empty sequence");
  EncoderCache<S> c;
  c.layout.batch = 1;
  c.layout.max_len = static_cast<int>(hidden.rows());
  c.layout.lengths = {c.layout.max_len};
  c.hidden = hidden;
  return detail::run_head(head, hidden, c).row(0);
}

// A trained or initialized model bundled with its vocabulary.
struct Model {
  ModelConfig config;
  Vocabulary vocab;
  EncoderParams<float> params;

  static Model init(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t seed) {
    ModelConfig c = cfg;
    c.vocab_size = vocab.size();
    return {c, vocab, EncoderParams<float>::init(c, seed)};
  }
};

}  // namespace scraps
