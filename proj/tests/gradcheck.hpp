#pragma once

#include <scraps/scraps.hpp>

#include <string>
#include <vector>

namespace scraps::test {

struct TensorCheck {
  std::string name;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs_diff = 0.0;
  double grad_norm = 0.0;
};

struct GradCheckBatch {
  std::vector<PhonemeSequence> phonemes;
  std::vector<MelSpectrogram> mels;
};

// Three pairs with distinct lengths so every padding path is exercised.
inline GradCheckBatch gradcheck_batch(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  GradCheckBatch b;
  const int lens[] = {2, 4, 3};
  const int frames[] = {5, 3, 7};
  for (int i = 0; i < 3; ++i) {
    PhonemeSequence s;
    for (int t = 0; t < lens[i]; ++t)
      s.ids.push_back(Vocabulary::kFirstPhoneme +
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab_size - Vocabulary::kFirstPhoneme))));
    b.phonemes.push_back(s);
    MelSpectrogram m;
    m.data.resize(frames[i], cfg.n_mels);
    for (Eigen::Index k = 0; k < m.data.size(); ++k) m.data.data()[k] = static_cast<float>(rng.normal());
    m.standardized = true;
    b.mels.push_back(m);
  }
  return b;
}

inline ModelConfig reduced_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 1;
  c.d_embed = 4;
  c.vocab_size = 9;
  c.n_mels = 80;
  c.dropout = 0.0;
  return c;
}

// Central differences of the full contrastive loss against the analytic
// gradient, per parameter tensor. With dropout > 0 the same mask stream is
// replayed for every evaluation.
inline std::vector<TensorCheck> gradient_check(const ModelConfig& cfg, std::uint64_t seed, double h = 1e-5) {
  auto params = EncoderParams<double>::init(cfg, seed);
  const auto batch = gradcheck_batch(cfg, seed + 1);
  const Rng dropout_rng(seed + 2);
  const bool use_rng = cfg.dropout > 0.0;

  auto grad = params.zeros_like();
  Rng r0 = dropout_rng;
  loss_and_gradients<double>(params, cfg, batch.phonemes, batch.mels, use_rng ? &r0 : nullptr, grad);

  auto loss_at = [&]() {
    Rng r = dropout_rng;
    EncoderCache<double> cp, ca;
    const MatD t = forward_phonemes(batch.phonemes, params, cfg, use_rng ? &r : nullptr, cp);
    const MatD a = forward_mels(batch.mels, params, cfg, use_rng ? &r : nullptr, ca);
    return contrastive_loss(score_matrix<double>(t, a, cfg.temperature));
  };

  std::vector<TensorCheck> out;
  auto named = params.named();
  auto grads = grad.named();
  for (std::size_t p = 0; p < named.size(); ++p) {
    MatD& w = *named[p].second;
    MatD numeric(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double keep = w.data()[i];
      w.data()[i] = keep + h;
      const double up = loss_at();
      w.data()[i] = keep - h;
      const double down = loss_at();
      w.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const MatD& analytic = *grads[p].second;
    TensorCheck c;
    c.name = named[p].first;
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-12});
    c.rel_error = (analytic - numeric).norm() / denom;
    c.max_abs_diff = (analytic - numeric).cwiseAbs().maxCoeff();
    c.grad_norm = analytic.norm();
    out.push_back(c);
  }
  return out;
}

}  // namespace scraps::test
