#pragma once

#include <scraps/audio.hpp>
#include <scraps/vocab.hpp>

#include <string>

namespace scraps {

enum class CorruptionMethod { kSubstitute, kGaussian, kMix };

inline const char* method_name(CorruptionMethod m) {
  switch (m) {
    case CorruptionMethod::kSubstitute: return "substitute";
    case CorruptionMethod::kGaussian: return "gaussian";
    case CorruptionMethod::kMix: return "mix";
  }
  return "?";
}

inline CorruptionMethod parse_method(const std::string& s) {
  if (s == "substitute") return CorruptionMethod::kSubstitute;
  if (s == "gaussian") return CorruptionMethod::kGaussian;
  if (s == "mix") return CorruptionMethod::kMix;
  throw ConfigError("unknown corruption method '" + s + "' (expected substitute, gaussian or mix)");
}

// Substitution corrupts the phonetic side; the others the acoustic side.
inline bool corrupts_phonemes(CorruptionMethod m) { return m == CorruptionMethod::kSubstitute; }

struct CorruptionSpec {
  CorruptionMethod method = CorruptionMethod::kGaussian;
  double amount = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(amount >= 0.0 && amount <= 1.0))
      throw ConfigError("corruption amount must be in [0, 1], got " + std::to_string(amount));
  }
};

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1], got " + std::to_string(alpha));
}

// (1 - alpha) * M + alpha * N, frame-wise. N is cropped or loop-tiled to M's
// length first. Endpoints return exact copies.
inline MelSpectrogram mix_spectrograms(const MelSpectrogram& m, const MelSpectrogram& n, double alpha) {
  check_alpha(alpha);
  if (m.n_mels() != n.n_mels()) throw ConfigError("mix_spectrograms: mel dimension mismatch");
  if (n.frames() < 1) throw ConfigError("mix_spectrograms: empty noise spectrogram");
  MelSpectrogram out = m;
  if (alpha == 0.0) return out;
  const float a = static_cast<float>(alpha);
  for (int f = 0; f < m.frames(); ++f) {
    const auto src = n.data.row(f % n.frames());
    if (alpha == 1.0)
      out.data.row(f) = src;
    else
      out.data.row(f) = (1.0f - a) * m.data.row(f) + a * src;
  }
  out.standardized = m.standardized && n.standardized;
  return out;
}

inline MelSpectrogram gaussian_noise(const MelSpectrogram& m, double alpha, std::uint64_t seed) {
  check_alpha(alpha);
  MelSpectrogram noise = m;
  Rng rng(seed);
  for (Eigen::Index i = 0; i < noise.data.size(); ++i) noise.data.data()[i] = static_cast<float>(rng.normal());
  noise.standardized = true;
  auto out = mix_spectrograms(m, noise, alpha);
  out.standardized = m.standardized;
  return out;
}

// Each position is replaced with probability p by a uniformly drawn phoneme
// different from the current one.
inline PhonemeSequence substitute_phonemes(const PhonemeSequence& seq, double p, std::uint64_t seed,
                                           const Vocabulary& vocab) {
  check_alpha(p);
  const int n_phonemes = vocab.num_phonemes();
  if (p > 0.0 && n_phonemes < 2)
    throw ConfigError("substitute_phonemes: vocabulary has a single phoneme, no valid substitute");
  PhonemeSequence out = seq;
  Rng rng(seed);
  // Both draws happen at every position so that, for a fixed seed, the set
  // of replaced positions at a smaller p is a subset of the set at a larger p.
  for (auto& id : out.ids) {
    const double u = rng.uniform();
    const auto other = n_phonemes >= 2 ? rng.below(static_cast<std::uint64_t>(n_phonemes - 1)) : 0;
    if (!(u < p)) continue;
    int pick = Vocabulary::kFirstPhoneme + static_cast<int>(other);
    if (pick >= id && id >= Vocabulary::kFirstPhoneme) ++pick;
    id = pick;
  }
  return out;
}

}  // namespace scraps
