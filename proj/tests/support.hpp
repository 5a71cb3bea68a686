#pragma once

#include <scraps/scraps.hpp>

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace scraps::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("scraps_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline ModelConfig tiny_config(int vocab_size = 13, int n_mels = 80) {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_embed = 8;
  c.dropout = 0.1;
  c.vocab_size = vocab_size;
  c.n_mels = n_mels;
  c.max_phonemes = 64;
  c.max_frames = 256;
  return c;
}

inline PhonemeSequence random_sequence(int length, int vocab_size, Rng& rng) {
  PhonemeSequence s;
  for (int i = 0; i < length; ++i)
    s.ids.push_back(Vocabulary::kFirstPhoneme +
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab_size - Vocabulary::kFirstPhoneme))));
  return s;
}

inline MelSpectrogram random_mel(int frames, int n_mels, Rng& rng) {
  MelSpectrogram m;
  m.data.resize(frames, n_mels);
  for (Eigen::Index i = 0; i < m.data.size(); ++i) m.data.data()[i] = static_cast<float>(rng.normal());
  m.standardized = true;
  return m;
}

inline MatD random_matrix(int rows, int cols, Rng& rng) {
  MatD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Small synthetic corpus written to `dir`.
inline SynthOutput small_corpus(const std::string& dir, int n_train = 64, int n_dev = 32, std::uint64_t seed = 11) {
  SynthConfig s;
  s.vocab_size = 12;
  s.n_utterances = n_train;
  s.n_dev = n_dev;
  s.seq_len_min = 3;
  s.seq_len_max = 6;
  s.frames_per_phoneme_min = 2;
  s.frames_per_phoneme_max = 3;
  s.seed = seed;
  return synth_corpus(s, dir);
}

}  // namespace scraps::test
