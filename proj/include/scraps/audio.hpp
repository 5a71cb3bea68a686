#pragma once

#include <scraps/common.hpp>

#include <complex>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace scraps {

// frames x n_mels log-mel energies.
struct MelSpectrogram {
  MatF data;
  bool standardized = false;
  double frame_hop_ms = 12.5;

  int frames() const { return static_cast<int>(data.rows()); }
  int n_mels() const { return static_cast<int>(data.cols()); }
};

struct FeatureConfig {
  int sample_rate = 16000;
  int win_length = 800;  // 50 ms
  int hop_length = 200;  // 12.5 ms
  int n_fft = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double power_floor = 1e-10;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Band edges in Hz: n_mels + 2 points evenly spaced on the HTK mel scale.
inline std::vector<double> mel_band_edges(const FeatureConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t k = 0; k < edges.size(); ++k)
    edges[k] = mel_to_hz(lo + (hi - lo) * static_cast<double>(k) / (cfg.n_mels + 1));
  return edges;
}

inline double mel_center_hz(const FeatureConfig& cfg, int bin) {
  return mel_band_edges(cfg)[static_cast<std::size_t>(bin) + 1];
}

// n_mels x (n_fft/2 + 1) triangular filters with unit peak.
inline MatD mel_filterbank(const FeatureConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const auto edges = mel_band_edges(cfg);
  MatD fb = MatD::Zero(cfg.n_mels, n_bins);
  for (int j = 0; j < cfg.n_mels; ++j) {
    const double lower = edges[j], center = edges[j + 1], upper = edges[j + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f >= lower && f <= center)
        w = (f - lower) / (center - lower);
      else if (f > center && f <= upper)
        w = (upper - f) / (upper - center);
      fb(j, k) = w;
    }
  }
  return fb;
}

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w(std::cos(ang * k), std::sin(ang * k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

inline std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int n = 0; n < length; ++n) w[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / length);
  return w;
}

inline int num_frames(std::size_t n_samples, const FeatureConfig& cfg = {}) {
  if (n_samples < static_cast<std::size_t>(cfg.win_length)) return 0;
  return 1 + static_cast<int>((n_samples - cfg.win_length) / cfg.hop_length);
}

// Unstandardized log-mel spectrogram of mono PCM samples.
inline MelSpectrogram featurize(std::span<const float> samples, int sample_rate,
                                const FeatureConfig& cfg = {}) {
  if (sample_rate != cfg.sample_rate)
    throw ConfigError("expected " + std::to_string(cfg.sample_rate / 1000) +
                      " kHz audio, got " + std::to_string(sample_rate) + " Hz");
  if (samples.size() < static_cast<std::size_t>(cfg.win_length))
    throw ConfigError("clip of " + std::to_string(samples.size()) +
                      " samples is shorter than one analysis window (" +
                      std::to_string(cfg.win_length) + ")");
  const int frames = num_frames(samples.size(), cfg);
  const int n_bins = cfg.n_fft / 2 + 1;
  const MatD fb = mel_filterbank(cfg);
  const auto window = hann_window(cfg.win_length);

  MelSpectrogram mel;
  mel.data.resize(frames, cfg.n_mels);
  mel.frame_hop_ms = 1000.0 * cfg.hop_length / cfg.sample_rate;
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.n_fft));
  Eigen::VectorXd power(n_bins);
  for (int f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const std::size_t start = static_cast<std::size_t>(f) * cfg.hop_length;
    for (int n = 0; n < cfg.win_length; ++n)
      buf[n] = samples[start + n] * window[n];
    fft_inplace(buf);
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(buf[k]);
    const Eigen::VectorXd energies = fb * power;
    for (int j = 0; j < cfg.n_mels; ++j)
      mel.data(f, j) = static_cast<float>(std::log(std::max(energies[j], cfg.power_floor)));
  }
  return mel;
}

// ---------------------------------------------------------------------------
// RIFF/WAVE, PCM 16-bit mono.

struct WavAudio {
  int sample_rate = 0;
  std::vector<float> samples;  // scaled to [-1, 1)
};

namespace detail {
inline std::uint32_t read_u32le(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32le(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16le(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>(v >> 8));
}
}  // namespace detail

inline WavAudio read_wav(const std::string& path, int required_rate = 16000) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read WAV file '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("'" + path + "' is not a RIFF/WAVE file");
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = detail::read_u32le(&bytes[pos + 4]);
    const unsigned char* body = &bytes[pos + 8];
    if (pos + 8 + size > bytes.size()) throw FormatError("truncated chunk in '" + path + "'");
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("short fmt chunk in '" + path + "'");
      format = detail::read_u16le(body);
      channels = detail::read_u16le(body + 2);
      rate = detail::read_u32le(body + 4);
      bits = detail::read_u16le(body + 14);
      have_fmt = true;
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk in '" + path + "'");
      if (format != 1 || bits != 16) throw FormatError("'" + path + "': only 16-bit PCM is supported");
      if (channels != 1) throw FormatError("'" + path + "': only mono audio is supported");
      if (static_cast<int>(rate) != required_rate)
        throw ConfigError("'" + path + "': expected " + std::to_string(required_rate / 1000) +
                          " kHz audio, got " + std::to_string(rate) + " Hz");
      WavAudio wav;
      wav.sample_rate = static_cast<int>(rate);
      wav.samples.resize(size / 2);
      for (std::size_t i = 0; i < wav.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(detail::read_u16le(body + 2 * i));
        wav.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      return wav;
    }
    pos += 8 + size + (size & 1);
  }
  throw FormatError("no data chunk in '" + path + "'");
}

inline void write_wav(const std::string& path, std::span<const float> samples, int sample_rate = 16000) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out += "RIFF";
  detail::put_u32le(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);
  detail::put_u16le(out, 1);
  detail::put_u32le(out, static_cast<std::uint32_t>(sample_rate));
  detail::put_u32le(out, static_cast<std::uint32_t>(sample_rate * 2));
  detail::put_u16le(out, 2);
  detail::put_u16le(out, 16);
  out += "data";
  detail::put_u32le(out, data_bytes);
  for (float s : samples) {
    const float c = std::clamp(s, -1.0f, 32767.0f / 32768.0f);
    detail::put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0f))));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write WAV file '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing '" + path + "'");
}

}  // namespace scraps
