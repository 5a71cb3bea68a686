#pragma once

#include <scraps/audio.hpp>

#include <json.hpp>

#include <fstream>
#include <vector>

namespace scraps {

// Per-mel-bin statistics fitted on the training corpus.
struct StandardizeStats {
  static constexpr double kMinStd = 1e-8;

  std::vector<double> mean;
  std::vector<double> std;

  int n_mels() const { return static_cast<int>(mean.size()); }
};

inline StandardizeStats fit_stats(const std::vector<MelSpectrogram>& corpus) {
  if (corpus.empty()) throw ConfigError("cannot fit statistics on an empty corpus");
  const int n_mels = corpus.front().n_mels();
  StandardizeStats stats;
  stats.mean.assign(n_mels, 0.0);
  stats.std.assign(n_mels, 0.0);
  std::size_t count = 0;
  for (const auto& m : corpus) {
    if (m.n_mels() != n_mels) throw ConfigError("inconsistent mel dimension in corpus");
    for (int f = 0; f < m.frames(); ++f)
      for (int j = 0; j < n_mels; ++j) stats.mean[j] += m.data(f, j);
    count += static_cast<std::size_t>(m.frames());
  }
  if (count == 0) throw ConfigError("corpus has no frames");
  for (auto& v : stats.mean) v /= static_cast<double>(count);
  for (const auto& m : corpus)
    for (int f = 0; f < m.frames(); ++f)
      for (int j = 0; j < n_mels; ++j) {
        const double d = m.data(f, j) - stats.mean[j];
        stats.std[j] += d * d;
      }
  for (auto& v : stats.std) v = std::max(std::sqrt(v / static_cast<double>(count)), StandardizeStats::kMinStd);
  return stats;
}

inline MelSpectrogram standardize(const MelSpectrogram& mel, const StandardizeStats& stats) {
  if (stats.n_mels() != mel.n_mels() || stats.std.size() != stats.mean.size())
    throw ConfigError("stats have " + std::to_string(stats.n_mels()) + " bins, spectrogram has " +
                      std::to_string(mel.n_mels()));
  MelSpectrogram out = mel;
  for (int f = 0; f < mel.frames(); ++f)
    for (int j = 0; j < mel.n_mels(); ++j)
      out.data(f, j) = static_cast<float>((mel.data(f, j) - stats.mean[j]) /
                                          std::max(stats.std[j], StandardizeStats::kMinStd));
  out.standardized = true;
  return out;
}

inline MelSpectrogram destandardize(const MelSpectrogram& mel, const StandardizeStats& stats) {
  if (stats.n_mels() != mel.n_mels()) throw ConfigError("stats/spectrogram dimension mismatch");
  MelSpectrogram out = mel;
  for (int f = 0; f < mel.frames(); ++f)
    for (int j = 0; j < mel.n_mels(); ++j)
      out.data(f, j) = static_cast<float>(mel.data(f, j) * std::max(stats.std[j], StandardizeStats::kMinStd) +
                                          stats.mean[j]);
  out.standardized = false;
  return out;
}

inline nlohmann::json stats_to_json(const StandardizeStats& stats) {
  return nlohmann::json{{"mean", stats.mean}, {"std", stats.std}};
}

inline StandardizeStats stats_from_json(const nlohmann::json& j) {
  StandardizeStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.std.size() || s.mean.empty())
    throw FormatError("stats file: mean/std length mismatch");
  for (auto& v : s.std) {
    if (!(v >= StandardizeStats::kMinStd)) v = StandardizeStats::kMinStd;
  }
  return s;
}

inline void save_stats(const StandardizeStats& stats, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write stats file '" + path + "'");
  out << stats_to_json(stats).dump() << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline StandardizeStats load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read stats file '" + path + "'");
  try {
    return stats_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("stats file '" + path + "': " + e.what());
  }
}

}  // namespace scraps
