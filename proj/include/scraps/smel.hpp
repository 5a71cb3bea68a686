#pragma once

#include <scraps/audio.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

// SMEL: "SMEL" | version u16 | n_frames u32 | n_mels u32 | float32[frames*mels]
// All little-endian, frame-major.

namespace scraps {

inline constexpr char kSmelMagic[4] = {'S', 'M', 'E', 'L'};
inline constexpr std::uint16_t kSmelVersion = 1;

namespace detail {

template <typename T>
void append_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.append(reinterpret_cast<const char*>(raw), sizeof(T));
}

template <typename T>
T load_le(const char* p) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace detail

inline std::string encode_smel(const MelSpectrogram& mel) {
  if (!mel.data.allFinite()) throw ConfigError("refusing to write non-finite spectrogram");
  std::string out(kSmelMagic, 4);
  detail::append_le<std::uint16_t>(out, kSmelVersion);
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(mel.frames()));
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(mel.n_mels()));
  out.reserve(out.size() + 4 * static_cast<std::size_t>(mel.data.size()));
  for (Eigen::Index i = 0; i < mel.data.size(); ++i) detail::append_le<float>(out, mel.data.data()[i]);
  return out;
}

inline MelSpectrogram decode_smel(const std::string& bytes, const std::string& origin = "<memory>") {
  constexpr std::size_t kHeader = 4 + 2 + 4 + 4;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kSmelMagic, 4) != 0)
    throw FormatError("'" + origin + "': bad magic, not an SMEL file");
  if (bytes.size() < kHeader) throw FormatError("'" + origin + "': truncated SMEL header");
  const auto version = detail::load_le<std::uint16_t>(bytes.data() + 4);
  if (version != kSmelVersion)
    throw FormatError("'" + origin + "': unsupported SMEL version " + std::to_string(version));
  const auto frames = detail::load_le<std::uint32_t>(bytes.data() + 6);
  const auto mels = detail::load_le<std::uint32_t>(bytes.data() + 10);
  const std::uint64_t expected = 4ULL * frames * mels;
  if (bytes.size() - kHeader != expected)
    throw FormatError("'" + origin + "': payload is " + std::to_string(bytes.size() - kHeader) +
                      " bytes, header declares " + std::to_string(frames) + "x" +
                      std::to_string(mels) + " (" + std::to_string(expected) + " bytes)");
  MelSpectrogram mel;
  mel.data.resize(frames, mels);
  const char* p = bytes.data() + kHeader;
  for (Eigen::Index i = 0; i < mel.data.size(); ++i) mel.data.data()[i] = detail::load_le<float>(p + 4 * i);
  return mel;
}

inline void write_smel(const MelSpectrogram& mel, const std::string& path) {
  detail::spit(path, encode_smel(mel));
}

inline MelSpectrogram read_smel(const std::string& path) { return decode_smel(detail::slurp(path), path); }

}  // namespace scraps
