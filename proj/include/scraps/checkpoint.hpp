#pragma once

#include <scraps/smel.hpp>

#include <json.hpp>

#include <string>
#include <vector>

// Checkpoint container:
//   "SCKP" | version u16 | header_len u32 | header (UTF-8 JSON)
//   then blobs until EOF: name_len u16 | name | rank u8 | dims u32[rank] | float32[prod(dims)]
// All integers and floats little-endian.

namespace scraps {

inline constexpr char kSckpMagic[4] = {'S', 'C', 'K', 'P'};
inline constexpr std::uint16_t kSckpVersion = 1;

struct TensorBlob {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

struct SckpFile {
  nlohmann::json header = nlohmann::json::object();
  std::vector<TensorBlob> blobs;

  const TensorBlob* find(const std::string& name) const {
    for (const auto& b : blobs)
      if (b.name == name) return &b;
    return nullptr;
  }
};

inline TensorBlob to_blob(const std::string& name, const MatF& m) {
  TensorBlob b;
  b.name = name;
  b.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  b.data.assign(m.data(), m.data() + m.size());
  return b;
}

inline void from_blob(const TensorBlob& b, MatF& m) {
  if (b.dims.size() != 2 || b.dims[0] != m.rows() || b.dims[1] != m.cols()) {
    std::string got;
    for (auto d : b.dims) got += (got.empty() ? "" : "x") + std::to_string(d);
    throw FormatError("tensor '" + b.name + "' has shape " + got + ", expected " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()));
  }
  std::copy(b.data.begin(), b.data.end(), m.data());
}

inline std::string encode_sckp(const SckpFile& file) {
  std::string out(kSckpMagic, 4);
  detail::append_le<std::uint16_t>(out, kSckpVersion);
  const std::string header = file.header.dump();
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& b : file.blobs) {
    if (b.name.size() > 0xFFFF) throw FormatError("tensor name too long: " + b.name);
    if (b.dims.size() > 0xFF) throw FormatError("tensor rank too large: " + b.name);
    std::uint64_t count = 1;
    for (auto d : b.dims) count *= d;
    if (count != b.data.size()) throw FormatError("tensor '" + b.name + "' data/shape mismatch");
    detail::append_le<std::uint16_t>(out, static_cast<std::uint16_t>(b.name.size()));
    out += b.name;
    out.push_back(static_cast<char>(b.dims.size()));
    for (auto d : b.dims) detail::append_le<std::uint32_t>(out, d);
    for (float v : b.data) detail::append_le<float>(out, v);
  }
  return out;
}

inline SckpFile decode_sckp(const std::string& bytes, const std::string& origin = "<memory>") {
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - pos < n) throw FormatError("'" + origin + "': truncated checkpoint (" + what + ")");
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), kSckpMagic, 4) != 0) throw FormatError("'" + origin + "': bad magic, not a checkpoint");
  pos = 4;
  need(2, "version");
  const auto version = detail::load_le<std::uint16_t>(bytes.data() + pos);
  pos += 2;
  if (version != kSckpVersion)
    throw FormatError("'" + origin + "': checkpoint format version " + std::to_string(version) +
                      " does not match supported version " + std::to_string(kSckpVersion));
  need(4, "header length");
  const auto header_len = detail::load_le<std::uint32_t>(bytes.data() + pos);
  pos += 4;
  need(header_len, "header");
  SckpFile file;
  try {
    file.header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + origin + "': corrupt checkpoint header: " + e.what());
  }
  pos += header_len;
  while (pos < bytes.size()) {
    TensorBlob b;
    need(2, "tensor name length");
    const auto name_len = detail::load_le<std::uint16_t>(bytes.data() + pos);
    pos += 2;
    need(name_len, "tensor name");
    b.name = bytes.substr(pos, name_len);
    pos += name_len;
    need(1, "tensor rank");
    const auto rank = static_cast<unsigned char>(bytes[pos++]);
    need(4ULL * rank, "tensor dims");
    std::uint64_t count = 1;
    for (unsigned r = 0; r < rank; ++r) {
      b.dims.push_back(detail::load_le<std::uint32_t>(bytes.data() + pos));
      count *= b.dims.back();
      pos += 4;
    }
    if (count > (bytes.size() - pos) / 4) throw FormatError("'" + origin + "': truncated data for tensor '" + b.name + "'");
    b.data.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) b.data[i] = detail::load_le<float>(bytes.data() + pos + 4 * i);
    pos += 4 * count;
    file.blobs.push_back(std::move(b));
  }
  return file;
}

inline void write_sckp(const SckpFile& file, const std::string& path) { detail::spit(path, encode_sckp(file)); }

inline SckpFile read_sckp(const std::string& path) { return decode_sckp(detail::slurp(path), path); }

}  // namespace scraps
