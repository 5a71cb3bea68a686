#pragma once

#include <scraps/common.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace scraps {

// US-English X-SAMPA inventory; data/xsampa.vocab carries the same list.
inline constexpr std::array<std::string_view, 46> kXsampaInventory = {
    "i", "I",  "e",  "E",  "{",  "a",  "A",  "O",  "o",  "U",  "u",  "V",
    "@", "3`", "@`", "aI", "aU", "OI", "eI", "oU", "p",  "b",  "t",  "d",
    "k", "g",  "tS", "dZ", "f",  "v",  "T",  "D",  "s",  "z",  "S",  "Z",
    "h", "m",  "n",  "N",  "l",  "r\\", "w", "j",  "4",  "?"};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kFirstPhoneme = 3;

  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    if (symbols_.empty()) throw ConfigError("empty vocabulary");
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      const auto& s = symbols_[i];
      if (s.empty()) throw ConfigError("vocabulary contains an empty symbol");
      if (s == "<pad>" || s == "<bos>" || s == "<eos>")
        throw ConfigError("vocabulary lists reserved token '" + s + "'");
      auto [it, inserted] = index_.emplace(s, static_cast<int>(i) + kFirstPhoneme);
      if (!inserted) throw ConfigError("duplicate vocabulary symbol '" + s + "'");
    }
  }

  // Total number of IDs including the three reserved ones.
  int size() const { return static_cast<int>(symbols_.size()) + kFirstPhoneme; }
  int num_phonemes() const { return static_cast<int>(symbols_.size()); }

  std::optional<int> find(std::string_view symbol) const {
    auto it = index_.find(std::string(symbol));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int id(std::string_view symbol) const {
    auto found = find(symbol);
    if (!found) throw ConfigError("unknown phoneme symbol '" + std::string(symbol) + "'");
    return *found;
  }

  const std::string& symbol(int id) const {
    static const std::array<std::string, 3> reserved = {"<pad>", "<bos>", "<eos>"};
    if (id < 0 || id >= size()) throw ConfigError("phoneme id out of range: " + std::to_string(id));
    if (id < kFirstPhoneme) return reserved[static_cast<std::size_t>(id)];
    return symbols_[static_cast<std::size_t>(id - kFirstPhoneme)];
  }

  const std::vector<std::string>& symbols() const { return symbols_; }

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

struct PhonemeSequence {
  std::vector<int> ids;
  std::optional<std::string> source_text;

  std::size_t size() const { return ids.size(); }
};

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// One symbol per line; blank lines are ignored.
inline Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary file '" + path + "'");
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    auto s = trim(line);
    if (!s.empty()) symbols.push_back(std::move(s));
  }
  if (symbols.empty()) throw ConfigError("empty vocabulary file '" + path + "'");
  return Vocabulary(std::move(symbols));
}

inline void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file '" + path + "'");
  for (const auto& s : vocab.symbols()) out << s << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

// Leading symbols of the shipped inventory.
inline Vocabulary xsampa_vocab(int num_phonemes) {
  if (num_phonemes < 1 || num_phonemes > static_cast<int>(kXsampaInventory.size()))
    throw ConfigError("vocabulary size must be in [1, " +
                      std::to_string(kXsampaInventory.size()) + "]");
  std::vector<std::string> symbols;
  for (int i = 0; i < num_phonemes; ++i) symbols.emplace_back(kXsampaInventory[static_cast<std::size_t>(i)]);
  return Vocabulary(std::move(symbols));
}

inline std::vector<int> to_ids(const std::vector<std::string>& symbols, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) ids.push_back(vocab.id(s));
  return ids;
}

inline std::vector<std::string> to_symbols(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.symbol(id));
  return out;
}

// ---------------------------------------------------------------------------
// Pronunciation lexicon and dictionary G2P.

using Lexicon = std::unordered_map<std::string, std::vector<std::string>>;

// "word ph1 ph2 ..." per line, '#' starts a comment. Words are lowercased.
// Later entries for the same word replace earlier ones.
inline Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read lexicon file '" + path + "'");
  Lexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::istringstream fields(s);
    std::string word, ph;
    fields >> word;
    std::vector<std::string> pron;
    while (fields >> ph) pron.push_back(ph);
    if (pron.empty())
      throw FormatError(path + ":" + std::to_string(lineno) + ": word '" + word +
                        "' has no pronunciation");
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    lex[word] = std::move(pron);
  }
  return lex;
}

enum class OovPolicy { kStrict, kLenient };

// Lowercases, strips punctuation (apostrophes inside words are kept), looks
// every word up and concatenates the pronunciations with no boundary token.
// Lenient mode skips unknown words and records them in `skipped`.
inline PhonemeSequence phonemize(std::string_view text, const Lexicon& lexicon,
                                 const Vocabulary& vocab, OovPolicy policy = OovPolicy::kStrict,
                                 std::vector<std::string>* skipped = nullptr) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'')
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    else
      cleaned.push_back(' ');
  }
  PhonemeSequence seq;
  seq.source_text = std::string(text);
  std::istringstream words(cleaned);
  std::string word;
  std::vector<std::string> missing;
  while (words >> word) {
    // quotes used as punctuation, e.g. 'hello'
    while (!word.empty() && word.front() == '\'') word.erase(word.begin());
    while (!word.empty() && word.back() == '\'') word.pop_back();
    if (word.empty()) continue;
    auto it = lexicon.find(word);
    if (it == lexicon.end()) {
      missing.push_back(word);
      continue;
    }
    for (const auto& ph : it->second) {
      auto id = vocab.find(ph);
      if (!id)
        throw ConfigError("lexicon entry '" + word + "' uses symbol '" + ph +
                          "' which is not in the vocabulary");
      seq.ids.push_back(*id);
    }
  }
  if (!missing.empty()) {
    if (policy == OovPolicy::kStrict) {
      std::string msg = "out-of-lexicon word(s):";
      for (const auto& w : missing) msg += " " + w;
      throw ConfigError(msg);
    }
    if (skipped) skipped->insert(skipped->end(), missing.begin(), missing.end());
  }
  return seq;
}

}  // namespace scraps
