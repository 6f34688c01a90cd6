#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pfx/common.hpp"

namespace pfx {

// Token ids are indices into the vocabulary. A TokenSeq always carries the
// CLS token at position 0 once produced by tokenize().
using TokenSeq = std::vector<int32_t>;

struct Vocabulary {
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kCls = 1;
  static constexpr int32_t kUnk = 2;
  static constexpr int32_t kMask = 3;

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int32_t> index;

  int32_t size() const { return static_cast<int32_t>(tokens.size()); }

  int32_t id(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? -1 : it->second;
  }

  const std::string& token(int32_t id) const {
    require(id >= 0 && id < size(), Errc::internal, "token id out of range");
    return tokens[static_cast<size_t>(id)];
  }

  bool is_special(int32_t id) const { return id >= 0 && id <= kMask; }

  void push(const std::string& tok) {
    require(index.find(tok) == index.end(), Errc::config, "duplicate vocabulary token: " + tok);
    index.emplace(tok, size());
    tokens.push_back(tok);
  }

  void validate() const {
    require(size() >= 16, Errc::config, "vocabulary too small (need >= 16 tokens)");
    require(tokens.size() > 3 && tokens[0] == "[PAD]" && tokens[1] == "[CLS]" &&
                tokens[2] == "[UNK]" && tokens[3] == "[MASK]",
            Errc::format, "vocabulary must start with [PAD] [CLS] [UNK] [MASK]");
    require(index.size() == tokens.size(), Errc::format, "vocabulary tokens not unique");
  }
};

inline Vocabulary make_vocabulary(const std::vector<std::string>& words) {
  Vocabulary v;
  v.push("[PAD]");
  v.push("[CLS]");
  v.push("[UNK]");
  v.push("[MASK]");
  for (const auto& w : words) v.push(w);
  v.validate();
  return v;
}

// One token per line; the line index is the id.
inline void save_vocabulary(const Vocabulary& v, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io, "cannot open for write: " + path);
  for (const auto& t : v.tokens) out << t << '\n';
  require(static_cast<bool>(out), Errc::io, "write failed: " + path);
}

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io, "cannot open vocabulary: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(!line.empty(), Errc::format, "empty vocabulary line in " + path);
    v.push(line);
  }
  v.validate();
  return v;
}

// Whitespace tokenization. Unknown words map to UNK, CLS is prepended, the
// result is truncated to max_len ids (CLS included).
inline TokenSeq tokenize(const std::string& text, const Vocabulary& vocab, int32_t max_len = 64) {
  TokenSeq seq;
  seq.push_back(Vocabulary::kCls);
  std::istringstream ss(text);
  std::string word;
  while (ss >> word) {
    if (static_cast<int32_t>(seq.size()) >= max_len) break;
    const int32_t id = vocab.id(word);
    seq.push_back(id < 0 ? Vocabulary::kUnk : id);
  }
  if (static_cast<int32_t>(seq.size()) > max_len) seq.resize(static_cast<size_t>(max_len));
  return seq;
}

// Inverse of tokenize for in-vocabulary text: body tokens joined by spaces.
inline std::string detokenize(const TokenSeq& seq, const Vocabulary& vocab) {
  std::string out;
  for (size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] == Vocabulary::kCls && i == 0) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(seq[i]);
  }
  return out;
}

}  // namespace pfx
