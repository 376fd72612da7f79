#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace metaumt {

using TokenId = std::int32_t;
using Sentence = std::vector<TokenId>;

enum class Lang : int { src = 0, tgt = 1 };

inline Lang other(Lang l) { return l == Lang::src ? Lang::tgt : Lang::src; }
inline const char* lang_name(Lang l) { return l == Lang::src ? "src" : "tgt"; }

namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId bos = 1;
inline constexpr TokenId eos = 2;
inline constexpr TokenId unk = 3;
inline constexpr TokenId mask = 4;
inline constexpr TokenId lang_src = 5;
inline constexpr TokenId lang_tgt = 6;
inline constexpr TokenId count = 7;
}  // namespace special

inline TokenId lang_token(Lang l) { return l == Lang::src ? special::lang_src : special::lang_tgt; }

/// One id space shared by both languages and every domain.
class Vocabulary {
 public:
  Vocabulary() {
    for (const char* s : {"<pad>", "<s>", "</s>", "<unk>", "<mask>", "<src>", "<tgt>"}) add(s);
  }

  TokenId add(const std::string& token) {
    if (token.empty() || token.find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("Vocabulary: invalid token '" + token + "'");
    }
    auto [it, inserted] = ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
    if (!inserted) throw std::invalid_argument("Vocabulary: duplicate token '" + token + "'");
    tokens_.push_back(token);
    return it->second;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  TokenId id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? special::unk : it->second;
  }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  Sentence tokenize(const std::string& line) const {
    Sentence out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(id(tok));
    return out;
  }

  std::string detokenize(const Sentence& s) const {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += ' ';
      out += token(s[i]);
    }
    return out;
  }

  /// One token per line; line number is the id.
  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write vocabulary " + path);
    for (const auto& t : tokens_) os << t << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read vocabulary " + path);
    Vocabulary v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      if (lineno < special::count) {
        if (line != v.tokens_[lineno]) throw std::runtime_error("vocabulary " + path + ": special token mismatch at line " + std::to_string(lineno + 1));
      } else {
        v.add(line);
      }
      ++lineno;
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

inline std::size_t token_count(const std::vector<Sentence>& side) {
  std::size_t n = 0;
  for (const auto& s : side) n += s.size();
  return n;
}

}  // namespace metaumt
