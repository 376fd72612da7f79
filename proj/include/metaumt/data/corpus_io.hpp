#pragma once

// On-disk corpora: <root>/vocab.txt and <root>/<domain>/{src,tgt,eval.src,eval.tgt}.txt,
// UTF-8, one sentence per line, space-separated tokens.

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaumt/data/synthetic.hpp"
#include "metaumt/data/vocabulary.hpp"

namespace metaumt {

inline std::string domain_dir_name(std::size_t domain) { return "d" + std::to_string(domain); }

namespace detail {

inline void write_lines(const std::filesystem::path& path, const Vocabulary& vocab, const std::vector<Sentence>& lines) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (const auto& s : lines) os << vocab.detokenize(s) << '\n';
}

inline std::vector<Sentence> read_lines(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(is, line)) out.push_back(vocab.tokenize(line));
  return out;
}

}  // namespace detail

inline void write_corpora(const std::filesystem::path& root, const Vocabulary& vocab, const std::vector<DomainCorpus>& corpora) {
  std::filesystem::create_directories(root);
  vocab.save((root / "vocab.txt").string());
  for (const auto& c : corpora) {
    const auto dir = root / domain_dir_name(c.domain_id);
    std::filesystem::create_directories(dir);
    detail::write_lines(dir / "src.txt", vocab, c.src_sentences);
    detail::write_lines(dir / "tgt.txt", vocab, c.tgt_sentences);
    std::vector<Sentence> es, et;
    for (const auto& [s, t] : c.eval_pairs) {
      es.push_back(s);
      et.push_back(t);
    }
    detail::write_lines(dir / "eval.src.txt", vocab, es);
    detail::write_lines(dir / "eval.tgt.txt", vocab, et);
  }
}

inline DomainCorpus read_domain(const std::filesystem::path& root, std::size_t domain, const Vocabulary& vocab) {
  const auto dir = root / domain_dir_name(domain);
  DomainCorpus c;
  c.domain_id = domain;
  c.src_sentences = detail::read_lines(dir / "src.txt", vocab);
  c.tgt_sentences = detail::read_lines(dir / "tgt.txt", vocab);
  auto es = detail::read_lines(dir / "eval.src.txt", vocab);
  auto et = detail::read_lines(dir / "eval.tgt.txt", vocab);
  if (es.size() != et.size()) throw std::runtime_error("eval files of " + dir.string() + " differ in length");
  for (std::size_t i = 0; i < es.size(); ++i) c.eval_pairs.emplace_back(std::move(es[i]), std::move(et[i]));
  return c;
}

inline std::vector<DomainCorpus> read_corpora(const std::filesystem::path& root, const Vocabulary& vocab) {
  std::vector<DomainCorpus> out;
  for (std::size_t d = 0; std::filesystem::is_directory(root / domain_dir_name(d)); ++d) out.push_back(read_domain(root, d, vocab));
  return out;
}

}  // namespace metaumt
