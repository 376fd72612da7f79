#pragma once

// Corpus BLEU on token ids: geometric mean of clipped n-gram precisions times
// the brevity penalty. A zero match count at order n >= 2 is replaced by
// add-one smoothing, (0 + 1) / (total + 1).

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "metaumt/data/vocabulary.hpp"

namespace metaumt {

struct BleuStats {
  std::vector<std::size_t> matches;  // per order
  std::vector<std::size_t> totals;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

namespace detail {

inline std::map<std::vector<TokenId>, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<std::vector<TokenId>, std::size_t> out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[std::vector<TokenId>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                                              s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

}  // namespace detail

inline BleuStats bleu_stats(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references, std::size_t max_n = 4) {
  if (hypotheses.size() != references.size()) throw std::invalid_argument("bleu: hypothesis and reference counts differ");
  if (hypotheses.empty()) throw std::invalid_argument("bleu: no sentences");
  if (max_n == 0) throw std::invalid_argument("bleu: max_n must be positive");
  BleuStats st;
  st.matches.assign(max_n, 0);
  st.totals.assign(max_n, 0);
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const Sentence& h = hypotheses[s];
    const Sentence& r = references[s];
    if (r.empty()) throw std::invalid_argument("bleu: empty reference sentence");
    st.hyp_len += h.size();
    st.ref_len += r.size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto hc = detail::ngram_counts(h, n);
      const auto rc = detail::ngram_counts(r, n);
      for (const auto& [gram, count] : hc) {
        auto it = rc.find(gram);
        if (it != rc.end()) st.matches[n - 1] += std::min(count, it->second);
      }
      if (h.size() >= n) st.totals[n - 1] += h.size() - n + 1;
    }
  }
  return st;
}

inline double bleu_from_stats(const BleuStats& st) {
  if (st.hyp_len == 0) return 0.0;
  const std::size_t max_n = st.matches.size();
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    double p;
    if (st.matches[n] > 0) {
      p = static_cast<double>(st.matches[n]) / static_cast<double>(st.totals[n]);
    } else if (n == 0) {
      return 0.0;
    } else {
      p = 1.0 / (static_cast<double>(st.totals[n]) + 1.0);
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(st.hyp_len), r = static_cast<double>(st.ref_len);
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(max_n));
}

inline double corpus_bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references, std::size_t max_n = 4) {
  return bleu_from_stats(bleu_stats(hypotheses, references, max_n));
}

}  // namespace metaumt
