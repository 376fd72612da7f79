#pragma once

// Summaries computed from metric rows alone, so a results CSV can be
// re-reported without rerunning anything. Seeds are aggregated by median.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "metaumt/eval/experiment.hpp"
#include "metaumt/eval/metrics.hpp"

namespace metaumt {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct MethodSummary {
  std::string method;
  double s2t = 0.0;    // median test BLEU
  double t2s = 0.0;
  double epoch = 0.0;  // median convergence epoch
  std::size_t seeds = 0;
  double mean() const { return 0.5 * (s2t + t2s); }
};

struct AblationSummary {
  bool cross = false;
  bool aggregate = false;
  double s2t = 0.0;
  double t2s = 0.0;
  std::size_t seeds = 0;
  double mean() const { return 0.5 * (s2t + t2s); }
};

struct ZeroShotSummary {
  std::string method;
  std::string domain;
  double s2t = 0.0;
  double t2s = 0.0;
  double mean() const { return 0.5 * (s2t + t2s); }
};

struct CurvePoint {
  std::string method;
  std::size_t step = 0;
  double bleu = 0.0;  // median over seeds of the direction mean
};

namespace detail {

inline bool is_main_run(const MetricsRow& r) {
  const std::string prefix = r.method + "-s";
  return r.run_id.rfind(prefix, 0) == 0 && r.run_id == prefix + std::to_string(r.seed);
}

}  // namespace detail

/// Final test rows of the main runs, per method in canonical order.
inline std::vector<MethodSummary> summarize_methods(const std::vector<MetricsRow>& rows) {
  std::vector<MethodSummary> out;
  for (const auto& m : all_methods()) {
    std::vector<double> s2t, t2s, epoch;
    for (const auto& r : rows) {
      if (r.phase != "eval" || r.method != m || !detail::is_main_run(r)) continue;
      (r.direction == "s2t" ? s2t : t2s).push_back(r.bleu);
      if (r.direction == "s2t") epoch.push_back(static_cast<double>(r.epoch_or_step));
    }
    if (s2t.empty() && t2s.empty()) continue;
    out.push_back({m, median(s2t), median(t2s), median(epoch), s2t.size()});
  }
  return out;
}

inline std::optional<MethodSummary> find_method(const std::vector<MethodSummary>& v, const std::string& m) {
  for (const auto& s : v)
    if (s.method == m) return s;
  return std::nullopt;
}

inline std::vector<AblationSummary> summarize_ablation(const std::vector<MetricsRow>& rows) {
  std::vector<AblationSummary> out;
  for (bool cross : {false, true}) {
    for (bool aggregate : {false, true}) {
      const std::string prefix = std::string("ablation-cd") + (cross ? "1" : "0") + "-ag" + (aggregate ? "1" : "0") + "-s";
      std::vector<double> s2t, t2s;
      for (const auto& r : rows) {
        if (r.phase != "eval" || r.run_id.rfind(prefix, 0) != 0) continue;
        (r.direction == "s2t" ? s2t : t2s).push_back(r.bleu);
      }
      if (s2t.empty() && t2s.empty()) continue;
      out.push_back({cross, aggregate, median(s2t), median(t2s), s2t.size()});
    }
  }
  return out;
}

inline std::vector<ZeroShotSummary> summarize_zero_shot(const std::vector<MetricsRow>& rows) {
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> cells;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    if (r.phase != "eval" || r.run_id.size() < 9 || r.run_id.compare(r.run_id.size() - 9, 9, "-zeroshot") != 0) continue;
    const auto key = std::make_pair(r.method, r.domain);
    if (!cells.count(key)) order.push_back(key);
    (r.direction == "s2t" ? cells[key].first : cells[key].second).push_back(r.bleu);
  }
  std::vector<ZeroShotSummary> out;
  for (const auto& k : order) out.push_back({k.first, k.second, median(cells[k].first), median(cells[k].second)});
  return out;
}

inline std::vector<CurvePoint> summarize_pretraining(const std::vector<MetricsRow>& rows) {
  std::map<std::pair<std::string, std::size_t>, std::map<std::uint64_t, std::vector<double>>> cells;
  for (const auto& r : rows) {
    if (r.phase != "pretrain" || !detail::is_main_run(r)) continue;
    cells[{r.method, r.epoch_or_step}][r.seed].push_back(r.bleu);
  }
  std::vector<CurvePoint> out;
  for (const auto& [key, per_seed] : cells) {
    std::vector<double> means;
    for (const auto& [seed, v] : per_seed) {
      double s = 0.0;
      for (double x : v) s += x;
      means.push_back(s / static_cast<double>(v.size()));
    }
    out.push_back({key.first, key.second, median(means)});
  }
  return out;
}

namespace detail {

inline std::string num(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline std::string render_text_report(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  const auto methods = summarize_methods(rows);
  os << "In-domain test BLEU (median over seeds)\n";
  os << "method       s2t     t2s     epoch  seeds\n";
  for (const auto& m : methods) {
    char line[128];
    std::snprintf(line, sizeof line, "%-11s %6.2f  %6.2f  %6.1f  %5zu\n", m.method.c_str(), m.s2t, m.t2s, m.epoch, m.seeds);
    os << line;
  }
  const auto abl = summarize_ablation(rows);
  if (!abl.empty()) {
    double base = 0.0;
    for (const auto& a : abl)
      if (!a.cross && !a.aggregate) base = a.mean();
    os << "\nLoss ablation (cross-domain / aggregate-domain)\n";
    os << "cd   ag     s2t     t2s   delta\n";
    for (const auto& a : abl) {
      char line[128];
      std::snprintf(line, sizeof line, "%-4s %-4s %6.2f  %6.2f  %+6.2f\n", a.cross ? "on" : "off", a.aggregate ? "on" : "off", a.s2t, a.t2s,
                    a.mean() - base);
      os << line;
    }
  }
  const auto zs = summarize_zero_shot(rows);
  if (!zs.empty()) {
    os << "\nPer-domain BLEU after finetuning (mean of directions)\n";
    std::vector<std::string> domains, ms;
    for (const auto& z : zs) {
      if (std::find(domains.begin(), domains.end(), z.domain) == domains.end()) domains.push_back(z.domain);
      if (std::find(ms.begin(), ms.end(), z.method) == ms.end()) ms.push_back(z.method);
    }
    os << "method     ";
    for (const auto& d : domains) os << " " << std::string(6 - std::min<std::size_t>(6, d.size()), ' ') << d;
    os << "\n";
    for (const auto& m : ms) {
      char head[32];
      std::snprintf(head, sizeof head, "%-11s", m.c_str());
      os << head;
      for (const auto& d : domains) {
        for (const auto& z : zs) {
          if (z.method == m && z.domain == d) {
            char cell[16];
            std::snprintf(cell, sizeof cell, " %6.2f", z.mean());
            os << cell;
          }
        }
      }
      os << "\n";
    }
  }
  const auto curve = summarize_pretraining(rows);
  if (!curve.empty()) {
    os << "\nPretraining dev BLEU by update (median over seeds)\n";
    for (const auto& c : curve) os << c.method << " " << c.step << " " << detail::num(c.bleu) << "\n";
  }
  return os.str();
}

inline std::string render_csv_report(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "table,key,s2t,t2s,extra\n";
  for (const auto& m : summarize_methods(rows))
    os << "methods," << m.method << "," << detail::num(m.s2t, 4) << "," << detail::num(m.t2s, 4) << "," << detail::num(m.epoch, 1) << "\n";
  for (const auto& a : summarize_ablation(rows))
    os << "ablation,cd" << a.cross << "-ag" << a.aggregate << "," << detail::num(a.s2t, 4) << "," << detail::num(a.t2s, 4) << "," << a.seeds << "\n";
  for (const auto& z : summarize_zero_shot(rows))
    os << "zeroshot," << z.method << ":" << z.domain << "," << detail::num(z.s2t, 4) << "," << detail::num(z.t2s, 4) << ",\n";
  for (const auto& c : summarize_pretraining(rows))
    os << "pretraining," << c.method << ":" << c.step << "," << detail::num(c.bleu, 4) << "," << detail::num(c.bleu, 4) << ",\n";
  return os.str();
}

}  // namespace metaumt
