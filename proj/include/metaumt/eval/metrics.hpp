#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace metaumt {

inline constexpr const char* kMetricsHeader = "run_id,method,phase,domain,direction,seed,epoch_or_step,bleu,lm_loss,bt_loss,wall_ms";

struct MetricsRow {
  std::string run_id;
  std::string method;
  std::string phase;      // pretrain | finetune | eval
  std::string domain;
  std::string direction;  // s2t | t2s
  std::uint64_t seed = 0;
  std::size_t epoch_or_step = 0;
  double bleu = 0.0;
  double lm_loss = 0.0;
  double bt_loss = 0.0;
  double wall_ms = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

namespace detail {

inline std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline std::string to_csv_line(const MetricsRow& r) {
  std::ostringstream os;
  os << r.run_id << ',' << r.method << ',' << r.phase << ',' << r.domain << ',' << r.direction << ',' << r.seed << ','
     << r.epoch_or_step << ',' << detail::fixed(r.bleu, 4) << ',' << detail::fixed(r.lm_loss, 6) << ',' << detail::fixed(r.bt_loss, 6)
     << ',' << detail::fixed(r.wall_ms, 1);
  return os.str();
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) os << to_csv_line(r) << '\n';
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_metrics_csv(os, rows);
}

inline std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) throw std::runtime_error("metrics csv: missing or wrong header");
  std::vector<MetricsRow> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 11) throw std::runtime_error("metrics csv: expected 11 fields in '" + line + "'");
    MetricsRow r;
    r.run_id = f[0];
    r.method = f[1];
    r.phase = f[2];
    r.domain = f[3];
    r.direction = f[4];
    r.seed = std::stoull(f[5]);
    r.epoch_or_step = std::stoull(f[6]);
    r.bleu = std::stod(f[7]);
    r.lm_loss = std::stod(f[8]);
    r.bt_loss = std::stod(f[9]);
    r.wall_ms = std::stod(f[10]);
    out.push_back(r);
  }
  return out;
}

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_metrics_csv(is);
}

}  // namespace metaumt
