// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "metaumt/metaumt.hpp"
#include "support/bleu_oracle.hpp"
#include "support/finite_diff.hpp"
#include "support/quadratic.hpp"

using namespace metaumt;
using namespace metaumt::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << name << ": " << o.detail << std::endl;
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

Outcome gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t elements = 0;
  const int graphs = 150;
  for (int g = 1; g <= graphs; ++g) {
    const auto r = check_graph(static_cast<std::uint64_t>(g));
    worst = std::max(worst, r.max_rel_error);
    elements += r.elements;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-3 && secs < 30.0,
          std::to_string(graphs) + " graphs, " + std::to_string(elements) + " elements, max rel err " + sci(worst) + ", " + fmt(secs) + " s"};
}

MetaConfig exact_config(double alpha) {
  MetaConfig c;
  c.alpha = alpha;
  c.beta = 0.1;
  c.clip_norm = 0.0;
  c.cross_domain_mix = 0.0;
  c.aggregate_domain = false;
  return c;
}

Outcome quadratic_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  Rng rng(77);
  const int draws = 25;
  for (int draw = 0; draw < draws; ++draw) {
    const std::size_t n = 2 + uniform_index(rng, 4), dim = 1 + uniform_index(rng, 3);
    std::vector<Vec> a(n, Vec(dim));
    for (auto& ai : a)
      for (auto& x : ai) x = uniform(rng, -2.0, 2.0);
    Vec theta0(dim);
    for (auto& x : theta0) x = static_cast<float>(uniform(rng, -2.0, 2.0));
    const double alpha = uniform(rng, 0.0, 0.9), beta = uniform(rng, 0.01, 0.2), mix = uniform(rng, 0.0, 1.0);
    const bool aggregate = uniform01(rng) < 0.5;

    QuadraticTask task(a);
    MetaConfig cfg = exact_config(alpha);
    ParamSet umt = QuadraticTask::params(theta0), gumt = QuadraticTask::params(theta0);
    SgdState s1{beta, 0}, s2{beta, 0};
    MetaStreams st1 = MetaStreams::from_seed(draw), st2 = MetaStreams::from_seed(draw);
    meta_step_umt(task, umt, s1, cfg, st1);
    cfg.cross_domain_mix = mix;
    cfg.aggregate_domain = aggregate;
    meta_step_gumt(task, gumt, s2, cfg, st2);
    const Vec want_umt = sgd(theta0, umt_gradient(theta0, a, alpha), beta);
    const Vec want_gumt = sgd(theta0, gumt_gradient(theta0, a, alpha, mix, aggregate), beta);
    for (std::size_t k = 0; k < dim; ++k) {
      worst = std::max(worst, std::abs(values(umt)[k] - want_umt[k]));
      worst = std::max(worst, std::abs(values(gumt)[k] - want_gumt[k]));
    }
  }
  QuadraticTask task({{0.0, -1.0}, {2.0, 3.0}, {1.0, 1.0}});
  ParamSet theta = QuadraticTask::params({5.0, -4.0});
  SgdState state{0.1, 0};
  MetaStreams streams = MetaStreams::from_seed(3);
  for (int s = 0; s < 200; ++s) meta_step_umt(task, theta, state, exact_config(0.1), streams);
  const double conv = std::max(std::abs(values(theta)[0] - 1.0), std::abs(values(theta)[1] - 1.0));
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && conv < 1e-3 && secs < 5.0,
          std::to_string(draws) + " draws, max abs err " + sci(worst) + ", distance to mean " + sci(conv) + ", " + fmt(secs) + " s"};
}

struct SmallWorld {
  SyntheticLanguage lang;
  std::vector<DomainCorpus> corpora;
  SharedEncDec model;
  SmallWorld() : lang(spec()), corpora(generate_corpora(lang)), model(config(lang.vocab().size())) {}
  static SyntheticLanguageSpec spec() {
    SyntheticLanguageSpec s;
    s.train_sentences = 200;
    s.eval_pairs = 10;
    return s;
  }
  static TransformerConfig config(std::size_t vocab) {
    TransformerConfig c;
    c.n_layers = 1;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_len = 16;
    c.vocab_size = vocab;
    return c;
  }
};

Outcome reduction_lattice(const SmallWorld& w) {
  UnmtLossConfig loss;
  loss.tokens_per_batch = 32;
  MetaConfig cfg;
  cfg.alpha = 0.05;
  cfg.beta = 1e-3;
  cfg.cross_domain_mix = 0.0;
  cfg.aggregate_domain = false;
  const std::vector<DomainCorpus> three(w.corpora.begin(), w.corpora.begin() + 3);
  UnmtTask task3(w.model, three, loss);
  ParamSet a = w.model.init_params(4), b = w.model.init_params(4);
  AdamState oa, ob;
  oa.lr = ob.lr = cfg.beta;
  MetaStreams sa = MetaStreams::from_seed(9), sb = MetaStreams::from_seed(9);
  for (int s = 0; s < 2; ++s) {
    meta_step_umt(task3, a, oa, cfg, sa);
    meta_step_gumt(task3, b, ob, cfg, sb);
  }
  const bool gumt_is_umt = a.values_equal(b) && !a.values_equal(w.model.init_params(4));

  const std::vector<DomainCorpus> one(w.corpora.begin(), w.corpora.begin() + 1);
  UnmtTask task1(w.model, one, loss);
  cfg.alpha = 0.0;
  ParamSet c = w.model.init_params(5), d = w.model.init_params(5);
  AdamState oc, od;
  oc.lr = od.lr = cfg.beta;
  MetaStreams sc = MetaStreams::from_seed(10), sd = MetaStreams::from_seed(10);
  for (int s = 0; s < 2; ++s) {
    meta_step_umt(task1, c, oc, cfg, sc);
    transfer_step(task1, d, od, 0, cfg.clip_norm, sd);
  }
  const bool umt_is_transfer = c.values_equal(d);
  return {gumt_is_umt && umt_is_transfer, std::string("gumt(mix=0,agg=off)==umt ") + (gumt_is_umt ? "yes" : "no") +
                                              ", umt(alpha=0,n=1)==transfer " + (umt_is_transfer ? "yes" : "no")};
}

Outcome detached_bt(const SmallWorld& w) {
  auto grads_of = [](const ParamSet& p) {
    std::vector<std::vector<float>> out;
    for (std::size_t i = 0; i < p.size(); ++i) out.push_back(p[i].has_grad() ? p[i].grad() : std::vector<float>(p[i].numel(), 0.0f));
    return out;
  };
  Rng data(1);
  bool ok = true;
  std::size_t compared = 0;
  for (int trial = 0; trial < 3; ++trial) {
    ParamSet p = w.model.init_params(100 + trial);
    Rng noise(2 + trial);
    for (std::size_t i = 0; i < p.size(); ++i)
      for (auto& v : p[i].data()) v += static_cast<float>(0.3 * standard_normal(noise));
    const TokenBatch xs = sample_batch(w.corpora[trial], Lang::src, 48, data);
    const TokenBatch ys = sample_batch(w.corpora[trial], Lang::tgt, 48, data);
    Rng r1(7), r2(7);
    p.zero_grad();
    Tape<float> t1;
    t1.backward(bt_loss(t1, w.model, p, xs, ys, r1, 4, true));
    const auto g1 = grads_of(p);
    const PseudoPairs pseudo = generate_pseudo_pairs(w.model, p.deep_clone(), xs, ys, 4);
    p.zero_grad();
    Tape<float> t2;
    t2.backward(bt_loss_from_pseudo(t2, w.model, p, xs, ys, pseudo, r2, true));
    const auto g2 = grads_of(p);
    ok = ok && g1 == g2;
    for (const auto& g : g1) compared += g.size();
  }
  return {ok, std::to_string(compared) + " gradient elements compared, " + (ok ? "all equal" : "mismatch")};
}

Outcome bleu_oracle() {
  Rng rng(11);
  auto random_sentence = [&](std::size_t lo, std::size_t hi) {
    Sentence s(lo + uniform_index(rng, hi - lo + 1));
    for (auto& t : s) t = static_cast<TokenId>(uniform_index(rng, 6));
    return s;
  };
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::vector<Sentence> ref{random_sentence(1, 9)}, hyp{random_sentence(0, 9)};
    worst = std::max(worst, std::abs(corpus_bleu(hyp, ref) - brute_force_bleu(hyp, ref)));
  }
  const double hand = corpus_bleu({{1, 2, 3, 4}}, {{1, 2, 3, 4, 5}});
  return {worst < 1e-9 && std::abs(hand - 77.88) < 5e-3, "1000 pairs, max diff " + sci(worst) + ", hand example " + fmt(hand, 4)};
}

double mean_of(const MethodSummary& m) { return m.mean(); }

std::string method_line(const std::vector<MethodSummary>& v) {
  std::ostringstream os;
  for (const auto& m : v) os << m.method << " " << fmt(m.s2t, 2) << "/" << fmt(m.t2s, 2) << " ep" << fmt(m.epoch, 1) << "; ";
  return os.str();
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string config_path, det_path, work = "acceptance_runs";
  app.add_option("--config", config_path, "experiment config for the trend criteria")->required();
  app.add_option("--determinism-config", det_path, "experiment config for the determinism criterion")->required();
  app.add_option("--work", work, "directory for run outputs");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  report(1, "gradient suite", gradients());
  report(2, "quadratic meta oracle", quadratic_oracle());
  const SmallWorld world;
  report(3, "reduction lattice", reduction_lattice(world));
  report(4, "detached back-translation", detached_bt(world));
  report(5, "bleu oracle", bleu_oracle());

  const ExperimentConfig cfg = load_experiment(config_path);
  std::ofstream log(fs::path(work) / "matrix.log");
  const auto t0 = Clock::now();
  const MatrixResult res = run_matrix(cfg, &log);
  const double minutes = seconds_since(t0) / 60.0;
  write_metrics_csv((fs::path(work) / "metrics.csv").string(), res.rows);
  write_file(fs::path(work) / "summary.txt", render_text_report(res.rows));

  const auto methods = summarize_methods(res.rows);
  auto get = [&](const char* m) { return find_method(methods, m); };
  {
    const auto un = get("unadapted"), tr = get("transfer"), umt = get("metaumt"), gumt = get("metagumt"), sup = get("supervised"),
               only = get("unmt_only");
    Outcome o;
    if (!(un && tr && umt && gumt && sup && only)) {
      o = {false, "config lacks a method needed for the comparison"};
    } else {
      bool ok = true;
      std::string why;
      auto check = [&](bool c, const std::string& what) {
        if (!c) {
          ok = false;
          why += " violated: " + what + ";";
        }
      };
      for (int dir = 0; dir < 2; ++dir) {
        auto b = [&](const std::optional<MethodSummary>& m) { return dir == 0 ? m->s2t : m->t2s; };
        const std::string d = dir == 0 ? "s2t" : "t2s";
        check(b(gumt) >= b(umt), d + " metagumt>=metaumt");
        check(b(umt) >= b(tr), d + " metaumt>=transfer");
        check(b(tr) >= b(un), d + " transfer>=unadapted");
        check(b(sup) < b(tr), d + " supervised<transfer");
        check(b(only) < b(tr), d + " unmt_only<transfer");
        check(b(umt) - b(tr) >= 1.0, d + " metaumt-transfer>=1");
        check(b(gumt) - b(tr) >= 1.0, d + " metagumt-transfer>=1");
      }
      check(minutes < 30.0, "runtime<30min");
      o = {ok, method_line(methods) + "runtime " + fmt(minutes, 1) + " min." + why};
    }
    report(6, "trend reproduction", o);
  }
  {
    const auto tr = get("transfer"), umt = get("metaumt"), gumt = get("metagumt");
    Outcome o;
    if (!(tr && umt && gumt)) {
      o = {false, "missing method"};
    } else {
      o = {gumt->epoch <= umt->epoch && umt->epoch <= tr->epoch,
           "median epochs metagumt " + fmt(gumt->epoch, 1) + ", metaumt " + fmt(umt->epoch, 1) + ", transfer " + fmt(tr->epoch, 1)};
    }
    report(7, "adaptation speed", o);
  }
  {
    const auto abl = summarize_ablation(res.rows);
    double v[2][2] = {{NAN, NAN}, {NAN, NAN}};
    for (const auto& a : abl) v[a.cross][a.aggregate] = a.mean();
    const bool have = abl.size() == 4;
    const bool ok = have && v[1][1] >= v[1][0] && v[1][1] >= v[0][1] && v[1][0] >= v[0][0] && v[0][1] >= v[0][0];
    report(8, "ablation ordering",
           {ok, "on/on " + fmt(v[1][1], 2) + ", on/off " + fmt(v[1][0], 2) + ", off/on " + fmt(v[0][1], 2) + ", off/off " + fmt(v[0][0], 2)});
  }
  {
    const std::string unseen = domain_dir_name(cfg.unseen_domain);
    double g = NAN, t = NAN;
    for (const auto& z : summarize_zero_shot(res.rows)) {
      if (z.domain != unseen) continue;
      if (z.method == "metagumt") g = z.mean();
      if (z.method == "transfer") t = z.mean();
    }
    report(9, "unseen-domain zero-shot", {g >= t, unseen + ": metagumt " + fmt(g, 2) + ", transfer " + fmt(t, 2)});
  }
  {
    const ExperimentConfig det = load_experiment(det_path);
    std::ostringstream a, b;
    write_metrics_csv(a, run_matrix(det).rows);
    write_metrics_csv(b, run_matrix(det).rows);
    write_file(fs::path(work) / "determinism_a.csv", a.str());
    write_file(fs::path(work) / "determinism_b.csv", b.str());
    report(10, "determinism", {a.str() == b.str(), std::to_string(a.str().size()) + " bytes, " + (a.str() == b.str() ? "identical" : "differ")});
  }
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
