// metaumt command-line driver. Exit codes: 0 success, 2 configuration error,
// 3 runtime or numeric error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "metaumt/metaumt.hpp"

namespace fs = std::filesystem;
using namespace metaumt;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

SyntheticLanguageSpec load_language_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read spec " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  SyntheticLanguageSpec spec;
  detail::read(j, spec, "spec");
  try {
    spec.validate();
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

struct World {
  SyntheticLanguage lang;
  std::vector<DomainCorpus> corpora;
  explicit World(const ExperimentConfig& cfg) : lang(cfg.language), corpora(generate_corpora(lang)) {}
};

std::vector<DomainCorpus> pick(const std::vector<DomainCorpus>& all, const std::vector<std::size_t>& ids) {
  std::vector<DomainCorpus> out;
  for (std::size_t d : ids) out.push_back(all.at(d));
  return out;
}

EvalSplit in_domain_split(const ExperimentConfig& cfg, const World& w, std::uint64_t seed) {
  return split_eval_pairs(w.corpora.at(cfg.in_domain).eval_pairs, cfg.supervised.word_budget, cfg.eval.dev_pairs, cfg.eval.test_pairs,
                          derive_seed(seed, "split"));
}

int cmd_gen_data(const std::string& spec_path, const std::string& out) {
  const SyntheticLanguageSpec spec = load_language_spec(spec_path);
  SyntheticLanguage lang(spec);
  const auto corpora = generate_corpora(lang);
  write_corpora(out, lang.vocab(), corpora);
  std::ofstream(fs::path(out) / "spec.json") << detail::write(spec).dump(2) << '\n';
  std::cout << "wrote " << corpora.size() << " domains, vocabulary of " << lang.vocab().size() << " tokens to " << out << "\n";
  return 0;
}

int cmd_pretrain(const std::string& method_name_arg, const std::string& config_path, const std::string& out, std::uint64_t seed) {
  const ExperimentConfig cfg = load_experiment(config_path);
  PretrainMethod method;
  try {
    method = parse_pretrain_method(method_name_arg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  World w(cfg);
  SharedEncDec model(cfg.model_for(w.lang));
  const auto outs = pick(w.corpora, cfg.out_domains);
  std::cerr << "masked-LM initialization (" << cfg.mlm.steps << " steps)\n";
  ParamSet theta = mlm_init(model, outs, cfg.mlm, derive_seed(seed, "mlm-init"));
  MetaConfig mc = cfg.meta;
  if (method == PretrainMethod::metaumt) {
    mc.cross_domain_mix = 0.0;
    mc.aggregate_domain = false;
  }
  UnmtTask task(model, outs, cfg.loss);
  const std::size_t every = std::max<std::size_t>(1, mc.meta_steps / 10);
  pretrain(task, theta, method, mc, derive_seed(seed, "pretrain"), [&](std::size_t step, const TaskLoss& l) {
    if (step % every == 0) std::cerr << method_name_arg << " update " << step << " lm " << l.lm << " bt " << l.bt << "\n";
  });
  save_model(out, {model.config(), cfg, {method_name_arg, config_hash(cfg), seed, mc.meta_steps}, theta});
  std::cout << "saved " << method_name_arg << " model to " << out << "\n";
  return 0;
}

int cmd_finetune(const std::string& ckpt, std::size_t in_domain, std::size_t budget, const std::string& out_arg, std::uint64_t seed) {
  SavedModel m = load_model(ckpt);
  ExperimentConfig cfg = m.experiment;
  cfg.in_domain = in_domain;
  cfg.finetune.in_domain_budget_words = budget;
  World w(cfg);
  if (in_domain >= w.corpora.size()) throw ConfigError("in-domain " + std::to_string(in_domain) + " does not exist");
  SharedEncDec model(m.model);
  const EvalSplit split = in_domain_split(cfg, w, seed);
  DevScorer dev = [&](const ParamSet& p) { return evaluate_both(model, p, split.dev); };
  FinetuneResult r = finetune(model, m.params, w.corpora.at(in_domain), dev, cfg.finetune, cfg.loss, derive_seed(seed, "finetune"),
                              derive_seed(seed, "data"), m.provenance.method);
  for (const auto& h : r.model.history) {
    std::cout << "epoch " << h.step << " lm " << h.lm_loss << " bt " << h.bt_loss << " dev s2t " << h.dev_bleu_s2t << " t2s " << h.dev_bleu_t2s
              << "\n";
  }
  const BleuPair test = evaluate_both(model, r.model.params, split.test);
  std::cout << "convergence_epoch " << r.convergence_epoch << " test s2t " << test.s2t << " t2s " << test.t2s << "\n";
  const std::string out = out_arg.empty() ? (fs::path(ckpt) / "finetuned").string() : out_arg;
  Provenance prov = m.provenance;
  prov.method += "+finetune";
  prov.steps += r.model.provenance.steps;
  save_model(out, {m.model, cfg, prov, r.model.params});
  std::cout << "saved finetuned model to " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt, std::size_t domain, const std::string& direction, std::uint64_t seed) {
  SavedModel m = load_model(ckpt);
  const Direction dir = [&] {
    try {
      return parse_direction(direction);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }();
  World w(m.experiment);
  if (domain >= w.corpora.size()) throw ConfigError("domain " + std::to_string(domain) + " does not exist");
  SharedEncDec model(m.model);
  SentencePairs pairs;
  if (domain == m.experiment.in_domain) {
    pairs = in_domain_split(m.experiment, w, seed).test;
  } else {
    const auto& ev = w.corpora.at(domain).eval_pairs;
    pairs.assign(ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(std::min(ev.size(), m.experiment.eval.zero_shot_pairs)));
  }
  std::cout << "bleu " << evaluate_model(model, m.params, pairs, dir) << "\n";
  return 0;
}

int cmd_matrix(const std::string& config_path, const std::string& out) {
  const ExperimentConfig cfg = load_experiment(config_path);
  fs::create_directories(out);
  std::ofstream(fs::path(out) / "config.json") << experiment_to_json(cfg).dump(2) << '\n';
  MatrixResult res = run_matrix(cfg, &std::cerr);
  write_metrics_csv((fs::path(out) / "metrics.csv").string(), res.rows);
  const std::string text = render_text_report(res.rows);
  std::ofstream(fs::path(out) / "summary.txt") << text;
  std::cout << text;
  return 0;
}

int cmd_report(const std::string& in, const std::string& format) {
  fs::path p(in);
  if (fs::is_directory(p)) p /= "metrics.csv";
  const auto rows = read_metrics_csv(p.string());
  if (format == "txt") {
    std::cout << render_text_report(rows);
  } else if (format == "csv") {
    std::cout << render_csv_report(rows);
  } else {
    throw ConfigError("unknown report format '" + format + "' (expected csv or txt)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learning for low-resource unsupervised translation on synthetic language pairs"};
  app.require_subcommand(1);

  std::string spec_path, out, method, config_path, ckpt, direction, in, format = "txt";
  std::size_t in_domain = 6, budget = 5000, domain = 0;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen-data", "generate synthetic corpora");
  gen->add_option("--spec", spec_path, "language spec JSON")->required();
  gen->add_option("--out", out, "output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "masked-LM init plus out-domain pretraining");
  pre->add_option("--method", method, "transfer | metaumt | metagumt")->required();
  pre->add_option("--config", config_path, "experiment config JSON")->required();
  pre->add_option("--out", out, "checkpoint directory")->required();
  pre->add_option("--seed", seed, "run seed");

  auto* ft = app.add_subcommand("finetune", "finetune a checkpoint on a budgeted in-domain corpus");
  ft->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  ft->add_option("--in-domain", in_domain, "in-domain id")->required();
  ft->add_option("--budget", budget, "in-domain words per language side");
  ft->add_option("--out", out, "output checkpoint directory (default <ckpt>/finetuned)");
  ft->add_option("--seed", seed, "run seed");

  auto* ev = app.add_subcommand("evaluate", "BLEU of a checkpoint on one domain");
  ev->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  ev->add_option("--domain", domain, "domain id")->required();
  ev->add_option("--direction", direction, "s2t | t2s")->required();
  ev->add_option("--seed", seed, "seed of the in-domain dev/test split");

  auto* mx = app.add_subcommand("matrix", "run the full experiment matrix");
  mx->add_option("--config", config_path, "experiment config JSON")->required();
  mx->add_option("--out", out, "results directory")->required();

  auto* rep = app.add_subcommand("report", "summarize a results directory");
  rep->add_option("--in", in, "results directory or metrics.csv")->required();
  rep->add_option("--format", format, "csv | txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(spec_path, out);
    if (*pre) return cmd_pretrain(method, config_path, out, seed);
    if (*ft) return cmd_finetune(ckpt, in_domain, budget, out, seed);
    if (*ev) return cmd_evaluate(ckpt, domain, direction, seed);
    if (*mx) return cmd_matrix(config_path, out);
    if (*rep) return cmd_report(in, format);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
