#pragma once

// A saved model is a directory holding model.ckpt (parameters) and
// model.json (TransformerConfig, provenance and the producing experiment).

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "metaumt/checkpoint.hpp"
#include "metaumt/eval/experiment.hpp"

namespace metaumt {

struct SavedModel {
  TransformerConfig model;
  ExperimentConfig experiment;
  Provenance provenance;
  ParamSet params;
};

inline void save_model(const std::filesystem::path& dir, const SavedModel& m) {
  std::filesystem::create_directories(dir);
  save_checkpoint((dir / "model.ckpt").string(), m.params);
  nlohmann::json j{{"model", detail::write(m.model)},
                   {"provenance",
                    {{"method", m.provenance.method},
                     {"config_hash", m.provenance.config_hash},
                     {"seed", m.provenance.seed},
                     {"steps", m.provenance.steps}}},
                   {"experiment", experiment_to_json(m.experiment)}};
  std::ofstream os(dir / "model.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "model.json").string());
  os << j.dump(2) << '\n';
}

inline SavedModel load_model(const std::filesystem::path& dir) {
  std::ifstream is(dir / "model.json");
  if (!is) throw ConfigError("cannot read " + (dir / "model.json").string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError((dir / "model.json").string() + ": " + e.what());
  }
  SavedModel m;
  if (!j.contains("model") || !j.contains("experiment")) throw ConfigError("model.json: missing 'model' or 'experiment'");
  detail::read(j.at("model"), m.model, "model");
  m.experiment = experiment_from_json(j.at("experiment"));
  if (j.contains("provenance")) {
    const auto& p = j.at("provenance");
    m.provenance.method = p.value("method", "");
    m.provenance.config_hash = p.value("config_hash", std::uint64_t{0});
    m.provenance.seed = p.value("seed", std::uint64_t{0});
    m.provenance.steps = p.value("steps", std::size_t{0});
  }
  m.params = load_checkpoint((dir / "model.ckpt").string());
  return m;
}

}  // namespace metaumt
