#include "mhal/results.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mhal {

namespace {

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

std::string results_csv(const ExperimentConfig& cfg, const ExperimentResult& result) {
  std::ostringstream out;
  out << "method,policy,seed,round,cost,majority_f1,individual_f1,uncertainty_pearson\n";
  const std::string method = to_string(cfg.method);
  const std::string policy = to_string(cfg.effective_policy());
  for (const auto& run : result.runs)
    for (const auto& r : run.rounds)
      out << method << ',' << policy << ',' << run.seed << ',' << r.round << ',' << r.cost << ','
          << fixed6(r.majority_f1) << ',' << fixed6(r.individual_f1) << ','
          << fixed6(r.uncertainty_pearson) << '\n';
  return out.str();
}

std::string summary_json(const RunSpec& spec, const ExperimentResult& result) {
  nlohmann::ordered_json j;
  j["model"] = to_string(spec.experiment.model_kind);
  j["method"] = to_string(spec.experiment.method);
  j["policy"] = to_string(spec.experiment.effective_policy());
  nlohmann::ordered_json config;
  const KeyValueConfig snap = snapshot(spec);
  for (const auto& [k, v] : snap.entries()) config[k] = v;
  j["config"] = config;
  j["aggregate"] = nlohmann::ordered_json::array();
  for (const auto& row : result.aggregate) {
    j["aggregate"].push_back({{"round", row.round},
                              {"n_seeds", row.n_seeds},
                              {"cost_mean", row.cost_mean},
                              {"majority_f1_mean", row.majority_f1_mean},
                              {"majority_f1_std", row.majority_f1_std},
                              {"individual_f1_mean", row.individual_f1_mean},
                              {"individual_f1_std", row.individual_f1_std},
                              {"uncertainty_pearson_mean", row.pearson_mean},
                              {"uncertainty_pearson_std", row.pearson_std}});
  }
  j["seeds"] = nlohmann::ordered_json::array();
  for (const auto& run : result.runs) {
    nlohmann::ordered_json s;
    s["seed"] = run.seed;
    s["rounds"] = run.rounds.size();
    s["exhausted"] = !run.rounds.empty() && run.rounds.back().exhausted;
    std::vector<std::size_t> undefined_f1, degenerate_r;
    for (const auto& r : run.rounds) {
      if (r.f1_undefined) undefined_f1.push_back(r.round);
      if (r.pearson_degenerate) degenerate_r.push_back(r.round);
    }
    s["rounds_with_undefined_f1"] = undefined_f1;
    s["rounds_with_degenerate_pearson"] = degenerate_r;
    j["seeds"].push_back(s);
  }
  return j.dump(2) + "\n";
}

std::string manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["config_hash"] = m.config_hash;
  j["tool_version"] = m.tool_version;
  nlohmann::ordered_json config;
  for (const auto& [k, v] : m.config.entries()) config[k] = v;
  j["config"] = config;
  j["artifacts"] = m.artifacts;
  return j.dump(2) + "\n";
}

RunManifest read_manifest(const std::filesystem::path& results_dir) {
  const auto path = results_dir / kManifestJson;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput(results_dir.string() + ": missing " + kManifestJson);
  try {
    const auto j = nlohmann::json::parse(in);
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) m.config.set(k, v.get<std::string>());
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(results_dir.string() + ": corrupt " + kManifestJson + " (" + e.what() + ")");
  }
}

void write_results(const std::filesystem::path& dir, const RunSpec& spec, const std::string& hash,
                   const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  write_file(dir / kResultsCsv, results_csv(spec.experiment, result));
  write_file(dir / kSummaryJson, summary_json(spec, result));
  RunManifest m;
  m.config_hash = hash;
  m.config = snapshot(spec);
  m.artifacts = {kResultsCsv, kSummaryJson};
  write_file(dir / kManifestJson, manifest_json(m));
}

}  // namespace mhal
