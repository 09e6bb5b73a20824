#pragma once

#include "mhal/alloop.hpp"
#include "mhal/config.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mhal {

inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr const char* kResultsCsv = "results.csv";
inline constexpr const char* kSummaryJson = "summary.json";
inline constexpr const char* kManifestJson = "manifest.json";
inline constexpr const char* kFailureMarker = "FAILED";

/// Header: method,policy,seed,round,cost,majority_f1,individual_f1,uncertainty_pearson
std::string results_csv(const ExperimentConfig& cfg, const ExperimentResult& result);

/// Config snapshot, per-round aggregates and per-seed flags. Contains no
/// timing, so it is reproducible.
std::string summary_json(const RunSpec& spec, const ExperimentResult& result);

struct RunManifest {
  std::string config_hash;
  KeyValueConfig config;
  std::vector<std::string> artifacts;
  std::string tool_version = kToolVersion;
};

std::string manifest_json(const RunManifest& manifest);
/// Throws InvalidInput naming the directory if the manifest is missing or malformed.
RunManifest read_manifest(const std::filesystem::path& results_dir);

/// Writes CSV, summary and manifest into `dir` (created if needed).
void write_results(const std::filesystem::path& dir, const RunSpec& spec, const std::string& hash,
                   const ExperimentResult& result);

}  // namespace mhal
