#pragma once

#include "mhal/alloop.hpp"
#include "mhal/data.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mhal {

/// Carries every problem found, one per entry.
class ConfigError : public InvalidInput {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Flat `section.key = value` text. Blank lines and `#` comments are
/// ignored; a later assignment replaces an earlier one.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Sorted `key = value` lines.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> entries_;
};

enum class DataSourceKind { kFiles, kSynthetic };

struct DataSource {
  DataSourceKind kind = DataSourceKind::kSynthetic;
  std::filesystem::path train, dev, test;
  std::string profile = "dense6";
  std::uint64_t synth_seed = 0;
  SynthConfig synth;
  double train_fraction = 0.8;
  double dev_fraction = 0.1;
};

struct RunSpec {
  DataSource data;
  ExperimentConfig experiment;
};

/// dense6 mirrors a densely annotated corpus (6 annotators, all label every
/// instance); sparse18 a sparse one (18 annotators, 3 per instance).
/// `custom` starts from dense6 settings.
SynthConfig synth_profile(std::string_view profile, std::size_t n_instances);

/// Default (seed, round) budgets for a profile: (60, 60) dense, (200, 200) sparse.
std::pair<std::size_t, std::size_t> default_budgets(std::string_view profile);

/// Resolves defaults, then file values. Throws ConfigError listing every
/// invalid or unknown key and every semantic violation.
RunSpec resolve_run_spec(const KeyValueConfig& cfg);

/// Every setting of `spec`, defaults included, as key-value pairs.
KeyValueConfig snapshot(const RunSpec& spec);

DatasetSplits load_data(const DataSource& source);

/// 16 hex digits over the canonical snapshot plus the content of any data files.
std::string config_hash(const RunSpec& spec);

}  // namespace mhal
