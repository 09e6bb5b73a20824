#include "mhal/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace mhal {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "configuration errors:";
  for (const auto& p : problems) msg += "\n  - " + p;
  return msg;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

double to_double(const std::string& s) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw InvalidInput("'" + s + "' is not a number");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw InvalidInput("'" + s + "' is not a non-negative integer");
  return v;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(to_u64(s)); }

bool to_bool(const std::string& s) {
  if (s == "true" || s == "on" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "off" || s == "0" || s == "no") return false;
  throw InvalidInput("'" + s + "' is not a boolean");
}

std::vector<std::uint64_t> to_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_u64(trim(item)));
  return out;
}

std::string fmt_seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? "," : "") + std::to_string(seeds[i]);
  return out;
}

GroupNorm to_group_norm(const std::string& s) {
  if (s == "centered_l2") return GroupNorm::kCenteredL2;
  if (s == "softmax") return GroupNorm::kSoftmax;
  throw InvalidInput("'" + s + "' is not a group normalization (centered_l2, softmax)");
}

std::string fmt_group_norm(GroupNorm g) {
  return g == GroupNorm::kSoftmax ? "softmax" : "centered_l2";
}

IndividualF1Mode to_f1_mode(const std::string& s) {
  if (s == "macro") return IndividualF1Mode::kMacro;
  if (s == "pooled") return IndividualF1Mode::kPooled;
  throw InvalidInput("'" + s + "' is not an individual F1 mode (macro, pooled)");
}

using Setter = std::function<void(RunSpec&, const std::string&)>;
using Getter = std::function<std::string(const RunSpec&)>;

struct Key {
  const char* name;
  Setter set;
  Getter get;
};

// Profile and size keys are applied first (see resolve_run_spec).
const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"data.source",
       [](RunSpec& r, const std::string& v) {
         if (v == "synthetic") r.data.kind = DataSourceKind::kSynthetic;
         else if (v == "files") r.data.kind = DataSourceKind::kFiles;
         else throw InvalidInput("'" + v + "' is not a data source (synthetic, files)");
       },
       [](const RunSpec& r) {
         return std::string(r.data.kind == DataSourceKind::kFiles ? "files" : "synthetic");
       }},
      {"data.train", [](RunSpec& r, const std::string& v) { r.data.train = v; },
       [](const RunSpec& r) { return r.data.train.string(); }},
      {"data.dev", [](RunSpec& r, const std::string& v) { r.data.dev = v; },
       [](const RunSpec& r) { return r.data.dev.string(); }},
      {"data.test", [](RunSpec& r, const std::string& v) { r.data.test = v; },
       [](const RunSpec& r) { return r.data.test.string(); }},
      {"synth.seed", [](RunSpec& r, const std::string& v) { r.data.synth_seed = to_u64(v); },
       [](const RunSpec& r) { return std::to_string(r.data.synth_seed); }},
      {"synth.annotators", [](RunSpec& r, const std::string& v) { r.data.synth.n_annotators = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.data.synth.n_annotators); }},
      {"synth.per_instance",
       [](RunSpec& r, const std::string& v) { r.data.synth.annotators_per_instance = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.data.synth.annotators_per_instance); }},
      {"synth.bias_range", [](RunSpec& r, const std::string& v) { r.data.synth.bias_range = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.data.synth.bias_range); }},
      {"synth.noise_min", [](RunSpec& r, const std::string& v) { r.data.synth.noise_min = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.data.synth.noise_min); }},
      {"synth.noise_max", [](RunSpec& r, const std::string& v) { r.data.synth.noise_max = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.data.synth.noise_max); }},
      {"synth.positive_rate",
       [](RunSpec& r, const std::string& v) { r.data.synth.positive_rate = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.data.synth.positive_rate); }},
      {"synth.features", [](RunSpec& r, const std::string& v) { r.data.synth.n_features = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.data.synth.n_features); }},
      {"synth.bins", [](RunSpec& r, const std::string& v) { r.data.synth.n_bins = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.data.synth.n_bins); }},
      {"synth.logit_scale", [](RunSpec& r, const std::string& v) { r.data.synth.logit_scale = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.data.synth.logit_scale); }},
      {"synth.distractors", [](RunSpec& r, const std::string& v) { r.data.synth.n_distractors = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.data.synth.n_distractors); }},
      {"synth.distractor_vocab",
       [](RunSpec& r, const std::string& v) { r.data.synth.distractor_vocab = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.data.synth.distractor_vocab); }},
      {"synth.train_fraction", [](RunSpec& r, const std::string& v) { r.data.train_fraction = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.data.train_fraction); }},
      {"synth.dev_fraction", [](RunSpec& r, const std::string& v) { r.data.dev_fraction = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.data.dev_fraction); }},
      {"experiment.model",
       [](RunSpec& r, const std::string& v) { r.experiment.model_kind = parse_model_kind(v); },
       [](const RunSpec& r) { return to_string(r.experiment.model_kind); }},
      {"experiment.method", [](RunSpec& r, const std::string& v) { r.experiment.method = parse_method(v); },
       [](const RunSpec& r) { return to_string(r.experiment.method); }},
      {"experiment.policy",
       [](RunSpec& r, const std::string& v) {
         if (v == "default") r.experiment.policy.reset();
         else r.experiment.policy = parse_policy(v);
       },
       [](const RunSpec& r) { return to_string(r.experiment.effective_policy()); }},
      {"experiment.seed_budget", [](RunSpec& r, const std::string& v) { r.experiment.seed_budget = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.seed_budget); }},
      {"experiment.round_budget",
       [](RunSpec& r, const std::string& v) { r.experiment.round_budget = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.round_budget); }},
      {"experiment.rounds", [](RunSpec& r, const std::string& v) { r.experiment.n_rounds = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.n_rounds); }},
      {"experiment.seeds", [](RunSpec& r, const std::string& v) { r.experiment.seeds = to_seed_list(v); },
       [](const RunSpec& r) { return fmt_seed_list(r.experiment.seeds); }},
      {"experiment.threads", [](RunSpec& r, const std::string& v) { r.experiment.threads = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.threads); }},
      {"experiment.group_norm",
       [](RunSpec& r, const std::string& v) { r.experiment.group_norm = to_group_norm(v); },
       [](const RunSpec& r) { return fmt_group_norm(r.experiment.group_norm); }},
      {"experiment.bald_passes", [](RunSpec& r, const std::string& v) { r.experiment.bald_passes = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.bald_passes); }},
      {"experiment.individual_f1",
       [](RunSpec& r, const std::string& v) { r.experiment.individual_f1 = to_f1_mode(v); },
       [](const RunSpec& r) {
         return std::string(r.experiment.individual_f1 == IndividualF1Mode::kPooled ? "pooled" : "macro");
       }},
      {"encoder.hash_dim", [](RunSpec& r, const std::string& v) { r.experiment.encoder.hash_dim = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.encoder.hash_dim); }},
      {"encoder.hidden_dim",
       [](RunSpec& r, const std::string& v) { r.experiment.encoder.hidden_dim = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.encoder.hidden_dim); }},
      {"encoder.dropout",
       [](RunSpec& r, const std::string& v) { r.experiment.encoder.dropout_rate = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.experiment.encoder.dropout_rate); }},
      {"train.lr", [](RunSpec& r, const std::string& v) { r.experiment.train.peak_lr = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.experiment.train.peak_lr); }},
      {"train.weight_decay",
       [](RunSpec& r, const std::string& v) { r.experiment.train.weight_decay = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.experiment.train.weight_decay); }},
      {"train.adam_eps", [](RunSpec& r, const std::string& v) { r.experiment.train.adam_eps = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.experiment.train.adam_eps); }},
      {"train.adam_beta1", [](RunSpec& r, const std::string& v) { r.experiment.train.adam_beta1 = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.experiment.train.adam_beta1); }},
      {"train.adam_beta2", [](RunSpec& r, const std::string& v) { r.experiment.train.adam_beta2 = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.experiment.train.adam_beta2); }},
      {"train.grad_clip", [](RunSpec& r, const std::string& v) { r.experiment.train.grad_clip = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.experiment.train.grad_clip); }},
      {"train.batch_size", [](RunSpec& r, const std::string& v) { r.experiment.train.batch_size = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.train.batch_size); }},
      {"train.patience", [](RunSpec& r, const std::string& v) { r.experiment.train.patience = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.train.patience); }},
      {"train.max_epochs", [](RunSpec& r, const std::string& v) { r.experiment.train.max_epochs = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.train.max_epochs); }},
      {"train.class_weights",
       [](RunSpec& r, const std::string& v) { r.experiment.train.class_weights = to_bool(v); },
       [](const RunSpec& r) { return fmt_bool(r.experiment.train.class_weights); }},
      {"train.lr_halving", [](RunSpec& r, const std::string& v) { r.experiment.train.lr_halving = to_bool(v); },
       [](const RunSpec& r) { return fmt_bool(r.experiment.train.lr_halving); }},
      {"train.oversample", [](RunSpec& r, const std::string& v) { r.experiment.train.oversample = to_bool(v); },
       [](const RunSpec& r) { return fmt_bool(r.experiment.train.oversample); }},
      {"dal.epochs", [](RunSpec& r, const std::string& v) { r.experiment.dal.epochs = to_size(v); },
       [](const RunSpec& r) { return std::to_string(r.experiment.dal.epochs); }},
      {"dal.lr", [](RunSpec& r, const std::string& v) { r.experiment.dal.lr = to_double(v); },
       [](const RunSpec& r) { return fmt_double(r.experiment.dal.lr); }},
  };
  return table;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : InvalidInput(join_problems(problems)), problems_(std::move(problems)) {}

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
  KeyValueConfig cfg;
  std::vector<std::string> problems;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      problems.push_back(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      problems.push_back(source + ":" + std::to_string(line_no) + ": empty key");
      continue;
    }
    cfg.entries_[key] = trim(line.substr(eq + 1));
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({"cannot open config file " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

SynthConfig synth_profile(std::string_view profile, std::size_t n_instances) {
  SynthConfig c;
  c.n_instances = n_instances;
  if (profile == "dense6" || profile == "custom") {
    c.n_annotators = 6;
    c.annotators_per_instance = 0;
  } else if (profile == "sparse18") {
    c.n_annotators = 18;
    c.annotators_per_instance = 3;
  } else {
    throw InvalidInput("unknown profile '" + std::string(profile) +
                       "' (expected dense6, sparse18, custom)");
  }
  return c;
}

std::pair<std::size_t, std::size_t> default_budgets(std::string_view profile) {
  if (profile == "sparse18") return {200, 200};
  return {60, 60};
}

RunSpec resolve_run_spec(const KeyValueConfig& cfg) {
  std::vector<std::string> problems;
  RunSpec spec;

  const std::string profile = cfg.get("synth.profile").value_or("dense6");
  std::size_t n_instances = 1250;
  try {
    if (auto n = cfg.get("synth.n_instances")) n_instances = to_size(*n);
    spec.data.synth = synth_profile(profile, n_instances);
    spec.data.profile = profile;
    const auto [seed_b, round_b] = default_budgets(profile);
    spec.experiment.seed_budget = seed_b;
    spec.experiment.round_budget = round_b;
  } catch (const InvalidInput& e) {
    problems.push_back(std::string("synth: ") + e.what());
  }
  if (cfg.get("data.train") && !cfg.get("data.source")) spec.data.kind = DataSourceKind::kFiles;

  std::map<std::string, const Key*> known;
  for (const auto& k : keys()) known.emplace(k.name, &k);
  for (const auto& [key, value] : cfg.entries()) {
    if (key == "synth.profile" || key == "synth.n_instances") continue;
    auto it = known.find(key);
    if (it == known.end()) {
      problems.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      it->second->set(spec, value);
    } catch (const InvalidInput& e) {
      problems.push_back(key + ": " + e.what());
    }
  }

  if (spec.data.kind == DataSourceKind::kFiles) {
    for (const auto& [name, path] :
         {std::pair{"data.train", spec.data.train}, {"data.dev", spec.data.dev},
          {"data.test", spec.data.test}})
      if (path.empty()) problems.push_back(std::string(name) + " is required when data.source = files");
  } else {
    try {
      spec.data.synth.validate();
    } catch (const InvalidInput& e) {
      problems.push_back(e.what());
    }
    const double tf = spec.data.train_fraction, df = spec.data.dev_fraction;
    if (!(tf > 0 && df >= 0 && tf + df < 1))
      problems.push_back("synth fractions must satisfy 0 < train, 0 <= dev, train + dev < 1");
  }
  for (auto& e : spec.experiment.validation_errors()) problems.push_back(std::move(e));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return spec;
}

KeyValueConfig snapshot(const RunSpec& spec) {
  KeyValueConfig out;
  for (const auto& k : keys()) {
    const std::string name = k.name;
    const bool file_key = name == "data.train" || name == "data.dev" || name == "data.test";
    const bool synth_key = name.rfind("synth.", 0) == 0;
    if (spec.data.kind == DataSourceKind::kSynthetic && file_key) continue;
    if (spec.data.kind == DataSourceKind::kFiles && synth_key) continue;
    out.set(name, k.get(spec));
  }
  if (spec.data.kind == DataSourceKind::kSynthetic) {
    out.set("synth.profile", spec.data.profile);
    out.set("synth.n_instances", std::to_string(spec.data.synth.n_instances));
  }
  return out;
}

DatasetSplits load_data(const DataSource& source) {
  if (source.kind == DataSourceKind::kFiles)
    return unify_pools({load_jsonl(source.train, Split::kTrain), load_jsonl(source.dev, Split::kDev),
                        load_jsonl(source.test, Split::kTest)});
  const auto synth = generate_synthetic(source.synth, SeededRng(source.synth_seed));
  return split_dataset(synth.dataset, source.train_fraction, source.dev_fraction);
}

std::string config_hash(const RunSpec& spec) {
  KeyValueConfig snap = snapshot(spec);
  // Thread count does not change results.
  snap.set("experiment.threads", "-");
  std::uint64_t h = fnv1a64(snap.canonical());
  if (spec.data.kind == DataSourceKind::kFiles) {
    for (const auto& path : {spec.data.train, spec.data.dev, spec.data.test}) {
      std::ifstream in(path, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      h = fnv1a64(ss.str(), h);
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mhal
