#include "mhal/cli.hpp"

#include "mhal/config.hpp"
#include "mhal/data.hpp"
#include "mhal/report.hpp"
#include "mhal/results.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>

namespace mhal {

namespace {

struct GenDataArgs {
  std::string profile = "dense6";
  std::size_t n_instances = 1120;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::optional<std::size_t> annotators, per_instance;
  std::optional<double> bias_range, noise_min, noise_max, positive_rate;
  double train_fraction = 0.8, dev_fraction = 0.1;
};

struct RunArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> model, method, policy, seeds;
  std::optional<std::size_t> rounds, threads;
  std::string results_root;
  bool force = false;
};

struct ReportArgs {
  std::vector<std::string> dirs;
  std::string out_dir = "report";
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out, std::ostream& err) {
  SynthConfig cfg;
  try {
    cfg = synth_profile(a.profile, a.n_instances);
    if (a.profile != "custom" &&
        (a.annotators || a.per_instance || a.bias_range || a.noise_min || a.noise_max))
      throw InvalidInput("annotator parameters require --profile custom");
    if (a.annotators) cfg.n_annotators = *a.annotators;
    if (a.per_instance) cfg.annotators_per_instance = *a.per_instance;
    if (a.bias_range) cfg.bias_range = *a.bias_range;
    if (a.noise_min) cfg.noise_min = *a.noise_min;
    if (a.noise_max) cfg.noise_max = *a.noise_max;
    if (a.positive_rate) cfg.positive_rate = *a.positive_rate;
    cfg.validate();
  } catch (const InvalidInput& e) {
    err << "gen-data: " << e.what() << '\n';
    return kExitValidation;
  }
  try {
    const auto synth = generate_synthetic(cfg, SeededRng(a.seed));
    const auto splits = split_dataset(synth.dataset, a.train_fraction, a.dev_fraction);
    const std::filesystem::path dir(a.out_dir);
    std::filesystem::create_directories(dir);
    save_jsonl(splits.train, dir / "train.jsonl");
    save_jsonl(splits.dev, dir / "dev.jsonl");
    save_jsonl(splits.test, dir / "test.jsonl");
    out << "wrote " << splits.train.size() << '/' << splits.dev.size() << '/'
        << splits.test.size() << " train/dev/test records to " << dir.string() << '\n';
  } catch (const InvalidInput& e) {
    err << "gen-data: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "gen-data: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

std::filesystem::path results_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MHAL_RESULTS_DIR"); env && *env) return env;
  return "results";
}

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  RunSpec spec;
  std::string hash;
  DatasetSplits data;
  try {
    KeyValueConfig cfg;
    if (!a.config_path.empty()) cfg = KeyValueConfig::load(a.config_path);
    // Flags override file values.
    std::vector<std::string> problems;
    for (const auto& kv : a.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        problems.push_back("--set expects key=value, got '" + kv + "'");
        continue;
      }
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!problems.empty()) throw ConfigError(problems);
    if (a.model) cfg.set("experiment.model", *a.model);
    if (a.method) cfg.set("experiment.method", *a.method);
    if (a.policy) cfg.set("experiment.policy", *a.policy);
    if (a.seeds) cfg.set("experiment.seeds", *a.seeds);
    if (a.rounds) cfg.set("experiment.rounds", std::to_string(*a.rounds));
    if (a.threads) cfg.set("experiment.threads", std::to_string(*a.threads));
    spec = resolve_run_spec(cfg);
    hash = config_hash(spec);
    data = load_data(spec.data);
  } catch (const InvalidInput& e) {
    err << "run: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "run: " << e.what() << '\n';
    return kExitRuntime;
  }

  const auto dir = results_root(a.results_root) / hash;
  if (std::filesystem::exists(dir / kManifestJson) && !a.force) {
    err << "run: " << dir.string() << " already holds results for this config; use --force to overwrite\n";
    return kExitValidation;
  }
  std::filesystem::remove(dir / kFailureMarker);

  try {
    const ExperimentResult result = run_experiment(spec.experiment, data);
    write_results(dir, spec, hash, result);
    out << dir.string() << '\n';
    return kExitOk;
  } catch (const ExperimentFailure& e) {
    try {
      write_results(dir, spec, hash, e.partial());
      std::ofstream(dir / kFailureMarker) << e.what();
    } catch (const std::exception& inner) {
      err << "run: could not save partial results: " << inner.what() << '\n';
    }
    err << "run: " << e.what();
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "run: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::filesystem::path> dirs(a.dirs.begin(), a.dirs.end());
  try {
    const ReportOutput r = make_report(dirs, a.out_dir);
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    out << r.combined_csv.string() << '\n' << r.curves_svg.string() << '\n';
    return kExitOk;
  } catch (const InvalidInput& e) {
    err << "report: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "report: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-head active learning simulator", "mhal"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write synthetic train/dev/test JSONL files");
  gen_cmd->add_option("--profile", gen.profile, "dense6, sparse18 or custom")
      ->check(CLI::IsMember({"dense6", "sparse18", "custom"}));
  gen_cmd->add_option("--n-instances", gen.n_instances, "Total records across the three splits")
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out-dir", gen.out_dir)->required();
  gen_cmd->add_option("--annotators", gen.annotators, "custom: number of annotators");
  gen_cmd->add_option("--per-instance", gen.per_instance, "custom: annotators per record (0 = all)");
  gen_cmd->add_option("--bias-range", gen.bias_range, "custom: threshold spread");
  gen_cmd->add_option("--noise-min", gen.noise_min, "custom: smallest annotator noise");
  gen_cmd->add_option("--noise-max", gen.noise_max, "custom: largest annotator noise");
  gen_cmd->add_option("--positive-rate", gen.positive_rate, "Target raw positive rate");
  gen_cmd->add_option("--train-fraction", gen.train_fraction);
  gen_cmd->add_option("--dev-fraction", gen.dev_fraction);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run an active-learning experiment");
  run_cmd->add_option("config", run.config_path, "Key-value config file");
  run_cmd->add_option("--set", run.sets, "Override a config key (key=value), repeatable");
  run_cmd->add_option("--model", run.model);
  run_cmd->add_option("--method", run.method);
  run_cmd->add_option("--policy", run.policy);
  run_cmd->add_option("--seeds", run.seeds, "Comma-separated replication seeds");
  run_cmd->add_option("--rounds", run.rounds);
  run_cmd->add_option("--threads", run.threads);
  run_cmd->add_option("--results-root", run.results_root, "Defaults to $MHAL_RESULTS_DIR or ./results");
  run_cmd->add_flag("--force", run.force, "Overwrite existing results for the same config");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Combine result directories into a table and curves");
  report_cmd->add_option("dirs", report.dirs, "Results directories")->required();
  report_cmd->add_option("--out-dir", report.out_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << app.help();
    return kExitValidation;
  }

  if (*gen_cmd) return cmd_gen_data(gen, out, err);
  if (*run_cmd) return cmd_run(run, out, err);
  return cmd_report(report, out, err);
}

}  // namespace mhal
