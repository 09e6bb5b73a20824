#include "mhal/cli.hpp"
#include "mhal/config.hpp"
#include "mhal/report.hpp"
#include "mhal/results.hpp"
#include "fixtures.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace mhal;

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mhal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const char* kTinyConfig = R"(# tiny experiment
synth.n_instances = 60
synth.seed = 3
experiment.method = group
experiment.seed_budget = 30
experiment.round_budget = 30
experiment.rounds = 2
experiment.seeds = 0,1
encoder.hash_dim = 64
encoder.hidden_dim = 8
train.lr = 0.01
train.max_epochs = 2
)";

}  // namespace

TEST_CASE("key-value parsing") {
  const auto cfg = KeyValueConfig::parse("a.b = 1\n# comment\n\n  c.d=two words  # trailing\na.b = 3\n");
  CHECK(cfg.get("a.b") == "3");
  CHECK(cfg.get("c.d") == "two words");
  CHECK_FALSE(cfg.get("x").has_value());
  CHECK(cfg.canonical() == "a.b = 3\nc.d = two words\n");
  try {
    KeyValueConfig::parse("ok = 1\nbroken line\n= 5\n", "f.conf");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    REQUIRE(e.problems().size() == 2);
    CHECK(e.problems()[0].find("f.conf:2") != std::string::npos);
    CHECK(e.problems()[1].find("f.conf:3") != std::string::npos);
  }
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/x.conf"), ConfigError);
}

TEST_CASE("resolve_run_spec applies defaults and values") {
  const RunSpec d = resolve_run_spec({});
  CHECK(d.data.kind == DataSourceKind::kSynthetic);
  CHECK(d.experiment.seed_budget == 60);
  CHECK(d.experiment.round_budget == 60);
  CHECK(d.experiment.n_rounds == 25);
  CHECK(d.experiment.seeds == std::vector<std::uint64_t>{0, 1, 2, 3});
  CHECK(d.experiment.train.peak_lr == 2e-5);
  CHECK(d.experiment.encoder.hash_dim == 2048);

  const RunSpec s = resolve_run_spec(KeyValueConfig::parse(
      "synth.profile = sparse18\nexperiment.method = vote\nexperiment.policy = sample_div\n"
      "train.lr = 0.001\nexperiment.group_norm = softmax\nexperiment.individual_f1 = pooled\n"));
  CHECK(s.experiment.seed_budget == 200);
  CHECK(s.data.synth.n_annotators == 18);
  CHECK(s.data.synth.annotators_per_instance == 3);
  CHECK(s.experiment.method == Method::kVote);
  CHECK(s.experiment.effective_policy() == Policy::kSampleDiversityFirst);
  CHECK(s.experiment.train.peak_lr == 0.001);
  CHECK(s.experiment.group_norm == GroupNorm::kSoftmax);
  CHECK(s.experiment.individual_f1 == IndividualF1Mode::kPooled);

  const RunSpec f = resolve_run_spec(KeyValueConfig::parse("data.train = a\ndata.dev = b\ndata.test = c\n"));
  CHECK(f.data.kind == DataSourceKind::kFiles);
}

TEST_CASE("resolve_run_spec lists every violation") {
  try {
    resolve_run_spec(KeyValueConfig::parse(
        "experiment.model = single_majority\nexperiment.method = indi\ntrain.lr = fast\nbogus.key = 1\n"));
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    const std::string all = e.what();
    CHECK(e.problems().size() >= 3);
    CHECK(all.find("incompatible") != std::string::npos);
    CHECK(all.find("train.lr") != std::string::npos);
    CHECK(all.find("bogus.key") != std::string::npos);
  }
  CHECK_THROWS_AS(resolve_run_spec(KeyValueConfig::parse("data.source = files\n")), ConfigError);
  CHECK_THROWS_AS(resolve_run_spec(KeyValueConfig::parse("synth.profile = weird\n")), ConfigError);
}

TEST_CASE("snapshot round-trips through resolve") {
  const RunSpec s = resolve_run_spec(KeyValueConfig::parse(kTinyConfig));
  const KeyValueConfig snap = snapshot(s);
  const RunSpec again = resolve_run_spec(snap);
  CHECK(snapshot(again).canonical() == snap.canonical());
  CHECK(config_hash(again) == config_hash(s));
  CHECK(config_hash(s).size() == 16);

  RunSpec threads = s;
  threads.experiment.threads = 4;
  CHECK(config_hash(threads) == config_hash(s));
  RunSpec other = s;
  other.experiment.n_rounds = 3;
  CHECK(config_hash(other) != config_hash(s));
}

TEST_CASE("results files") {
  const RunSpec spec = resolve_run_spec(KeyValueConfig::parse(kTinyConfig));
  ExperimentResult result;
  result.runs.push_back({0, {RoundReport{0, 30, 0.5, 0.25, 0.125}, RoundReport{1, 60, 0.6, 0.3, -0.2}}});
  result.aggregate = aggregate(result.runs);
  const std::string csv = results_csv(spec.experiment, result);
  CHECK(csv ==
        "method,policy,seed,round,cost,majority_f1,individual_f1,uncertainty_pearson\n"
        "group,label_div,0,0,30,0.500000,0.250000,0.125000\n"
        "group,label_div,0,1,60,0.600000,0.300000,-0.200000\n");

  const auto summary = nlohmann::json::parse(summary_json(spec, result));
  CHECK(summary["method"] == "group");
  CHECK(summary["aggregate"].size() == 2);
  CHECK(summary["config"]["experiment.rounds"] == "2");

  fixtures::TempDir tmp("results");
  write_results(tmp.path(), spec, "abc", result);
  const RunManifest m = read_manifest(tmp.path());
  CHECK(m.config_hash == "abc");
  CHECK(m.tool_version == kToolVersion);
  CHECK(m.config.canonical() == snapshot(spec).canonical());
  CHECK(m.artifacts == std::vector<std::string>{kResultsCsv, kSummaryJson});

  fixtures::TempDir empty("no-manifest");
  try {
    read_manifest(empty.path());
    FAIL("expected an error");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find(empty.path().string()) != std::string::npos);
  }
  std::ofstream(empty.path() / kManifestJson) << "{ not json";
  CHECK_THROWS_AS(read_manifest(empty.path()), InvalidInput);
}

TEST_CASE("gen-data writes reproducible files") {
  fixtures::TempDir tmp("gen");
  const auto a = tmp.path() / "a", b = tmp.path() / "b";
  REQUIRE(cli({"gen-data", "--profile", "dense6", "--n-instances", "1120", "--seed", "4", "--out-dir", a.string()}).code == 0);
  REQUIRE(cli({"gen-data", "--profile", "dense6", "--n-instances", "1120", "--seed", "4", "--out-dir", b.string()}).code == 0);
  std::size_t total = 0;
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl"}) {
    CHECK(read_text(a / f) == read_text(b / f));
    const RawDataset ds = load_jsonl(a / f);
    total += ds.size();
    for (const auto& r : ds.records()) CHECK(r.annotations.size() == 6);
  }
  CHECK(total == 1120);

  const auto s = tmp.path() / "s";
  REQUIRE(cli({"gen-data", "--profile", "sparse18", "--n-instances", "300", "--out-dir", s.string()}).code == 0);
  const RawDataset train = load_jsonl(s / "train.jsonl");
  for (const auto& r : train.records()) CHECK(r.annotations.size() == 3);
  CHECK(train.annotator_pool().size() <= 18);

  CHECK(cli({"gen-data", "--profile", "dense6", "--bias-range", "0.3", "--out-dir", s.string()}).code == 1);
  CHECK(cli({"gen-data", "--profile", "custom", "--annotators", "4", "--per-instance", "9", "--out-dir", s.string()}).code == 1);
  CHECK(cli({"gen-data", "--profile", "nope", "--out-dir", s.string()}).code == 1);
  CHECK(cli({"gen-data"}).code == 1);
}

TEST_CASE("run writes results, refuses to overwrite and is byte reproducible") {
  fixtures::TempDir tmp("run");
  const auto conf = tmp.path() / "tiny.conf";
  std::ofstream(conf) << kTinyConfig;
  const auto root1 = tmp.path() / "r1", root2 = tmp.path() / "r2";

  const auto first = cli({"run", conf.string(), "--results-root", root1.string()});
  REQUIRE(first.code == 0);
  const std::filesystem::path dir(first.out.substr(0, first.out.find('\n')));
  CHECK(std::filesystem::exists(dir / kResultsCsv));
  CHECK(std::filesystem::exists(dir / kSummaryJson));
  CHECK(std::filesystem::exists(dir / kManifestJson));
  CHECK(dir.parent_path() == root1);

  const auto again = cli({"run", conf.string(), "--results-root", root1.string()});
  CHECK(again.code == 1);
  CHECK(again.err.find("--force") != std::string::npos);
  CHECK(cli({"run", conf.string(), "--results-root", root1.string(), "--force"}).code == 0);

  const auto second = cli({"run", conf.string(), "--results-root", root2.string(), "--threads", "2"});
  REQUIRE(second.code == 0);
  const std::filesystem::path dir2(second.out.substr(0, second.out.find('\n')));
  CHECK(dir.filename() == dir2.filename());
  CHECK(read_text(dir / kResultsCsv) == read_text(dir2 / kResultsCsv));
  auto without_threads = [](std::string s) {
    const auto at = s.find("\"experiment.threads\"");
    return s.erase(at, s.find('\n', at) - at);
  };
  CHECK(without_threads(read_text(dir / kSummaryJson)) == without_threads(read_text(dir2 / kSummaryJson)));

  const auto rows = read_results_csv(dir / kResultsCsv);
  CHECK(rows.size() == 4);

  const auto env_root = tmp.path() / "env";
  ::setenv("MHAL_RESULTS_DIR", env_root.string().c_str(), 1);
  const auto via_env = cli({"run", conf.string(), "--rounds", "1"});
  ::unsetenv("MHAL_RESULTS_DIR");
  REQUIRE(via_env.code == 0);
  CHECK(via_env.out.find(env_root.string()) == 0);
}

TEST_CASE("run reports validation errors with exit code 1") {
  fixtures::TempDir tmp("run-bad");
  const auto r = cli({"run", "--model", "single_majority", "--method", "indi", "--results-root", tmp.path().string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("incompatible") != std::string::npos);
  CHECK(cli({"run", "--set", "nonsense", "--results-root", tmp.path().string()}).code == 1);
  CHECK(cli({"run", (tmp.path() / "missing.conf").string()}).code == 1);
  CHECK(cli({"run", "--set", "data.train=/nonexistent.jsonl", "--set", "data.dev=/x", "--set", "data.test=/y",
             "--results-root", tmp.path().string()})
            .code == 1);
}

TEST_CASE("run on files writes a failure marker when a seed fails") {
  fixtures::TempDir tmp("run-fail");
  REQUIRE(cli({"gen-data", "--n-instances", "40", "--out-dir", (tmp.path() / "d").string()}).code == 0);
  const auto r = cli({"run", "--set", "data.train=" + (tmp.path() / "d" / "train.jsonl").string(),
                      "--set", "data.dev=" + (tmp.path() / "d" / "dev.jsonl").string(),
                      "--set", "data.test=" + (tmp.path() / "d" / "test.jsonl").string(),
                      "--set", "experiment.seed_budget=1000", "--results-root", (tmp.path() / "out").string()});
  CHECK(r.code == 2);
  bool marker = false;
  for (const auto& e : std::filesystem::recursive_directory_iterator(tmp.path() / "out"))
    marker = marker || e.path().filename() == kFailureMarker;
  CHECK(marker);
}

TEST_CASE("report combines runs and warns on budget mismatch") {
  fixtures::TempDir tmp("report");
  const auto conf = tmp.path() / "tiny.conf";
  std::ofstream(conf) << kTinyConfig;
  const auto a = cli({"run", conf.string(), "--results-root", tmp.path().string()});
  const auto b = cli({"run", conf.string(), "--method", "vote", "--results-root", tmp.path().string()});
  const auto c = cli({"run", conf.string(), "--method", "rand_mh", "--set", "experiment.round_budget=20",
                      "--results-root", tmp.path().string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  REQUIRE(c.code == 0);
  auto dir_of = [](const CliResult& r) { return r.out.substr(0, r.out.find('\n')); };

  const auto out = tmp.path() / "rep";
  const auto two = cli({"report", dir_of(a), dir_of(b), "--out-dir", out.string()});
  REQUIRE(two.code == 0);
  CHECK(two.err.find("warning") == std::string::npos);
  const std::string combined = read_text(out / "combined.csv");
  CHECK(combined.find(",group,") != std::string::npos);
  CHECK(combined.find(",vote,") != std::string::npos);
  const std::string svg = read_text(out / "curves.svg");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("</svg>") != std::string::npos);

  const auto one = cli({"report", dir_of(a), "--out-dir", (tmp.path() / "one").string()});
  CHECK(one.code == 0);

  const auto mismatch = cli({"report", dir_of(a), dir_of(c), "--out-dir", (tmp.path() / "mm").string()});
  CHECK(mismatch.code == 0);
  CHECK(mismatch.err.find("warning") != std::string::npos);
  CHECK(std::filesystem::exists(tmp.path() / "mm" / "combined.csv"));

  const auto bad = cli({"report", tmp.path().string(), "--out-dir", (tmp.path() / "bad").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find(tmp.path().string()) != std::string::npos);
}

TEST_CASE("report summaries") {
  std::vector<ResultRow> rows{{"group", "label_div", 0, 0, 60, 0.5, 0.4, 0.1},
                              {"group", "label_div", 1, 0, 60, 0.7, 0.6, 0.3},
                              {"group", "label_div", 0, 1, 120, 0.6, 0.5, 0.2}};
  const Series s = summarize("x", rows);
  REQUIRE(s.points.size() == 2);
  CHECK(s.points[0].cost == 60);
  CHECK(s.points[0].mean[0] == doctest::Approx(0.6));
  CHECK(s.points[0].stddev[0] == doctest::Approx(0.1));
  CHECK(s.points[1].stddev[0] == 0.0);
  const std::string svg = render_svg(std::vector<Series>{s});
  CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("help and unknown subcommands") {
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
}
