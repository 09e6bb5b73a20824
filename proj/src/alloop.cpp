#include "mhal/alloop.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

namespace mhal {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kMultiHead: return "multi_head";
    case ModelKind::kSingleMajority: return "single_majority";
    case ModelKind::kSingleAnnotation: return "single_annotation";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "multi_head") return ModelKind::kMultiHead;
  if (name == "single_majority") return ModelKind::kSingleMajority;
  if (name == "single_annotation") return ModelKind::kSingleAnnotation;
  throw InvalidInput("unknown model kind '" + std::string(name) +
                     "' (expected multi_head, single_majority, single_annotation)");
}

Policy ExperimentConfig::effective_policy() const {
  return policy.value_or(default_policy(method));
}

std::vector<std::string> ExperimentConfig::validation_errors() const {
  std::vector<std::string> errors;
  if (seed_budget < 1) errors.push_back("seed_budget must be >= 1");
  if (round_budget < 1) errors.push_back("round_budget must be >= 1");
  if (n_rounds < 1) errors.push_back("rounds must be >= 1");
  if (seeds.empty()) errors.push_back("at least one replication seed is required");
  if (threads < 1) errors.push_back("threads must be >= 1");
  const bool multi = model_kind == ModelKind::kMultiHead;
  if (uses_multi_head(method) != multi)
    errors.push_back("method '" + to_string(method) + "' is incompatible with model '" +
                     to_string(model_kind) + "'");
  const Policy p = effective_policy();
  if (is_pair_level(method) && p != Policy::kPairwise)
    errors.push_back("method '" + to_string(method) + "' scores pairs and only supports the pairwise policy");
  if (!is_pair_level(method) && p == Policy::kPairwise)
    errors.push_back("method '" + to_string(method) + "' scores instances; use label_div or sample_div");
  if (model_kind == ModelKind::kSingleMajority && p != Policy::kLabelDiversityFirst)
    errors.push_back("single_majority claims whole instances and requires label_div");
  if (method == Method::kBald && !(encoder.dropout_rate > 0))
    errors.push_back("bald needs encoder dropout > 0");
  if (method == Method::kBald && bald_passes < 2) errors.push_back("bald_passes must be >= 2");
  try {
    encoder.validate();
  } catch (const InvalidInput& e) {
    errors.push_back(e.what());
  }
  try {
    train.validate();
  } catch (const InvalidInput& e) {
    errors.push_back(e.what());
  }
  return errors;
}

void ExperimentConfig::validate() const {
  const auto errors = validation_errors();
  if (errors.empty()) return;
  std::string msg = "invalid experiment config:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw InvalidInput(msg);
}

std::vector<std::size_t> build_seed_set(PairPool& pool, ModelKind kind, std::size_t budget,
                                        SeededRng rng) {
  if (budget > pool.remaining())
    throw InvalidInput("seed budget " + std::to_string(budget) + " exceeds the " +
                       std::to_string(pool.remaining()) + " available pairs");
  std::vector<std::size_t> chosen;
  if (kind != ModelKind::kSingleMajority) {
    const auto open = pool.unlabeled_ids();
    for (std::size_t k : rng.sample_without_replacement(open.size(), budget))
      chosen.push_back(open[k]);
  } else {
    auto instances = pool.open_instances();
    rng.shuffle(instances);
    std::size_t left = budget;
    for (std::size_t i : instances) {
      if (left == 0) break;
      auto ids = pool.unlabeled_pairs_of(i);
      if (ids.size() > left) {
        auto pick = rng.sample_without_replacement(ids.size(), left);
        std::sort(pick.begin(), pick.end());
        std::vector<std::size_t> subset;
        for (std::size_t k : pick) subset.push_back(ids[k]);
        ids = std::move(subset);
      }
      left -= ids.size();
      chosen.insert(chosen.end(), ids.begin(), ids.end());
    }
  }
  for (std::size_t id : chosen) pool.mark_labeled(id);
  return chosen;
}

std::vector<Example> training_examples(ModelKind kind, const RawDataset& data,
                                       const PairPool& pool) {
  std::vector<Example> out;
  const auto& records = data.records();
  if (kind == ModelKind::kSingleMajority) {
    for (std::size_t i = 0; i < pool.n_instances(); ++i) {
      std::vector<int> labels;
      for (std::size_t id : pool.pairs_of(i))
        if (pool.is_labeled(id)) labels.push_back(pool.pair(id).label);
      if (!labels.empty()) out.push_back({records[i].text, 0, majority_vote(labels)});
    }
    return out;
  }
  for (std::size_t id : pool.labeled_ids()) {
    const auto& p = pool.pair(id);
    out.push_back({records[p.instance].text, kind == ModelKind::kMultiHead ? p.annotator : 0,
                   p.label});
  }
  return out;
}

ActiveLearner::ActiveLearner(const ExperimentConfig& cfg, const DatasetSplits& data,
                             std::uint64_t seed)
    : cfg_(cfg), data_(data), seed_(seed), pool_(expand_pairs(data.train)), model_(fresh_model()) {
  cfg_.validate();
  build_seed_set(pool_, cfg_.model_kind, cfg_.seed_budget, SeededRng(seed_).substream("seed-set"));
}

Classifier ActiveLearner::fresh_model() const {
  // Same initialization every round, so rounds and methods start alike.
  const SeededRng init = SeededRng(seed_).substream("model-init");
  if (cfg_.model_kind == ModelKind::kMultiHead)
    return Classifier::multi_head(cfg_.encoder, data_.train.annotator_pool(), init);
  return Classifier::single_head(cfg_.encoder, init);
}

RoundReport ActiveLearner::run_round() {
  if (finished_) throw std::logic_error("run_round called after the experiment finished");
  const auto start = std::chrono::steady_clock::now();
  const std::string tag = std::to_string(round_);
  SeededRng rng(seed_);

  TrainConfig tcfg = cfg_.train;
  tcfg.class_weights = tcfg.class_weights && cfg_.model_kind == ModelKind::kMultiHead;
  const auto examples = training_examples(cfg_.model_kind, data_.train, pool_);
  DevEvaluator dev;
  if (data_.dev.size() > 0) dev = dev_majority_f1(data_.dev);
  FitResult fitted = fit(fresh_model(), examples, dev, tcfg, rng.substream("train/" + tag));
  model_ = std::move(fitted.model);

  const Metrics m = evaluate(make_eval_bundle(model_, data_.test), cfg_.individual_f1);
  RoundReport report;
  report.round = round_;
  report.cost = pool_.spent_budget();
  report.majority_f1 = m.majority.value;
  report.individual_f1 = m.individual.value;
  report.uncertainty_pearson = m.correlation.value;
  report.f1_undefined = m.majority.undefined;
  report.pearson_degenerate = m.correlation.degenerate;
  report.exhausted = pool_.exhausted();
  report.epochs = fitted.state.epoch;

  const bool last = round_ + 1 >= cfg_.n_rounds;
  if (last || pool_.exhausted()) {
    finished_ = true;
  } else {
    SeededRng acq = rng.substream("acquire/" + tag);
    const AcquisitionContext ctx{data_.train, pool_, model_, cfg_.group_norm, cfg_.bald_passes,
                                 cfg_.dal};
    auto scores = score_candidates(cfg_.method, ctx, acq);
    const QueryBatch batch =
        select_batch(std::move(scores), cfg_.effective_policy(), pool_, cfg_.round_budget, acq);
    for (std::size_t id : batch.pair_ids) pool_.mark_labeled(id);
  }
  ++round_;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

SeedRun run_seed(const ExperimentConfig& cfg, const DatasetSplits& data, std::uint64_t seed) {
  ActiveLearner learner(cfg, data, seed);
  SeedRun run{seed, {}};
  while (!learner.finished()) run.rounds.push_back(learner.run_round());
  return run;
}

std::vector<AggregateRow> aggregate(const std::vector<SeedRun>& runs) {
  std::map<std::size_t, std::vector<const RoundReport*>> by_round;
  for (const auto& run : runs)
    for (const auto& r : run.rounds) by_round[r.round].push_back(&r);
  std::vector<AggregateRow> rows;
  for (const auto& [round, reports] : by_round) {
    AggregateRow row;
    row.round = round;
    row.n_seeds = reports.size();
    auto stats = [&](auto field, double& mean, double& sd) {
      Vec v(static_cast<Eigen::Index>(reports.size()));
      for (std::size_t i = 0; i < reports.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = field(*reports[i]);
      mean = v.mean();
      sd = std::sqrt(variance(v));
    };
    double unused = 0;
    stats([](const RoundReport& r) { return static_cast<double>(r.cost); }, row.cost_mean, unused);
    stats([](const RoundReport& r) { return r.majority_f1; }, row.majority_f1_mean, row.majority_f1_std);
    stats([](const RoundReport& r) { return r.individual_f1; }, row.individual_f1_mean,
          row.individual_f1_std);
    stats([](const RoundReport& r) { return r.uncertainty_pearson; }, row.pearson_mean,
          row.pearson_std);
    rows.push_back(row);
  }
  return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const DatasetSplits& data) {
  cfg.validate();
  const std::size_t n = cfg.seeds.size();
  std::vector<std::optional<SeedRun>> runs(n);
  std::vector<std::string> errors(n);
  auto run_one = [&](std::size_t i) {
    try {
      runs[i] = run_seed(cfg, data, cfg.seeds[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  if (cfg.threads <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) run_one(i);
  } else {
    // Each seed owns all of its state; results land in seed order.
    std::mutex next_mu;
    std::size_t next = 0;
    auto worker = [&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(next_mu);
          if (next >= n) return;
          i = next++;
        }
        run_one(i);
      }
    };
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < std::min(cfg.threads, n); ++t) workers.emplace_back(worker);
    for (auto& t : workers) t.join();
  }

  ExperimentResult result;
  std::string failure;
  for (std::size_t i = 0; i < n; ++i) {
    if (runs[i]) result.runs.push_back(std::move(*runs[i]));
    else failure += "seed " + std::to_string(cfg.seeds[i]) + ": " + errors[i] + "\n";
  }
  result.aggregate = aggregate(result.runs);
  if (!failure.empty()) throw ExperimentFailure(failure, std::move(result));
  return result;
}

std::size_t exhaustion_round(std::size_t pairs, std::size_t seed_budget, std::size_t round_budget) {
  if (pairs <= seed_budget) return 0;
  return (pairs - seed_budget + round_budget - 1) / round_budget;
}

}  // namespace mhal
