#pragma once

#include "mhal/acquisition.hpp"
#include "mhal/data.hpp"
#include "mhal/metrics.hpp"
#include "mhal/model.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mhal {

enum class ModelKind {
  kMultiHead,         // one head per annotator, trained on raw pairs
  kSingleMajority,    // one head, trained on per-instance majority votes
  kSingleAnnotation,  // one head, trained on raw pairs (repeated labeling)
};

std::string to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view name);

struct ExperimentConfig {
  ModelKind model_kind = ModelKind::kMultiHead;
  Method method = Method::kRandMultiHead;
  /// Unset means the method's default policy.
  std::optional<Policy> policy;
  std::size_t seed_budget = 60;
  std::size_t round_budget = 60;
  std::size_t n_rounds = 25;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
  /// Worker threads for replication seeds.
  std::size_t threads = 1;

  EncoderConfig encoder;
  TrainConfig train;
  GroupNorm group_norm = GroupNorm::kCenteredL2;
  std::size_t bald_passes = 10;
  DalConfig dal;
  IndividualF1Mode individual_f1 = IndividualF1Mode::kMacro;

  Policy effective_policy() const;
  /// Every violation, empty when valid.
  std::vector<std::string> validation_errors() const;
  void validate() const;
};

struct RoundReport {
  std::size_t round = 0;
  /// Annotations revealed when the model of this round was trained.
  std::size_t cost = 0;
  double majority_f1 = 0.0;
  double individual_f1 = 0.0;
  double uncertainty_pearson = 0.0;
  bool f1_undefined = false;
  bool pearson_degenerate = false;
  /// Every pair is labeled; no further rounds follow.
  bool exhausted = false;
  std::size_t epochs = 0;
  double wall_seconds = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<RoundReport> rounds;
};

struct AggregateRow {
  std::size_t round = 0;
  std::size_t n_seeds = 0;
  double cost_mean = 0.0;
  double majority_f1_mean = 0.0, majority_f1_std = 0.0;
  double individual_f1_mean = 0.0, individual_f1_std = 0.0;
  double pearson_mean = 0.0, pearson_std = 0.0;
};

struct ExperimentResult {
  std::vector<SeedRun> runs;
  std::vector<AggregateRow> aggregate;
};

/// Reveals the seed set. Pair-trained kinds get `budget` uniform random
/// pairs; single-majority claims random whole instances, clamping the last
/// one to a random annotator subset. Returns the revealed pair ids.
std::vector<std::size_t> build_seed_set(PairPool& pool, ModelKind kind, std::size_t budget,
                                        SeededRng rng);

/// Training examples for the labeled part of `pool`. Texts point into `data`.
std::vector<Example> training_examples(ModelKind kind, const RawDataset& data,
                                       const PairPool& pool);

/// State of one replication: the pool, the round counter and the last model.
class ActiveLearner {
 public:
  ActiveLearner(const ExperimentConfig& cfg, const DatasetSplits& data, std::uint64_t seed);

  /// Train from scratch on the labeled pairs, evaluate on test, then (unless
  /// this is the last round or the pool is exhausted) acquire the next batch.
  RoundReport run_round();

  bool finished() const { return finished_; }
  std::size_t round() const { return round_; }
  const PairPool& pool() const { return pool_; }
  const Classifier& model() const { return model_; }

 private:
  Classifier fresh_model() const;

  const ExperimentConfig& cfg_;
  const DatasetSplits& data_;
  std::uint64_t seed_;
  PairPool pool_;
  Classifier model_;
  std::size_t round_ = 0;
  bool finished_ = false;
};

SeedRun run_seed(const ExperimentConfig& cfg, const DatasetSplits& data, std::uint64_t seed);

/// Mean and population stddev per round over seeds that reached it.
std::vector<AggregateRow> aggregate(const std::vector<SeedRun>& runs);

/// Runs every replication seed (in parallel when cfg.threads > 1). Throws
/// ExperimentFailure if any seed fails.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const DatasetSplits& data);

/// A replication failed. Carries the seeds that completed.
class ExperimentFailure : public std::runtime_error {
 public:
  ExperimentFailure(const std::string& what, ExperimentResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const ExperimentResult& partial() const { return partial_; }

 private:
  ExperimentResult partial_;
};

/// Round at which a pool of `pairs` is fully labeled.
std::size_t exhaustion_round(std::size_t pairs, std::size_t seed_budget, std::size_t round_budget);

}  // namespace mhal
