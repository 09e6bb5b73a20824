#pragma once

#include "mhal/numerics.hpp"
#include "mhal/rng.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mhal {

enum class Split { kTrain, kDev, kTest };

std::string to_string(Split split);

struct Annotation {
  std::string annotator;
  int label = 0;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct AnnotationRecord {
  std::string instance_id;
  std::string text;
  std::vector<Annotation> annotations;

  std::vector<int> labels() const;
};

/// Records of one split plus the annotator pool they draw from.
///
/// The pool is kept sorted so annotator indices are stable. It may be a
/// strict superset of the annotators present (see `with_annotator_pool`),
/// which is how train/dev/test share one head layout.
class RawDataset {
 public:
  RawDataset() = default;
  RawDataset(std::vector<AnnotationRecord> records, Split split);

  const std::vector<AnnotationRecord>& records() const { return records_; }
  const std::vector<std::string>& annotator_pool() const { return pool_; }
  Split split() const { return split_; }
  std::size_t size() const { return records_.size(); }

  /// Index of `annotator` in the pool, or nullopt.
  std::optional<std::size_t> annotator_index(const std::string& annotator) const;

  /// Same records re-indexed against a larger pool. Throws if an annotator
  /// of this dataset is missing from `pool`.
  RawDataset with_annotator_pool(std::vector<std::string> pool) const;

 private:
  void validate() const;
  void rebuild_index();

  std::vector<AnnotationRecord> records_;
  std::vector<std::string> pool_;
  std::unordered_map<std::string, std::size_t> pool_index_;
  Split split_ = Split::kTrain;
};

/// Sorted union of the annotator pools.
std::vector<std::string> merge_annotator_pools(std::span<const RawDataset* const> datasets);

/// Reads one record per line: {"id", "text", "annotations": [{"annotator", "label"}]}.
RawDataset load_jsonl(const std::filesystem::path& path, Split split = Split::kTrain);
void save_jsonl(const RawDataset& ds, const std::filesystem::path& path);

enum class PairStatus { kUnlabeled, kLabeled };

struct AnnotationPair {
  std::size_t instance = 0;   // record index in the source dataset
  std::size_t annotator = 0;  // annotator pool index
  int label = 0;
  PairStatus status = PairStatus::kUnlabeled;
};

/// Every (instance, annotator) annotation of a dataset with its labeling
/// status. Status only ever moves unlabeled -> labeled.
class PairPool {
 public:
  PairPool() = default;
  PairPool(std::vector<AnnotationPair> pairs, std::size_t n_instances);

  std::size_t size() const { return pairs_.size(); }
  std::size_t n_instances() const { return by_instance_.size(); }
  std::size_t spent_budget() const { return spent_; }
  std::size_t remaining() const { return pairs_.size() - spent_; }
  bool exhausted() const { return spent_ == pairs_.size(); }

  const AnnotationPair& pair(std::size_t id) const { return pairs_.at(id); }
  const std::vector<AnnotationPair>& pairs() const { return pairs_; }
  /// Pair ids belonging to `instance` in annotator order.
  const std::vector<std::size_t>& pairs_of(std::size_t instance) const {
    return by_instance_.at(instance);
  }
  std::optional<std::size_t> find(std::size_t instance, std::size_t annotator) const;

  bool is_labeled(std::size_t id) const {
    return pairs_.at(id).status == PairStatus::kLabeled;
  }
  std::vector<std::size_t> unlabeled_pairs_of(std::size_t instance) const;
  std::vector<std::size_t> unlabeled_ids() const;
  std::vector<std::size_t> labeled_ids() const;
  /// Instances with at least one unlabeled pair.
  std::vector<std::size_t> open_instances() const;

  /// Reveals a label. Throws if the pair is already labeled.
  void mark_labeled(std::size_t id);

 private:
  std::vector<AnnotationPair> pairs_;
  std::vector<std::vector<std::size_t>> by_instance_;
  std::size_t spent_ = 0;
};

/// One pair per annotation, all unlabeled.
PairPool expand_pairs(const RawDataset& ds);

/// Modal label; an exact tie resolves to 1.
int majority_vote(std::span<const int> labels);

/// Population variance of a record's labels.
double annotation_disagreement(const AnnotationRecord& record);

template <typename T>
struct OversampleResult {
  std::vector<T> items;
  /// One of the classes was absent; items are the unchanged input.
  bool degenerate = false;
};

/// Duplicates random minority-class items (with replacement) until both
/// classes have the same count. Originals come first, copies after.
template <typename T, typename LabelOf>
OversampleResult<T> oversample(std::vector<T> items, LabelOf label_of, SeededRng& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < items.size(); ++i)
    (label_of(items[i]) == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) return {std::move(items), true};
  const auto& minority = pos.size() < neg.size() ? pos : neg;
  const std::size_t deficit =
      std::max(pos.size(), neg.size()) - std::min(pos.size(), neg.size());
  items.reserve(items.size() + deficit);
  for (std::size_t i = 0; i < deficit; ++i)
    items.push_back(items[minority[rng.uniform_index(minority.size())]]);
  return {std::move(items), false};
}

struct SynthConfig {
  std::size_t n_instances = 1000;
  std::size_t n_annotators = 6;
  /// 0 = dense (every annotator labels every instance); otherwise the number
  /// of annotators drawn per instance.
  std::size_t annotators_per_instance = 0;
  /// Threshold offsets are uniform in [-bias_range, bias_range].
  double bias_range = 0.2;
  double noise_min = 0.02;
  double noise_max = 0.15;
  double positive_rate = 0.15;
  std::size_t n_features = 6;
  std::size_t n_bins = 8;
  /// Scale of the latent logit before the sigmoid.
  double logit_scale = 1.5;
  std::size_t n_distractors = 4;
  std::size_t distractor_vocab = 200;
  std::string id_prefix = "syn";

  bool dense() const { return annotators_per_instance == 0; }
  /// Throws InvalidInput listing every violation.
  void validate() const;
};

struct AnnotatorProfile {
  std::string id;
  double threshold = 0.0;
  double noise = 0.0;
};

struct SyntheticDataset {
  RawDataset dataset;
  std::vector<double> latent_scores;
  std::vector<AnnotatorProfile> annotators;
};

/// Threshold-noise annotator simulation over a latent score in [0, 1].
///
/// Each instance draws latent features; its text lists one bin token per
/// feature plus random distractor tokens, so a bag-of-words encoder can
/// recover the score. Annotator a labels 1 iff score + N(0, noise_a) >
/// threshold_a. Threshold offsets are shared-shifted so the expected raw
/// positive rate equals `positive_rate`.
SyntheticDataset generate_synthetic(const SynthConfig& cfg, SeededRng rng);

struct DatasetSplits {
  RawDataset train, dev, test;
};

/// Contiguous split in record order; the three splits share one annotator pool.
DatasetSplits split_dataset(const RawDataset& ds, double train_fraction,
                            double dev_fraction);

/// Re-indexes the three splits against their merged annotator pool.
DatasetSplits unify_pools(DatasetSplits splits);

}  // namespace mhal
