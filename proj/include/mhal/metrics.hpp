#pragma once

#include "mhal/data.hpp"
#include "mhal/model.hpp"
#include "mhal/numerics.hpp"

#include <span>
#include <utility>
#include <vector>

namespace mhal {

struct F1Result {
  double value = 0.0;
  /// Precision and recall were both undefined; value is reported as 0.
  bool undefined = false;
};

/// Positive-class F1.
F1Result f1_binary(std::span<const int> preds, std::span<const int> golds);

/// Model outputs and gold annotations for one test instance.
struct EvalInstance {
  int model_majority = 0;
  /// One vote per annotator head; a single entry for single-head models.
  std::vector<int> head_votes;
  double model_uncertainty = 0.0;
  /// (annotator pool index, label)
  std::vector<std::pair<std::size_t, int>> annotations;
  int annotation_majority = 0;
  double annotation_variance = 0.0;
};

struct EvalBundle {
  std::vector<EvalInstance> instances;
  std::size_t n_annotators = 0;
  bool single_head = false;
};

/// Multi-head uncertainty is the head-vote variance; single-head
/// uncertainty is 1 - max softmax probability.
EvalBundle make_eval_bundle(const Classifier& model, const RawDataset& test);

F1Result majority_f1(const EvalBundle& bundle);

enum class IndividualF1Mode {
  kMacro,   // unweighted mean of per-annotator F1
  kPooled,  // one F1 over every (head vote, annotation) pair
};

/// Each annotator's head against that annotator's labels. A single-head
/// model's prediction stands in for every annotator.
F1Result individual_f1(const EvalBundle& bundle, IndividualF1Mode mode = IndividualF1Mode::kMacro);

PearsonResult uncertainty_correlation(const EvalBundle& bundle);

struct Metrics {
  F1Result majority;
  F1Result individual;
  PearsonResult correlation;
};

Metrics evaluate(const EvalBundle& bundle, IndividualF1Mode mode = IndividualF1Mode::kMacro);

/// Majority F1 on a dev split, for early stopping.
DevEvaluator dev_majority_f1(const RawDataset& dev);

}  // namespace mhal
