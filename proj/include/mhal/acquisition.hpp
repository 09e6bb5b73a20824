#pragma once

#include "mhal/data.hpp"
#include "mhal/model.hpp"
#include "mhal/numerics.hpp"
#include "mhal/rng.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mhal {

enum class Method {
  kRandMultiHead,  // rand_mh
  kIndividual,     // indi
  kGroup,          // group
  kVote,           // vote
  kMix,            // mix
  kRandSingleHead, // rand_sh
  kEntropy,        // ent
  kBald,           // bald
  kDal,            // dal
};

enum class Policy {
  kPairwise,              // pair-level top-K (rand_mh, indi, mix)
  kLabelDiversityFirst,   // label_div
  kSampleDiversityFirst,  // sample_div
};

std::string to_string(Method m);
std::string to_string(Policy p);
/// Throws InvalidInput on unknown names.
Method parse_method(std::string_view name);
Policy parse_policy(std::string_view name);

inline constexpr Method kAllMethods[] = {
    Method::kRandMultiHead, Method::kIndividual,     Method::kGroup,
    Method::kVote,          Method::kMix,            Method::kRandSingleHead,
    Method::kEntropy,       Method::kBald,           Method::kDal};

bool uses_multi_head(Method m);
/// Scores (instance, annotator) pairs rather than instances.
bool is_pair_level(Method m);

enum class GroupNorm {
  kCenteredL2,  // center over classes, then divide by the L2 norm
  kSoftmax,     // per-head probabilities
};

// Scores from precomputed logits (2 x H, one column per head).

double individual_entropy(const Mat& logits, std::size_t head);
double group_entropy(const Mat& logits, GroupNorm norm = GroupNorm::kCenteredL2);
double vote_variance(const Mat& logits);

double score_individual(const Classifier& model, std::string_view text, std::size_t head);
double score_group(const Classifier& model, std::string_view text,
                   GroupNorm norm = GroupNorm::kCenteredL2);
double score_vote(const Classifier& model, std::string_view text);
double score_mix(const Classifier& model, std::string_view text, std::size_t head,
                 GroupNorm norm = GroupNorm::kCenteredL2);
double score_single_entropy(const Classifier& model, std::string_view text);

/// Mutual information between prediction and dropout mask: entropy of the
/// mean pass minus the mean pass entropy, clipped at 0.
double bald_from_passes(std::span<const Vec> passes);
double score_bald(const Classifier& model, std::string_view text, std::size_t passes,
                  SeededRng& rng);

struct DalConfig {
  std::size_t epochs = 100;
  double lr = 0.01;
};

/// Logistic discriminator separating labeled (0) from unlabeled (1)
/// representations. Class-balanced loss, zero init, full-batch Adam.
class DalDiscriminator {
 public:
  DalDiscriminator(std::span<const Vec> labeled, std::span<const Vec> unlabeled,
                   const DalConfig& cfg = {});
  /// Probability that `rep` comes from the unlabeled pool.
  double prob_unlabeled(const Vec& rep) const;
  const Vec& weights() const { return w_; }
  double bias() const { return b_; }

 private:
  Vec w_;
  double b_ = 0.0;
};

double score_dal(std::span<const Vec> labeled, std::span<const Vec> unlabeled,
                 const Vec& instance, const DalConfig& cfg = {});

/// Everything a scorer may look at.
struct AcquisitionContext {
  const RawDataset& data;
  const PairPool& pool;
  const Classifier& model;
  GroupNorm group_norm = GroupNorm::kCenteredL2;
  std::size_t bald_passes = 10;
  DalConfig dal;
};

/// Scores every candidate: unlabeled pairs for pair-level methods, open
/// instances otherwise. Random and BALD scores draw from `rng`.
std::vector<ScoredKey> score_candidates(Method method, const AcquisitionContext& ctx,
                                        SeededRng& rng);

struct QueryBatch {
  std::vector<std::size_t> pair_ids;
  std::size_t cost = 0;
  /// No unlabeled pair was available.
  bool empty_pool = false;
};

/// Greedy selection under an annotation budget of `budget` pairs.
QueryBatch select_batch(std::vector<ScoredKey> scores, Policy policy, const PairPool& pool,
                        std::size_t budget, SeededRng& rng);

/// Default policy for a method: pairwise for pair-level methods, otherwise
/// label diversity first.
Policy default_policy(Method m);

}  // namespace mhal
