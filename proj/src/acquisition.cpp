#include "mhal/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mhal {

namespace {

struct MethodName {
  Method method;
  const char* name;
};

constexpr MethodName kMethodNames[] = {
    {Method::kRandMultiHead, "rand_mh"}, {Method::kIndividual, "indi"},
    {Method::kGroup, "group"},           {Method::kVote, "vote"},
    {Method::kMix, "mix"},               {Method::kRandSingleHead, "rand_sh"},
    {Method::kEntropy, "ent"},           {Method::kBald, "bald"},
    {Method::kDal, "dal"}};

}  // namespace

std::string to_string(Method m) {
  for (const auto& [method, name] : kMethodNames)
    if (method == m) return name;
  return "?";
}

std::string to_string(Policy p) {
  switch (p) {
    case Policy::kPairwise: return "pairwise";
    case Policy::kLabelDiversityFirst: return "label_div";
    case Policy::kSampleDiversityFirst: return "sample_div";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (const auto& [method, n] : kMethodNames)
    if (name == n) return method;
  throw InvalidInput("unknown acquisition method '" + std::string(name) +
                     "' (expected rand_mh, indi, group, vote, mix, rand_sh, ent, bald, dal)");
}

Policy parse_policy(std::string_view name) {
  if (name == "label_div") return Policy::kLabelDiversityFirst;
  if (name == "sample_div") return Policy::kSampleDiversityFirst;
  if (name == "pairwise") return Policy::kPairwise;
  throw InvalidInput("unknown policy '" + std::string(name) +
                     "' (expected label_div, sample_div, pairwise)");
}

bool uses_multi_head(Method m) {
  switch (m) {
    case Method::kRandMultiHead:
    case Method::kIndividual:
    case Method::kGroup:
    case Method::kVote:
    case Method::kMix:
      return true;
    default:
      return false;
  }
}

bool is_pair_level(Method m) {
  return m == Method::kRandMultiHead || m == Method::kIndividual || m == Method::kMix;
}

Policy default_policy(Method m) {
  return is_pair_level(m) ? Policy::kPairwise : Policy::kLabelDiversityFirst;
}

double individual_entropy(const Mat& logits, std::size_t head) {
  if (head >= static_cast<std::size_t>(logits.cols()))
    throw InvalidInput("unknown head " + std::to_string(head));
  return entropy(softmax(logits.col(static_cast<Eigen::Index>(head))));
}

double group_entropy(const Mat& logits, GroupNorm norm) {
  Vec group = Vec::Zero(logits.rows());
  for (Eigen::Index h = 0; h < logits.cols(); ++h) {
    if (norm == GroupNorm::kSoftmax) {
      group += softmax(logits.col(h));
    } else {
      const Vec centered = logits.col(h).array() - logits.col(h).mean();
      group += centered / (centered.norm() + 1e-12);
    }
  }
  return entropy(softmax(group));
}

double vote_variance(const Mat& logits) {
  Vec votes(logits.cols());
  for (Eigen::Index h = 0; h < logits.cols(); ++h) votes(h) = logits(1, h) > logits(0, h) ? 1.0 : 0.0;
  return variance(votes);
}

double score_individual(const Classifier& model, std::string_view text, std::size_t head) {
  if (head >= model.n_heads()) throw InvalidInput("unknown head " + std::to_string(head));
  return individual_entropy(model.forward_heads(text), head);
}

double score_group(const Classifier& model, std::string_view text, GroupNorm norm) {
  return group_entropy(model.forward_heads(text), norm);
}

double score_vote(const Classifier& model, std::string_view text) {
  return vote_variance(model.forward_heads(text));
}

double score_mix(const Classifier& model, std::string_view text, std::size_t head,
                 GroupNorm norm) {
  const Mat logits = model.forward_heads(text);
  return individual_entropy(logits, head) + group_entropy(logits, norm);
}

double score_single_entropy(const Classifier& model, std::string_view text) {
  return individual_entropy(model.forward_heads(text), 0);
}

double bald_from_passes(std::span<const Vec> passes) {
  if (passes.empty()) throw InvalidInput("bald: no passes");
  Vec mean = Vec::Zero(passes.front().size());
  double mean_entropy = 0;
  for (const Vec& p : passes) {
    mean += p;
    mean_entropy += entropy(p);
  }
  const auto t = static_cast<double>(passes.size());
  mean /= t;
  mean_entropy /= t;
  // Renormalize against accumulated rounding before the simplex check.
  mean /= mean.sum();
  return std::max(0.0, entropy(mean) - mean_entropy);
}

double score_bald(const Classifier& model, std::string_view text, std::size_t passes,
                  SeededRng& rng) {
  const auto probs = mc_dropout_passes(model, text, passes, rng);
  return bald_from_passes(probs);
}

DalDiscriminator::DalDiscriminator(std::span<const Vec> labeled, std::span<const Vec> unlabeled,
                                   const DalConfig& cfg) {
  if (labeled.empty() || unlabeled.empty())
    throw InvalidInput("DAL needs at least one labeled and one unlabeled representation");
  const Eigen::Index dim = labeled.front().size();
  w_ = Vec::Zero(dim);
  Vec m_w = Vec::Zero(dim), v_w = Vec::Zero(dim);
  double m_b = 0, v_b = 0;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  // Each class carries half of the total loss mass.
  const double w_lab = 0.5 / static_cast<double>(labeled.size());
  const double w_unl = 0.5 / static_cast<double>(unlabeled.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Vec g_w = Vec::Zero(dim);
    double g_b = 0;
    auto accumulate = [&](const Vec& x, double target, double weight) {
      const double p = 1.0 / (1.0 + std::exp(-(w_.dot(x) + b_)));
      const double d = weight * (p - target);
      g_w += d * x;
      g_b += d;
    };
    for (const Vec& x : labeled) accumulate(x, 0.0, w_lab);
    for (const Vec& x : unlabeled) accumulate(x, 1.0, w_unl);

    m_w = beta1 * m_w + (1 - beta1) * g_w;
    v_w = beta2 * v_w + (1 - beta2) * g_w.cwiseAbs2();
    m_b = beta1 * m_b + (1 - beta1) * g_b;
    v_b = beta2 * v_b + (1 - beta2) * g_b * g_b;
    const double bc1 = 1 - std::pow(beta1, static_cast<double>(epoch));
    const double bc2 = 1 - std::pow(beta2, static_cast<double>(epoch));
    w_.array() -= cfg.lr * (m_w.array() / bc1) / ((v_w.array() / bc2).sqrt() + eps);
    b_ -= cfg.lr * (m_b / bc1) / (std::sqrt(v_b / bc2) + eps);
  }
}

double DalDiscriminator::prob_unlabeled(const Vec& rep) const {
  return 1.0 / (1.0 + std::exp(-(w_.dot(rep) + b_)));
}

double score_dal(std::span<const Vec> labeled, std::span<const Vec> unlabeled,
                 const Vec& instance, const DalConfig& cfg) {
  return DalDiscriminator(labeled, unlabeled, cfg).prob_unlabeled(instance);
}

std::vector<ScoredKey> score_candidates(Method method, const AcquisitionContext& ctx,
                                        SeededRng& rng) {
  if (uses_multi_head(method) == ctx.model.is_single_head())
    throw InvalidInput("method '" + to_string(method) + "' does not match the model kind");
  const auto& records = ctx.data.records();
  std::vector<ScoredKey> out;

  if (is_pair_level(method)) {
    for (std::size_t instance : ctx.pool.open_instances()) {
      const auto open = ctx.pool.unlabeled_pairs_of(instance);
      Mat logits;
      double group = 0;
      if (method != Method::kRandMultiHead) {
        logits = ctx.model.forward_heads(records[instance].text);
        if (method == Method::kMix) group = group_entropy(logits, ctx.group_norm);
      }
      for (std::size_t id : open) {
        const std::size_t a = ctx.pool.pair(id).annotator;
        double s = 0;
        if (method == Method::kRandMultiHead)
          s = rng.uniform();
        else
          s = individual_entropy(logits, a) + group;
        out.push_back({{instance, a}, s});
      }
    }
    return out;
  }

  const auto open = ctx.pool.open_instances();
  if (method == Method::kDal) {
    std::vector<Vec> labeled, unlabeled;
    for (std::size_t i = 0; i < ctx.pool.n_instances(); ++i) {
      const bool any_labeled = std::any_of(ctx.pool.pairs_of(i).begin(), ctx.pool.pairs_of(i).end(),
                                           [&](std::size_t id) { return ctx.pool.is_labeled(id); });
      if (any_labeled) labeled.push_back(ctx.model.encode(records[i].text));
    }
    std::vector<Vec> open_reps;
    for (std::size_t i : open) open_reps.push_back(ctx.model.encode(records[i].text));
    const DalDiscriminator disc(labeled, open_reps, ctx.dal);
    for (std::size_t k = 0; k < open.size(); ++k)
      out.push_back({{open[k], PairKey::kNoAnnotator}, disc.prob_unlabeled(open_reps[k])});
    return out;
  }

  for (std::size_t instance : open) {
    const std::string& text = records[instance].text;
    double s = 0;
    switch (method) {
      case Method::kRandSingleHead: s = rng.uniform(); break;
      case Method::kEntropy: s = score_single_entropy(ctx.model, text); break;
      case Method::kBald: {
        SeededRng local = rng.substream("bald/" + std::to_string(instance));
        s = score_bald(ctx.model, text, ctx.bald_passes, local);
        break;
      }
      case Method::kGroup: s = score_group(ctx.model, text, ctx.group_norm); break;
      case Method::kVote: s = score_vote(ctx.model, text); break;
      default: break;
    }
    out.push_back({{instance, PairKey::kNoAnnotator}, s});
  }
  return out;
}

QueryBatch select_batch(std::vector<ScoredKey> scores, Policy policy, const PairPool& pool,
                        std::size_t budget, SeededRng& rng) {
  if (budget == 0) throw InvalidInput("select_batch: budget must be >= 1");
  QueryBatch batch;
  if (pool.remaining() == 0 || scores.empty()) {
    batch.empty_pool = true;
    return batch;
  }
  const bool pair_keys = scores.front().key.annotator != PairKey::kNoAnnotator;
  if ((policy == Policy::kPairwise) != pair_keys)
    throw InvalidInput("policy '" + to_string(policy) + "' does not match the candidate level");

  if (policy == Policy::kPairwise) {
    for (const PairKey& key : top_k(std::move(scores), budget).keys) {
      const auto id = pool.find(key.instance, key.annotator);
      if (!id || pool.is_labeled(*id)) throw InvalidInput("candidate is not an unlabeled pair");
      batch.pair_ids.push_back(*id);
    }
    batch.cost = batch.pair_ids.size();
    return batch;
  }

  const auto ranked = top_k(std::move(scores), std::numeric_limits<std::size_t>::max()).keys;
  std::size_t left = budget;
  if (policy == Policy::kLabelDiversityFirst) {
    for (const PairKey& key : ranked) {
      if (left == 0) break;
      auto open = pool.unlabeled_pairs_of(key.instance);
      if (open.size() > left) {
        auto pick = rng.sample_without_replacement(open.size(), left);
        std::sort(pick.begin(), pick.end());
        std::vector<std::size_t> subset;
        for (std::size_t k : pick) subset.push_back(open[k]);
        open = std::move(subset);
      }
      left -= open.size();
      batch.pair_ids.insert(batch.pair_ids.end(), open.begin(), open.end());
    }
  } else {
    // One random annotator per instance in score order; further sweeps only
    // when the budget outlasts the open instances.
    std::map<std::size_t, std::vector<std::size_t>> open;
    for (const PairKey& key : ranked) open[key.instance] = pool.unlabeled_pairs_of(key.instance);
    bool progress = true;
    while (left > 0 && progress) {
      progress = false;
      for (const PairKey& key : ranked) {
        if (left == 0) break;
        auto& ids = open[key.instance];
        if (ids.empty()) continue;
        const std::size_t k = rng.uniform_index(ids.size());
        batch.pair_ids.push_back(ids[k]);
        ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(k));
        --left;
        progress = true;
      }
    }
  }
  batch.cost = batch.pair_ids.size();
  return batch;
}

}  // namespace mhal
