#include "mhal/metrics.hpp"

namespace mhal {

F1Result f1_binary(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size()) throw InvalidInput("f1_binary: length mismatch");
  if (preds.empty()) throw InvalidInput("f1_binary: empty input");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1 && golds[i] == 1) ++tp;
    else if (preds[i] == 1) ++fp;
    else if (golds[i] == 1) ++fn;
  }
  if (tp + fp == 0 && tp + fn == 0) return {0.0, true};
  // 2PR/(P+R) simplified; zero when tp is zero.
  return {2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn), false};
}

EvalBundle make_eval_bundle(const Classifier& model, const RawDataset& test) {
  EvalBundle bundle;
  bundle.n_annotators = test.annotator_pool().size();
  bundle.single_head = model.is_single_head();
  if (!bundle.single_head && model.n_heads() != bundle.n_annotators)
    throw InvalidInput("model heads do not match the test annotator pool");
  bundle.instances.reserve(test.size());
  for (const auto& rec : test.records()) {
    EvalInstance e;
    const Mat logits = model.forward_heads(rec.text);
    if (bundle.single_head) {
      const Vec p = softmax(logits.col(0));
      e.head_votes = {p(1) > p(0) ? 1 : 0};
      e.model_majority = e.head_votes[0];
      e.model_uncertainty = 1.0 - p.maxCoeff();
    } else {
      e.head_votes.resize(static_cast<std::size_t>(logits.cols()));
      for (Eigen::Index h = 0; h < logits.cols(); ++h)
        e.head_votes[static_cast<std::size_t>(h)] = logits(1, h) > logits(0, h) ? 1 : 0;
      e.model_majority = majority_vote(e.head_votes);
      e.model_uncertainty = variance(std::span<const int>(e.head_votes));
    }
    for (const auto& a : rec.annotations)
      e.annotations.emplace_back(*test.annotator_index(a.annotator), a.label);
    const auto labels = rec.labels();
    e.annotation_majority = majority_vote(labels);
    e.annotation_variance = annotation_disagreement(rec);
    bundle.instances.push_back(std::move(e));
  }
  return bundle;
}

F1Result majority_f1(const EvalBundle& bundle) {
  std::vector<int> preds, golds;
  for (const auto& e : bundle.instances) {
    preds.push_back(e.model_majority);
    golds.push_back(e.annotation_majority);
  }
  return f1_binary(preds, golds);
}

namespace {

int vote_for(const EvalInstance& e, std::size_t annotator, bool single_head) {
  return single_head ? e.head_votes.at(0) : e.head_votes.at(annotator);
}

}  // namespace

F1Result individual_f1(const EvalBundle& bundle, IndividualF1Mode mode) {
  std::vector<std::vector<int>> preds(bundle.n_annotators), golds(bundle.n_annotators);
  for (const auto& e : bundle.instances)
    for (const auto& [a, label] : e.annotations) {
      preds.at(a).push_back(vote_for(e, a, bundle.single_head));
      golds.at(a).push_back(label);
    }

  if (mode == IndividualF1Mode::kPooled) {
    std::vector<int> all_p, all_g;
    for (std::size_t a = 0; a < bundle.n_annotators; ++a) {
      all_p.insert(all_p.end(), preds[a].begin(), preds[a].end());
      all_g.insert(all_g.end(), golds[a].begin(), golds[a].end());
    }
    if (all_p.empty()) throw InvalidInput("individual_f1: no test annotations");
    return f1_binary(all_p, all_g);
  }

  double sum = 0;
  std::size_t counted = 0;
  bool any_undefined = false;
  for (std::size_t a = 0; a < bundle.n_annotators; ++a) {
    if (preds[a].empty()) continue;
    const F1Result r = f1_binary(preds[a], golds[a]);
    any_undefined = any_undefined || r.undefined;
    sum += r.value;
    ++counted;
  }
  if (counted == 0) throw InvalidInput("individual_f1: no annotator has test annotations");
  return {sum / static_cast<double>(counted), any_undefined};
}

PearsonResult uncertainty_correlation(const EvalBundle& bundle) {
  Vec u(static_cast<Eigen::Index>(bundle.instances.size()));
  Vec d(u.size());
  for (std::size_t i = 0; i < bundle.instances.size(); ++i) {
    u(static_cast<Eigen::Index>(i)) = bundle.instances[i].model_uncertainty;
    d(static_cast<Eigen::Index>(i)) = bundle.instances[i].annotation_variance;
  }
  return pearson(u, d);
}

Metrics evaluate(const EvalBundle& bundle, IndividualF1Mode mode) {
  return {majority_f1(bundle), individual_f1(bundle, mode), uncertainty_correlation(bundle)};
}

DevEvaluator dev_majority_f1(const RawDataset& dev) {
  std::vector<int> golds;
  for (const auto& rec : dev.records()) golds.push_back(majority_vote(rec.labels()));
  return [&dev, golds = std::move(golds)](const Classifier& model) {
    std::vector<int> preds;
    preds.reserve(golds.size());
    for (const auto& rec : dev.records()) preds.push_back(predict_majority(model, rec.text));
    return f1_binary(preds, golds).value;
  };
}

}  // namespace mhal
