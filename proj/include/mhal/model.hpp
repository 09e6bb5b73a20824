#pragma once

#include "mhal/numerics.hpp"
#include "mhal/rng.hpp"

#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mhal {

struct EncoderConfig {
  std::size_t hash_dim = 2048;
  std::size_t hidden_dim = 128;
  double dropout_rate = 0.1;

  void validate() const;
};

/// Hashed bag of whitespace tokens, L2-normalized. Indices are sorted and
/// unique.
struct SparseFeatures {
  std::vector<Eigen::Index> index;
  std::vector<double> value;
};

SparseFeatures hash_features(std::string_view text, std::size_t hash_dim);

/// All trainable tensors. Head h owns rows 2h and 2h+1 of `head_w` and the
/// matching entries of `head_b`.
struct Parameters {
  Mat enc_w;   // hidden x hash
  Vec enc_b;   // hidden
  Mat head_w;  // 2H x hidden
  Vec head_b;  // 2H

  /// Same shapes, all zero.
  Parameters zeros_like() const;
  std::size_t count() const;

  /// Calls f(tensor_view, is_weight) on each tensor in a fixed order, where
  /// tensor_view is a flat Eigen::Map over the storage.
  template <typename F>
  void for_each(F&& f) {
    f(Eigen::Map<Vec>(enc_w.data(), enc_w.size()), true);
    f(Eigen::Map<Vec>(enc_b.data(), enc_b.size()), false);
    f(Eigen::Map<Vec>(head_w.data(), head_w.size()), true);
    f(Eigen::Map<Vec>(head_b.data(), head_b.size()), false);
  }
};

enum class ForwardMode { kEval, kDropout };

/// Feature-hashing MLP encoder shared by one or more two-logit heads.
///
/// A multi-head model has one head per annotator (named by annotator id);
/// a single-head model is the same structure with one head.
class Classifier {
 public:
  static Classifier multi_head(const EncoderConfig& cfg, std::vector<std::string> annotators,
                               SeededRng rng);
  static Classifier single_head(const EncoderConfig& cfg, SeededRng rng);

  const EncoderConfig& config() const { return cfg_; }
  std::size_t n_heads() const { return heads_.size(); }
  const std::vector<std::string>& head_names() const { return heads_; }
  bool is_single_head() const { return single_; }

  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  /// Pre-activation of the hidden layer.
  Vec hidden_preactivation(const SparseFeatures& x) const;

  /// Hidden representation. Dropout is applied only in kDropout mode, in
  /// which case `rng` must be non-null.
  Vec encode(const SparseFeatures& x, ForwardMode mode = ForwardMode::kEval,
             SeededRng* rng = nullptr) const;
  Vec encode(std::string_view text, ForwardMode mode = ForwardMode::kEval,
             SeededRng* rng = nullptr) const;

  /// 2 x H matrix; column h holds the logits of head h.
  Mat head_logits(const Vec& representation) const;
  Mat forward_heads(std::string_view text) const;

 private:
  Classifier(EncoderConfig cfg, std::vector<std::string> heads, bool single, SeededRng rng);
  friend Classifier load_checkpoint(const std::filesystem::path& path);

  EncoderConfig cfg_;
  std::vector<std::string> heads_;
  bool single_ = false;
  Parameters params_;
};

using MultiHeadModel = Classifier;
using SingleHeadModel = Classifier;

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;

  double operator[](int label) const { return label == 1 ? positive : negative; }
};

/// w_c = N / (2 N_c). Falls back to unit weights if a class is absent.
ClassWeights class_weights(std::span<const int> labels);

/// One annotation routed to a head.
struct Example {
  std::string_view text;
  std::size_t head = 0;
  int label = 0;
};

struct LossResult {
  double loss = 0.0;
  Parameters grad;
};

/// Summed weighted cross-entropy of each example at its own head, with
/// analytic gradients. Heads without examples get exactly zero gradient.
/// Dropout is applied when `dropout_rng` is non-null.
LossResult loss(const Classifier& model, std::span<const Example> batch,
                const ClassWeights& weights, SeededRng* dropout_rng = nullptr);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-6;
  double weight_decay = 0.01;
};

/// Decoupled weight decay Adam. Decay applies to weight matrices only.
class AdamW {
 public:
  AdamW(const Parameters& like, AdamWConfig cfg);
  void step(Parameters& params, Parameters& grad, double lr);
  long steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  Parameters m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  double weight_decay = 0.01;
  double adam_eps = 1e-6;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  /// Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 0.0;
  double peak_lr = 2e-5;
  std::size_t batch_size = 32;
  std::size_t patience = 5;
  std::size_t max_epochs = 40;
  bool class_weights = true;
  bool lr_halving = true;
  bool oversample = true;

  void validate() const;
};

/// Learning-rate schedule and early-stopping bookkeeping across epochs.
struct TrainState {
  std::size_t epoch = 0;
  double best_dev_f1 = -std::numeric_limits<double>::infinity();
  double last_dev_f1 = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  std::size_t evals_without_improvement = 0;
  std::size_t halvings = 0;
  bool stopped_early = false;

  struct Outcome {
    bool improved = false;
    bool halved = false;
    bool stop = false;
  };

  /// Improvement means strictly above the best so far. A strict drop below
  /// the previous evaluation halves the lr (when enabled).
  Outcome record_evaluation(double dev_f1, const TrainConfig& cfg);
};

using DevEvaluator = std::function<double(const Classifier&)>;

struct FitResult {
  Classifier model;
  TrainState state;
  std::vector<double> epoch_loss;  // mean per example
  std::vector<double> dev_f1;
};

/// Minibatch AdamW training. With a dev evaluator, returns the parameters
/// of the best-scoring epoch; without one, trains max_epochs and returns
/// the final parameters.
FitResult fit(Classifier model, std::span<const Example> train, const DevEvaluator& dev,
              const TrainConfig& cfg, SeededRng rng);

/// Argmax of each head's logits; ties go to class 0.
std::vector<int> head_votes(const Classifier& model, std::string_view text);
int predict_majority(const Classifier& model, std::string_view text);
double head_vote_variance(const Classifier& model, std::string_view text);

/// T softmax outputs of the single head with dropout active.
std::vector<Vec> mc_dropout_passes(const Classifier& model, std::string_view text,
                                   std::size_t passes, SeededRng& rng);

/// Text checkpoint; see README for the layout.
void save_checkpoint(const Classifier& model, const std::filesystem::path& path);
Classifier load_checkpoint(const std::filesystem::path& path);

}  // namespace mhal
