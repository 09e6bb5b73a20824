#include "mhal/model.hpp"

#include "mhal/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mhal {

void EncoderConfig::validate() const {
  if (hash_dim < 1 || hidden_dim < 1) throw InvalidInput("encoder dims must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw InvalidInput("dropout_rate must be in [0, 1)");
}

SparseFeatures hash_features(std::string_view text, std::size_t hash_dim) {
  std::map<Eigen::Index, double> counts;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    if (end > pos) {
      const auto bucket = static_cast<Eigen::Index>(fnv1a64(text.substr(pos, end - pos)) % hash_dim);
      counts[bucket] += 1.0;
    }
    pos = end;
  }
  SparseFeatures out;
  double norm = 0;
  for (const auto& [_, c] : counts) norm += c * c;
  norm = std::sqrt(norm);
  for (const auto& [i, c] : counts) {
    out.index.push_back(i);
    out.value.push_back(c / norm);
  }
  return out;
}

Parameters Parameters::zeros_like() const {
  return {Mat::Zero(enc_w.rows(), enc_w.cols()), Vec::Zero(enc_b.size()),
          Mat::Zero(head_w.rows(), head_w.cols()), Vec::Zero(head_b.size())};
}

std::size_t Parameters::count() const {
  return static_cast<std::size_t>(enc_w.size() + enc_b.size() + head_w.size() + head_b.size());
}

namespace {

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double fan_in, SeededRng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  Mat m(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

Classifier::Classifier(EncoderConfig cfg, std::vector<std::string> heads, bool single,
                       SeededRng rng)
    : cfg_(cfg), heads_(std::move(heads)), single_(single) {
  cfg_.validate();
  if (heads_.empty()) throw InvalidInput("a classifier needs at least one head");
  const auto hash = static_cast<Eigen::Index>(cfg_.hash_dim);
  const auto hidden = static_cast<Eigen::Index>(cfg_.hidden_dim);
  const auto out = static_cast<Eigen::Index>(2 * heads_.size());
  SeededRng init = rng.substream("init");
  params_.enc_w = uniform_init(hidden, hash, static_cast<double>(hash), init);
  params_.enc_b = uniform_init(hidden, 1, static_cast<double>(hash), init).col(0);
  params_.head_w = uniform_init(out, hidden, static_cast<double>(hidden), init);
  params_.head_b = uniform_init(out, 1, static_cast<double>(hidden), init).col(0);
}

Classifier Classifier::multi_head(const EncoderConfig& cfg, std::vector<std::string> annotators,
                                  SeededRng rng) {
  return Classifier(cfg, std::move(annotators), false, rng);
}

Classifier Classifier::single_head(const EncoderConfig& cfg, SeededRng rng) {
  return Classifier(cfg, {"single"}, true, rng);
}

Vec Classifier::hidden_preactivation(const SparseFeatures& x) const {
  Vec pre = params_.enc_b;
  for (std::size_t k = 0; k < x.index.size(); ++k)
    pre.noalias() += x.value[k] * params_.enc_w.col(x.index[k]);
  return pre;
}

namespace {

/// Inverted-dropout multipliers: 0 or 1/(1-p).
Vec dropout_mask(Eigen::Index n, double rate, SeededRng& rng) {
  Vec mask(n);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < n; ++i) mask(i) = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

}  // namespace

Vec Classifier::encode(const SparseFeatures& x, ForwardMode mode, SeededRng* rng) const {
  Vec h = hidden_preactivation(x).cwiseMax(0.0);
  if (mode == ForwardMode::kDropout) {
    if (rng == nullptr) throw std::invalid_argument("dropout forward needs an rng");
    h.array() *= dropout_mask(h.size(), cfg_.dropout_rate, *rng).array();
  }
  return h;
}

Vec Classifier::encode(std::string_view text, ForwardMode mode, SeededRng* rng) const {
  return encode(hash_features(text, cfg_.hash_dim), mode, rng);
}

Mat Classifier::head_logits(const Vec& representation) const {
  Vec flat = params_.head_w * representation + params_.head_b;
  return Eigen::Map<Mat>(flat.data(), 2, static_cast<Eigen::Index>(heads_.size()));
}

Mat Classifier::forward_heads(std::string_view text) const { return head_logits(encode(text)); }

ClassWeights class_weights(std::span<const int> labels) {
  std::size_t pos = 0;
  for (int l : labels) pos += (l == 1);
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return {};
  const auto n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(neg)), n / (2.0 * static_cast<double>(pos))};
}

LossResult loss(const Classifier& model, std::span<const Example> batch,
                const ClassWeights& weights, SeededRng* dropout_rng) {
  const Parameters& p = model.params();
  LossResult out{0.0, p.zeros_like()};
  const double rate = model.config().dropout_rate;
  for (const Example& ex : batch) {
    if (ex.head >= model.n_heads())
      throw InvalidInput("example routed to unknown head " + std::to_string(ex.head));
    if (ex.label != 0 && ex.label != 1) throw InvalidInput("label must be 0 or 1");
    const SparseFeatures x = hash_features(ex.text, model.config().hash_dim);
    const Vec pre = model.hidden_preactivation(x);
    Vec h = pre.cwiseMax(0.0);
    Vec mask;
    if (dropout_rng != nullptr && rate > 0.0) {
      mask = dropout_mask(h.size(), rate, *dropout_rng);
      h.array() *= mask.array();
    }
    const auto row = static_cast<Eigen::Index>(2 * ex.head);
    const auto w_head = p.head_w.middleRows(row, 2);
    const Eigen::Vector2d z = w_head * h + p.head_b.segment<2>(row);
    const Eigen::Vector2d prob = softmax(z);
    const double w = weights[ex.label];
    out.loss -= w * std::log(prob(ex.label));

    Eigen::Vector2d dz = w * prob;
    dz(ex.label) -= w;
    out.grad.head_w.middleRows(row, 2).noalias() += dz * h.transpose();
    out.grad.head_b.segment<2>(row) += dz;
    Vec dh = w_head.transpose() * dz;
    if (mask.size() > 0) dh.array() *= mask.array();
    const Vec dpre = (pre.array() > 0.0).select(dh, 0.0);
    out.grad.enc_b += dpre;
    for (std::size_t k = 0; k < x.index.size(); ++k)
      out.grad.enc_w.col(x.index[k]).noalias() += x.value[k] * dpre;
  }
  return out;
}

AdamW::AdamW(const Parameters& like, AdamWConfig cfg)
    : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

void AdamW::step(Parameters& params, Parameters& grad, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::vector<Eigen::Map<Vec>> ps, gs, ms, vs;
  std::vector<bool> decays;
  params.for_each([&](Eigen::Map<Vec> t, bool is_weight) {
    ps.push_back(t);
    decays.push_back(is_weight);
  });
  grad.for_each([&](Eigen::Map<Vec> t, bool) { gs.push_back(t); });
  m_.for_each([&](Eigen::Map<Vec> t, bool) { ms.push_back(t); });
  v_.for_each([&](Eigen::Map<Vec> t, bool) { vs.push_back(t); });
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ms[i] = cfg_.beta1 * ms[i] + (1.0 - cfg_.beta1) * gs[i];
    vs[i] = cfg_.beta2 * vs[i] + (1.0 - cfg_.beta2) * gs[i].cwiseAbs2();
    if (decays[i] && cfg_.weight_decay != 0.0) ps[i] *= (1.0 - lr * cfg_.weight_decay);
    ps[i].array() -= lr * (ms[i].array() / bc1) / ((vs[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

void TrainConfig::validate() const {
  std::vector<std::string> errors;
  if (!(peak_lr > 0)) errors.push_back("peak_lr must be > 0");
  if (batch_size < 1) errors.push_back("batch_size must be >= 1");
  if (patience < 1) errors.push_back("patience must be >= 1");
  if (max_epochs < 1) errors.push_back("max_epochs must be >= 1");
  if (weight_decay < 0) errors.push_back("weight_decay must be >= 0");
  if (grad_clip < 0) errors.push_back("grad_clip must be >= 0");
  if (!(adam_eps > 0)) errors.push_back("adam_eps must be > 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    errors.push_back("adam betas must be in [0, 1)");
  if (errors.empty()) return;
  std::string msg = "invalid train config:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw InvalidInput(msg);
}

TrainState::Outcome TrainState::record_evaluation(double dev_f1, const TrainConfig& cfg) {
  Outcome o;
  if (dev_f1 > best_dev_f1) {
    best_dev_f1 = dev_f1;
    evals_without_improvement = 0;
    o.improved = true;
  } else {
    ++evals_without_improvement;
  }
  if (cfg.lr_halving && !std::isnan(last_dev_f1) && dev_f1 < last_dev_f1) {
    lr *= 0.5;
    ++halvings;
    o.halved = true;
  }
  last_dev_f1 = dev_f1;
  if (evals_without_improvement >= cfg.patience) {
    stopped_early = true;
    o.stop = true;
  }
  return o;
}

namespace {

double clip_global_norm(Parameters& grad, double max_norm) {
  double sq = 0;
  grad.for_each([&](Eigen::Map<Vec> t, bool) { sq += t.squaredNorm(); });
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    grad.for_each([&](Eigen::Map<Vec> t, bool) { t *= scale; });
  }
  return norm;
}

}  // namespace

FitResult fit(Classifier model, std::span<const Example> train, const DevEvaluator& dev,
              const TrainConfig& cfg, SeededRng rng) {
  cfg.validate();
  if (train.empty()) throw InvalidInput("fit: empty training set");

  ClassWeights weights;
  if (cfg.class_weights) {
    std::vector<int> labels;
    labels.reserve(train.size());
    for (const auto& ex : train) labels.push_back(ex.label);
    weights = class_weights(labels);
  }

  AdamW opt(model.params(), {cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay});
  SeededRng order_rng = rng.substream("order");
  SeededRng dropout_rng = rng.substream("dropout");

  FitResult result{model, {}, {}, {}};
  TrainState& state = result.state;
  state.lr = cfg.peak_lr;
  const std::vector<Example> base(train.begin(), train.end());

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    state.epoch = epoch + 1;
    std::vector<Example> items = base;
    if (cfg.oversample)
      items = oversample(std::move(items), [](const Example& e) { return e.label; }, order_rng).items;
    order_rng.shuffle(items);

    double total = 0;
    for (std::size_t start = 0; start < items.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, items.size() - start);
      LossResult lr = loss(model, std::span<const Example>(items.data() + start, len), weights,
                           &dropout_rng);
      total += lr.loss;
      if (cfg.grad_clip > 0) clip_global_norm(lr.grad, cfg.grad_clip);
      opt.step(model.params(), lr.grad, state.lr);
    }
    result.epoch_loss.push_back(total / static_cast<double>(items.size()));

    if (!dev) continue;
    const double f1 = dev(model);
    result.dev_f1.push_back(f1);
    const auto outcome = state.record_evaluation(f1, cfg);
    if (outcome.improved) result.model = model;
    if (outcome.stop) break;
  }
  if (!dev) result.model = model;
  return result;
}

std::vector<int> head_votes(const Classifier& model, std::string_view text) {
  const Mat logits = model.forward_heads(text);
  std::vector<int> votes(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index h = 0; h < logits.cols(); ++h)
    votes[static_cast<std::size_t>(h)] = logits(1, h) > logits(0, h) ? 1 : 0;
  return votes;
}

int predict_majority(const Classifier& model, std::string_view text) {
  const auto votes = head_votes(model, text);
  return majority_vote(votes);
}

double head_vote_variance(const Classifier& model, std::string_view text) {
  const auto votes = head_votes(model, text);
  return variance(std::span<const int>(votes));
}

std::vector<Vec> mc_dropout_passes(const Classifier& model, std::string_view text,
                                   std::size_t passes, SeededRng& rng) {
  if (!model.is_single_head()) throw InvalidInput("MC dropout expects a single-head model");
  if (!(model.config().dropout_rate > 0.0))
    throw InvalidInput("MC dropout needs dropout_rate > 0");
  if (passes < 2) throw InvalidInput("MC dropout needs at least 2 passes");
  const SparseFeatures x = hash_features(text, model.config().hash_dim);
  std::vector<Vec> out;
  out.reserve(passes);
  for (std::size_t t = 0; t < passes; ++t) {
    const Vec h = model.encode(x, ForwardMode::kDropout, &rng);
    out.push_back(softmax(model.head_logits(h).col(0)));
  }
  return out;
}

namespace {

constexpr const char* kCheckpointMagic = "mhal-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_tensor(std::ostream& out, const char* name, const double* data, Eigen::Index n) {
  out << name << ' ' << n << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%a", data[i]);
    out << buf << '\n';
  }
}

void read_tensor(std::istream& in, const char* name, double* data, Eigen::Index n) {
  std::string tag;
  Eigen::Index count = 0;
  in >> tag >> count;
  if (tag != name || count != n) throw InvalidInput(std::string("checkpoint: bad tensor ") + name);
  std::string tok;
  for (Eigen::Index i = 0; i < n; ++i) {
    in >> tok;
    data[i] = std::strtod(tok.c_str(), nullptr);
  }
  if (!in) throw InvalidInput("checkpoint: truncated");
}

}  // namespace

void save_checkpoint(const Classifier& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& c = model.config();
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "hash_dim " << c.hash_dim << "\nhidden_dim " << c.hidden_dim << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", c.dropout_rate);
  out << "dropout_rate " << buf << '\n';
  out << "single_head " << (model.is_single_head() ? 1 : 0) << '\n';
  out << "heads " << model.n_heads() << '\n';
  for (const auto& h : model.head_names()) out << h << '\n';
  const auto& p = model.params();
  write_tensor(out, "enc_w", p.enc_w.data(), p.enc_w.size());
  write_tensor(out, "enc_b", p.enc_b.data(), p.enc_b.size());
  write_tensor(out, "head_w", p.head_w.data(), p.head_w.size());
  write_tensor(out, "head_b", p.head_b.data(), p.head_b.size());
}

Classifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::string magic, key, tok;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic || version != kCheckpointVersion)
    throw InvalidInput("not a version 1 checkpoint: " + path.string());
  EncoderConfig c;
  int single = 0;
  std::size_t n_heads = 0;
  in >> key >> c.hash_dim >> key >> c.hidden_dim >> key >> tok;
  c.dropout_rate = std::strtod(tok.c_str(), nullptr);
  in >> key >> single >> key >> n_heads;
  std::vector<std::string> heads(n_heads);
  for (auto& h : heads) in >> h;
  if (!in) throw InvalidInput("checkpoint: malformed header");
  Classifier model(c, std::move(heads), single != 0, SeededRng(0));
  auto& p = model.params_;
  read_tensor(in, "enc_w", p.enc_w.data(), p.enc_w.size());
  read_tensor(in, "enc_b", p.enc_b.data(), p.enc_b.size());
  read_tensor(in, "head_w", p.head_w.data(), p.head_w.size());
  read_tensor(in, "head_b", p.head_b.data(), p.head_b.size());
  return model;
}

}  // namespace mhal
