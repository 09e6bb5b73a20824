#include "mhal/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace mhal {

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

std::vector<int> AnnotationRecord::labels() const {
  std::vector<int> out;
  out.reserve(annotations.size());
  for (const auto& a : annotations) out.push_back(a.label);
  return out;
}

RawDataset::RawDataset(std::vector<AnnotationRecord> records, Split split)
    : records_(std::move(records)), split_(split) {
  validate();
  std::set<std::string> pool;
  for (const auto& r : records_)
    for (const auto& a : r.annotations) pool.insert(a.annotator);
  pool_.assign(pool.begin(), pool.end());
  rebuild_index();
}

void RawDataset::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& r : records_) {
    if (!ids.insert(r.instance_id).second)
      throw InvalidInput("duplicate instance id '" + r.instance_id + "'");
    if (r.annotations.empty())
      throw InvalidInput("record '" + r.instance_id + "' has no annotations");
    std::unordered_set<std::string> seen;
    for (const auto& a : r.annotations) {
      if (a.label != 0 && a.label != 1)
        throw InvalidInput("record '" + r.instance_id + "': label must be 0 or 1");
      if (!seen.insert(a.annotator).second)
        throw InvalidInput("record '" + r.instance_id + "': duplicate annotator '" +
                           a.annotator + "'");
    }
  }
}

void RawDataset::rebuild_index() {
  pool_index_.clear();
  for (std::size_t i = 0; i < pool_.size(); ++i) pool_index_.emplace(pool_[i], i);
}

std::optional<std::size_t> RawDataset::annotator_index(const std::string& annotator) const {
  auto it = pool_index_.find(annotator);
  if (it == pool_index_.end()) return std::nullopt;
  return it->second;
}

RawDataset RawDataset::with_annotator_pool(std::vector<std::string> pool) const {
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  for (const auto& a : pool_)
    if (!std::binary_search(pool.begin(), pool.end(), a))
      throw InvalidInput("annotator '" + a + "' missing from the supplied pool");
  RawDataset out = *this;
  out.pool_ = std::move(pool);
  out.rebuild_index();
  return out;
}

std::vector<std::string> merge_annotator_pools(std::span<const RawDataset* const> datasets) {
  std::set<std::string> pool;
  for (const RawDataset* ds : datasets)
    pool.insert(ds->annotator_pool().begin(), ds->annotator_pool().end());
  return {pool.begin(), pool.end()};
}

RawDataset load_jsonl(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::vector<AnnotationRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      AnnotationRecord r;
      r.instance_id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      for (const auto& a : j.at("annotations")) {
        Annotation ann;
        ann.annotator = a.at("annotator").get<std::string>();
        ann.label = a.at("label").get<int>();
        r.annotations.push_back(std::move(ann));
      }
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput(where + e.what());
    }
    try {
      // Per-record checks, so the error names the offending line.
      RawDataset({records.back()}, split);
    } catch (const InvalidInput& e) {
      throw InvalidInput(where + e.what());
    }
  }
  return RawDataset(std::move(records), split);
}

void save_jsonl(const RawDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : ds.records()) {
    nlohmann::ordered_json j;
    j["id"] = r.instance_id;
    j["text"] = r.text;
    j["annotations"] = nlohmann::ordered_json::array();
    for (const auto& a : r.annotations)
      j["annotations"].push_back({{"annotator", a.annotator}, {"label", a.label}});
    out << j.dump() << '\n';
  }
}

PairPool::PairPool(std::vector<AnnotationPair> pairs, std::size_t n_instances)
    : pairs_(std::move(pairs)), by_instance_(n_instances) {
  for (std::size_t id = 0; id < pairs_.size(); ++id) {
    const auto& p = pairs_[id];
    if (p.instance >= n_instances) throw InvalidInput("pair instance out of range");
    by_instance_[p.instance].push_back(id);
    if (p.status == PairStatus::kLabeled) ++spent_;
  }
  for (auto& ids : by_instance_)
    std::sort(ids.begin(), ids.end(), [this](std::size_t a, std::size_t b) {
      return pairs_[a].annotator < pairs_[b].annotator;
    });
}

std::optional<std::size_t> PairPool::find(std::size_t instance, std::size_t annotator) const {
  for (std::size_t id : by_instance_.at(instance))
    if (pairs_[id].annotator == annotator) return id;
  return std::nullopt;
}

std::vector<std::size_t> PairPool::unlabeled_pairs_of(std::size_t instance) const {
  std::vector<std::size_t> out;
  for (std::size_t id : by_instance_.at(instance))
    if (!is_labeled(id)) out.push_back(id);
  return out;
}

std::vector<std::size_t> PairPool::unlabeled_ids() const {
  std::vector<std::size_t> out;
  for (std::size_t id = 0; id < pairs_.size(); ++id)
    if (!is_labeled(id)) out.push_back(id);
  return out;
}

std::vector<std::size_t> PairPool::labeled_ids() const {
  std::vector<std::size_t> out;
  for (std::size_t id = 0; id < pairs_.size(); ++id)
    if (is_labeled(id)) out.push_back(id);
  return out;
}

std::vector<std::size_t> PairPool::open_instances() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < by_instance_.size(); ++i)
    for (std::size_t id : by_instance_[i])
      if (!is_labeled(id)) {
        out.push_back(i);
        break;
      }
  return out;
}

void PairPool::mark_labeled(std::size_t id) {
  auto& p = pairs_.at(id);
  if (p.status == PairStatus::kLabeled)
    throw std::logic_error("pair " + std::to_string(id) + " is already labeled");
  p.status = PairStatus::kLabeled;
  ++spent_;
}

PairPool expand_pairs(const RawDataset& ds) {
  std::vector<AnnotationPair> pairs;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (const auto& a : ds.records()[i].annotations)
      pairs.push_back({i, *ds.annotator_index(a.annotator), a.label, PairStatus::kUnlabeled});
  return PairPool(std::move(pairs), ds.size());
}

int majority_vote(std::span<const int> labels) {
  if (labels.empty()) throw InvalidInput("majority_vote: empty input");
  std::size_t ones = 0;
  for (int l : labels) ones += (l == 1);
  return 2 * ones >= labels.size() ? 1 : 0;
}

double annotation_disagreement(const AnnotationRecord& record) {
  const auto labels = record.labels();
  return variance(std::span<const int>(labels));
}

void SynthConfig::validate() const {
  std::vector<std::string> errors;
  if (n_instances == 0) errors.push_back("n_instances must be >= 1");
  if (n_annotators == 0) errors.push_back("n_annotators must be >= 1");
  if (annotators_per_instance > n_annotators)
    errors.push_back("annotators_per_instance exceeds n_annotators");
  if (bias_range < 0) errors.push_back("bias_range must be >= 0");
  if (noise_min < 0 || noise_max < noise_min)
    errors.push_back("noise range must satisfy 0 <= noise_min <= noise_max");
  if (!(positive_rate > 0 && positive_rate < 1))
    errors.push_back("positive_rate must be in (0, 1)");
  if (n_features == 0) errors.push_back("n_features must be >= 1");
  if (n_bins < 2) errors.push_back("n_bins must be >= 2");
  if (!(logit_scale > 0)) errors.push_back("logit_scale must be > 0");
  if (n_distractors > 0 && distractor_vocab == 0)
    errors.push_back("distractor_vocab must be >= 1 when distractors are used");
  if (errors.empty()) return;
  std::string msg = "invalid synthetic config:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw InvalidInput(msg);
}

namespace {

std::string zero_pad(std::size_t value, std::size_t width) {
  std::string s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

std::size_t digits(std::size_t n) { return std::to_string(n == 0 ? 0 : n - 1).size(); }

}  // namespace

SyntheticDataset generate_synthetic(const SynthConfig& cfg, SeededRng rng) {
  cfg.validate();
  SeededRng weight_rng = rng.substream("weights");
  SeededRng annot_rng = rng.substream("annotators");
  SeededRng inst_rng = rng.substream("instances");
  SeededRng label_rng = rng.substream("labels");

  // Feature weights are normalized so the latent logit has variance logit_scale^2.
  std::vector<double> weights(cfg.n_features);
  double norm = 0;
  for (auto& w : weights) {
    w = weight_rng.uniform(0.5, 1.5) * (weight_rng.bernoulli(0.5) ? 1.0 : -1.0);
    norm += w * w;
  }
  for (auto& w : weights) w *= cfg.logit_scale / std::sqrt(norm);

  const std::size_t n = cfg.n_instances;
  std::vector<std::vector<double>> features(n, std::vector<double>(cfg.n_features));
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double logit = 0;
    for (std::size_t j = 0; j < cfg.n_features; ++j) {
      features[i][j] = inst_rng.normal();
      logit += weights[j] * features[i][j];
    }
    scores[i] = 1.0 / (1.0 + std::exp(-logit));
  }

  std::vector<AnnotatorProfile> annotators(cfg.n_annotators);
  const std::size_t width = digits(cfg.n_annotators);
  for (std::size_t a = 0; a < cfg.n_annotators; ++a) {
    annotators[a].id = "a" + zero_pad(a, width);
    annotators[a].threshold = annot_rng.uniform(-cfg.bias_range, cfg.bias_range);
    annotators[a].noise = annot_rng.uniform(cfg.noise_min, cfg.noise_max);
  }
  // Shift all thresholds so the expected raw positive rate hits the target.
  auto expected_rate = [&](double base) {
    double total = 0;
    for (double s : scores)
      for (const auto& prof : annotators) {
        const double margin = s - (base + prof.threshold);
        total += prof.noise > 0 ? 0.5 * std::erfc(-margin / (prof.noise * std::sqrt(2.0)))
                                : (margin > 0 ? 1.0 : 0.0);
      }
    return total / static_cast<double>(scores.size() * annotators.size());
  };
  double lo = -2.0, hi = 3.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected_rate(mid) > cfg.positive_rate ? lo : hi) = mid;
  }
  for (auto& prof : annotators) prof.threshold += 0.5 * (lo + hi);

  // Bin edges at +-2.5 sigma, clamped at the ends.
  auto bin_of = [&](double f) {
    const double t = (f + 2.5) / 5.0 * static_cast<double>(cfg.n_bins);
    const double clamped = std::clamp(std::floor(t), 0.0, static_cast<double>(cfg.n_bins - 1));
    return static_cast<std::size_t>(clamped);
  };

  const std::size_t id_width = digits(n);
  std::vector<AnnotationRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = records[i];
    r.instance_id = cfg.id_prefix + "-" + zero_pad(i, id_width);
    std::ostringstream text;
    for (std::size_t j = 0; j < cfg.n_features; ++j)
      text << (j ? " " : "") << 'f' << j << 'b' << bin_of(features[i][j]);
    for (std::size_t d = 0; d < cfg.n_distractors; ++d)
      text << " w" << inst_rng.uniform_index(cfg.distractor_vocab);
    r.text = text.str();

    std::vector<std::size_t> who;
    if (cfg.dense()) {
      who.resize(cfg.n_annotators);
      for (std::size_t a = 0; a < cfg.n_annotators; ++a) who[a] = a;
    } else {
      who = inst_rng.sample_without_replacement(cfg.n_annotators, cfg.annotators_per_instance);
      std::sort(who.begin(), who.end());
    }
    for (std::size_t a : who) {
      const auto& prof = annotators[a];
      const double noisy = scores[i] + label_rng.normal(0.0, 1.0) * prof.noise;
      r.annotations.push_back({prof.id, noisy > prof.threshold ? 1 : 0});
    }
  }

  std::vector<std::string> pool;
  for (const auto& a : annotators) pool.push_back(a.id);
  RawDataset ds = RawDataset(std::move(records), Split::kTrain).with_annotator_pool(pool);
  return {std::move(ds), std::move(scores), std::move(annotators)};
}

DatasetSplits split_dataset(const RawDataset& ds, double train_fraction, double dev_fraction) {
  if (train_fraction <= 0 || dev_fraction < 0 || train_fraction + dev_fraction >= 1)
    throw InvalidInput("split fractions must satisfy 0 < train, 0 <= dev, train + dev < 1");
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(n)));
  const auto n_dev = static_cast<std::size_t>(std::round(dev_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train + n_dev >= n)
    throw InvalidInput("dataset too small for the requested split");
  const auto& recs = ds.records();
  auto slice = [&](std::size_t from, std::size_t to, Split split) {
    std::vector<AnnotationRecord> part(recs.begin() + static_cast<std::ptrdiff_t>(from),
                                       recs.begin() + static_cast<std::ptrdiff_t>(to));
    return RawDataset(std::move(part), split).with_annotator_pool(ds.annotator_pool());
  };
  return {slice(0, n_train, Split::kTrain), slice(n_train, n_train + n_dev, Split::kDev),
          slice(n_train + n_dev, n, Split::kTest)};
}

DatasetSplits unify_pools(DatasetSplits splits) {
  const RawDataset* all[] = {&splits.train, &splits.dev, &splits.test};
  const auto pool = merge_annotator_pools(all);
  return {splits.train.with_annotator_pool(pool), splits.dev.with_annotator_pool(pool),
          splits.test.with_annotator_pool(pool)};
}

}  // namespace mhal
