#pragma once

#include "mhal/data.hpp"
#include "mhal/model.hpp"
#include "mhal/rng.hpp"

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

namespace fixtures {

/// Record with annotators "a0".."a{n-1}" carrying `labels` in order.
inline mhal::AnnotationRecord record(const std::string& id, const std::string& text,
                                     const std::vector<int>& labels) {
  mhal::AnnotationRecord r{id, text, {}};
  for (std::size_t a = 0; a < labels.size(); ++a)
    r.annotations.push_back({"a" + std::to_string(a), labels[a]});
  return r;
}

/// Dataset of `n_pairs` annotations spread over random instances, each
/// annotated by a random subset of `n_annotators`.
inline mhal::RawDataset random_pair_dataset(std::size_t n_pairs, std::size_t n_annotators,
                                            mhal::SeededRng& rng) {
  std::vector<mhal::AnnotationRecord> records;
  std::size_t left = n_pairs;
  for (std::size_t i = 0; left > 0; ++i) {
    const std::size_t k = std::min<std::size_t>(left, 1 + rng.uniform_index(n_annotators));
    auto who = rng.sample_without_replacement(n_annotators, k);
    std::sort(who.begin(), who.end());
    mhal::AnnotationRecord r{"r" + std::to_string(i), "", {}};
    for (int t = 0; t < 5; ++t) r.text += "t" + std::to_string(rng.uniform_index(40)) + " ";
    for (std::size_t a : who)
      r.annotations.push_back({"a" + std::to_string(a), rng.bernoulli(0.4) ? 1 : 0});
    left -= k;
    records.push_back(std::move(r));
  }
  std::vector<std::string> pool;
  for (std::size_t a = 0; a < n_annotators; ++a) pool.push_back("a" + std::to_string(a));
  return mhal::RawDataset(std::move(records), mhal::Split::kTrain).with_annotator_pool(pool);
}

/// Overwrites every parameter with N(0, scale) draws so head outputs are
/// spread out.
inline void randomize(mhal::Classifier& model, mhal::SeededRng& rng, double scale) {
  model.params().for_each([&](auto view, bool) {
    for (Eigen::Index i = 0; i < view.size(); ++i) view(i) = rng.normal(0.0, scale);
  });
}

/// Multi-head model whose head votes reproduce every annotation of `ds`.
/// The encoder is the identity over hash buckets, so each record's text
/// must be a single token with its own bucket.
inline mhal::Classifier replicating_model(const mhal::RawDataset& ds, std::size_t hash_dim = 64) {
  mhal::Classifier m = mhal::Classifier::multi_head({hash_dim, hash_dim, 0.0}, ds.annotator_pool(),
                                                    mhal::SeededRng(0));
  auto& p = m.params();
  p.enc_w.setIdentity();
  p.enc_b.setZero();
  p.head_w.setZero();
  p.head_b.setZero();
  std::vector<Eigen::Index> used;
  for (const auto& r : ds.records()) {
    const auto x = mhal::hash_features(r.text, hash_dim);
    if (x.index.size() != 1 || std::find(used.begin(), used.end(), x.index[0]) != used.end())
      throw std::logic_error("replicating_model: texts must hash to distinct single buckets");
    used.push_back(x.index[0]);
    for (const auto& a : r.annotations) {
      const auto h = static_cast<Eigen::Index>(*ds.annotator_index(a.annotator));
      p.head_w(2 * h + a.label, x.index[0]) = 1.0;
    }
  }
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mhal-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
