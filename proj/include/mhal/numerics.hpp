#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mhal {

using Scalar = double;
using Vec = Eigen::VectorX<Scalar>;
using Mat = Eigen::MatrixX<Scalar>;

/// Thrown by the math kernels and loaders on malformed input.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerically stable softmax (max subtracted before exponentiation).
template <typename Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> softmax(
    const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  if (z.size() == 0) throw InvalidInput("softmax: empty input");
  if (!z.allFinite()) throw InvalidInput("softmax: non-finite input");
  const S peak = z.maxCoeff();
  Eigen::Vector<S, Eigen::Dynamic> e = (z.array() - peak).exp().matrix();
  return e / e.sum();
}

/// Shannon entropy in nats, with 0 ln 0 = 0.
template <typename Derived>
typename Derived::Scalar entropy(const Eigen::MatrixBase<Derived>& p) {
  using S = typename Derived::Scalar;
  if (p.size() == 0) throw InvalidInput("entropy: empty input");
  if (!p.allFinite()) throw InvalidInput("entropy: non-finite input");
  if ((p.array() < S(0)).any())
    throw InvalidInput("entropy: negative probability");
  if (std::abs(p.sum() - S(1)) > S(1e-9))
    throw InvalidInput("entropy: probabilities do not sum to 1");
  S h = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const S pi = p(i);
    if (pi > S(0)) h -= pi * std::log(pi);
  }
  return h;
}

/// Population variance (divides by the count).
template <typename Derived>
typename Derived::Scalar variance(const Eigen::MatrixBase<Derived>& xs) {
  using S = typename Derived::Scalar;
  if (xs.size() == 0) throw InvalidInput("variance: empty input");
  const S mu = xs.mean();
  return (xs.array() - mu).square().sum() / S(xs.size());
}

inline double variance(std::span<const double> xs) {
  return variance(Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size())));
}

/// Population variance of integer labels (votes, annotations).
inline double variance(std::span<const int> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) v(static_cast<Eigen::Index>(i)) = xs[i];
  return variance(v);
}

struct PearsonResult {
  double value = 0.0;
  /// Set when either input has zero variance; value is then 0.
  bool degenerate = false;
};

template <typename DerivedX, typename DerivedY>
PearsonResult pearson(const Eigen::MatrixBase<DerivedX>& xs,
                      const Eigen::MatrixBase<DerivedY>& ys) {
  if (xs.size() != ys.size())
    throw InvalidInput("pearson: length mismatch");
  if (xs.size() < 2) throw InvalidInput("pearson: need at least 2 points");
  const auto dx = (xs.array() - xs.mean()).eval();
  const auto dy = (ys.array() - ys.mean()).eval();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
  double r = (dx * dy).sum() / std::sqrt(sxx * syy);
  return {std::clamp(r, -1.0, 1.0), false};
}

inline PearsonResult pearson(std::span<const double> xs,
                             std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw InvalidInput("pearson: length mismatch");
  return pearson(
      Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size())),
      Eigen::Map<const Vec>(ys.data(), static_cast<Eigen::Index>(ys.size())));
}

/// Identifies an acquisition candidate. `annotator` is kNoAnnotator for
/// instance-level scores.
struct PairKey {
  static constexpr std::size_t kNoAnnotator = std::numeric_limits<std::size_t>::max();

  std::size_t instance = 0;
  std::size_t annotator = kNoAnnotator;

  friend bool operator==(const PairKey&, const PairKey&) = default;
  friend auto operator<=>(const PairKey&, const PairKey&) = default;
};

struct ScoredKey {
  PairKey key;
  double score = 0.0;
};

struct TopKResult {
  std::vector<PairKey> keys;
  /// k exceeded the number of candidates; every candidate was returned.
  bool truncated = false;
};

/// The k highest-scoring keys, best first. Ties go to the smaller instance
/// index, then the smaller annotator index.
TopKResult top_k(std::vector<ScoredKey> scores, std::size_t k);

}  // namespace mhal
