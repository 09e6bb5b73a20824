#include "mhal/numerics.hpp"

namespace mhal {

TopKResult top_k(std::vector<ScoredKey> scores, std::size_t k) {
  for (const auto& s : scores)
    if (!std::isfinite(s.score)) throw InvalidInput("top_k: non-finite score");
  TopKResult out;
  if (k > scores.size()) {
    out.truncated = true;
    k = scores.size();
  }
  auto better = [](const ScoredKey& a, const ScoredKey& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.key < b.key;
  };
  std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k),
                    scores.end(), better);
  out.keys.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.keys.push_back(scores[i].key);
  return out;
}

}  // namespace mhal
