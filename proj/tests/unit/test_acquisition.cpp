#include "mhal/acquisition.hpp"
#include "acq_oracle.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace mhal;

namespace {

Mat logits_of(std::initializer_list<std::pair<double, double>> heads) {
  Mat m(2, static_cast<Eigen::Index>(heads.size()));
  Eigen::Index h = 0;
  for (const auto& [z0, z1] : heads) {
    m(0, h) = z0;
    m(1, h) = z1;
    ++h;
  }
  return m;
}

/// Model whose heads output fixed logits regardless of the text.
Classifier constant_model(const Mat& logits) {
  std::vector<std::string> names;
  for (Eigen::Index h = 0; h < logits.cols(); ++h) names.push_back("a" + std::to_string(h));
  Classifier m = logits.cols() == 1 ? Classifier::single_head({8, 2, 0.1}, SeededRng(0))
                                    : Classifier::multi_head({8, 2, 0.1}, names, SeededRng(0));
  m.params().head_w.setZero();
  m.params().head_b = Eigen::Map<const Vec>(logits.data(), logits.size());
  return m;
}

const double kLn2 = std::log(2.0);

}  // namespace

TEST_CASE("method and policy names") {
  for (Method m : kAllMethods) CHECK(parse_method(to_string(m)) == m);
  for (Policy p : {Policy::kPairwise, Policy::kLabelDiversityFirst, Policy::kSampleDiversityFirst})
    CHECK(parse_policy(to_string(p)) == p);
  CHECK_THROWS_AS(parse_method("nope"), InvalidInput);
  CHECK_THROWS_AS(parse_policy("nope"), InvalidInput);
  CHECK(default_policy(Method::kIndividual) == Policy::kPairwise);
  CHECK(default_policy(Method::kGroup) == Policy::kLabelDiversityFirst);
  CHECK(uses_multi_head(Method::kVote));
  CHECK_FALSE(uses_multi_head(Method::kBald));
}

TEST_CASE("individual entropy examples") {
  CHECK(std::abs(individual_entropy(logits_of({{0, 0}}), 0) - kLn2) <= 1e-12);
  CHECK(std::abs(individual_entropy(logits_of({{10, -10}}), 0) - oracle::softmax_entropy({10, -10})) <= 1e-15);
  CHECK(individual_entropy(logits_of({{10, -10}}), 0) < 1e-7);
  const double h = individual_entropy(logits_of({{1, 0}}), 0);
  CHECK(std::abs(h - oracle::softmax_entropy({1, 0})) <= 1e-12);
  CHECK(std::abs(h - 0.5822) < 5e-5);
  CHECK_THROWS_AS(individual_entropy(logits_of({{1, 0}}), 1), InvalidInput);

  const Classifier m = constant_model(logits_of({{1, 0}, {0, 0}}));
  CHECK(std::abs(score_individual(m, "x", 1) - kLn2) <= 1e-12);
  CHECK_THROWS_AS(score_individual(m, "x", 2), InvalidInput);
}

TEST_CASE("group entropy examples") {
  CHECK(std::abs(group_entropy(logits_of({{0, 0}, {0, 0}, {0, 0}})) - kLn2) <= 1e-12);
  CHECK(std::abs(group_entropy(logits_of({{2, -1}, {-1, 2}, {0.3, -4}, {-4, 0.3}})) - kLn2) <= 1e-12);
  const Mat six = logits_of({{1, 0}, {1, 0}, {1, 0}, {1, 0}, {1, 0}, {1, 0}});
  const double g = group_entropy(six);
  CHECK(std::abs(g - 0.0019581880719725) <= 1e-12);
  CHECK(std::abs(g - oracle::group_entropy({{1, 0}, {1, 0}, {1, 0}, {1, 0}, {1, 0}, {1, 0}})) <= 1e-12);
  // Softmax variant: six uniform-ish heads stay uncertain.
  CHECK(group_entropy(six, GroupNorm::kSoftmax) > g);
}

TEST_CASE("group entropy is invariant to positive per-head rescaling") {
  SeededRng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const auto h = static_cast<Eigen::Index>(1 + rng.uniform_index(8));
    Mat z(2, h);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal(0, 3);
    Mat scaled = z;
    for (Eigen::Index c = 0; c < h; ++c) scaled.col(c) *= rng.uniform(0.05, 20);
    CHECK(std::abs(group_entropy(z) - group_entropy(scaled)) <= 1e-9);
  }
}

TEST_CASE("vote variance examples") {
  const Classifier m = constant_model(logits_of({{0, 1}, {0, 1}, {0, 1}, {1, 0}, {1, 0}, {1, 0}}));
  CHECK(score_vote(m, "x") == 0.25);
  CHECK(vote_variance(logits_of({{0, 1}, {0, 1}, {0, 1}})) == 0.0);
  CHECK(vote_variance(logits_of({{0, 1}, {0, 1}, {1, 0}, {1, 0}, {1, 0}, {1, 0}})) ==
        doctest::Approx(2.0 / 9.0).epsilon(1e-15));
}

TEST_CASE("mix adds the individual and group terms") {
  const Classifier uniform = constant_model(logits_of({{0, 0}, {0, 0}}));
  CHECK(std::abs(score_mix(uniform, "x", 0) - 2 * kLn2) <= 1e-12);
  const Classifier confident_split = constant_model(logits_of({{10, -10}, {-10, 10}}));
  CHECK(std::abs(score_mix(confident_split, "x", 0) - kLn2 - oracle::softmax_entropy({10, -10})) <= 1e-12);

  SeededRng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    Mat z(2, 4);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal(0, 2);
    const Classifier m = constant_model(z);
    std::size_t best_mix = 0, best_indi = 0;
    for (std::size_t a = 1; a < 4; ++a) {
      if (score_mix(m, "x", a) > score_mix(m, "x", best_mix)) best_mix = a;
      if (score_individual(m, "x", a) > score_individual(m, "x", best_indi)) best_indi = a;
    }
    CHECK(best_mix == best_indi);
  }
}

TEST_CASE("single-head entropy examples") {
  CHECK(std::abs(score_single_entropy(constant_model(logits_of({{0, 0}})), "x") - kLn2) <= 1e-12);
  CHECK(score_single_entropy(constant_model(logits_of({{10, -10}})), "x") < 1e-7);
  CHECK(std::abs(score_single_entropy(constant_model(logits_of({{1, 0}})), "x") -
                 oracle::softmax_entropy({1, 0})) <= 1e-12);
}

TEST_CASE("BALD from passes") {
  auto v2 = [](double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
  };
  const std::vector<Vec> same{v2(0.3, 0.7), v2(0.3, 0.7), v2(0.3, 0.7)};
  CHECK(bald_from_passes(same) == 0.0);
  const std::vector<Vec> opposite{v2(1, 0), v2(0, 1)};
  CHECK(std::abs(bald_from_passes(opposite) - kLn2) <= 1e-12);
  const std::vector<Vec> spec{v2(0.8, 0.2), v2(0.6, 0.4)};
  const double mi = bald_from_passes(spec);
  CHECK(std::abs(mi - oracle::bald({{0.8, 0.2}, {0.6, 0.4}})) <= 1e-12);
  CHECK(std::abs(mi - 0.024157) < 5e-7);
  CHECK(std::abs(oracle::entropy({0.7, 0.3}) - 0.610864) < 5e-7);
  CHECK(std::abs(oracle::entropy({0.8, 0.2}) - 0.500402) < 5e-7);
  CHECK(std::abs(oracle::entropy({0.6, 0.4}) - 0.673012) < 5e-7);
}

TEST_CASE("score ranges") {
  SeededRng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    Classifier mh = Classifier::multi_head({32, 6, 0.1}, {"a", "b", "c", "d"}, rng.substream("mh"));
    fixtures::randomize(mh, rng, 2.0);
    Classifier sh = Classifier::single_head({32, 6, 0.3}, rng.substream("sh"));
    fixtures::randomize(sh, rng, 2.0);
    const std::string text = "w" + std::to_string(trial) + " q";
    const double vote = score_vote(mh, text);
    CHECK(vote >= 0.0);
    CHECK(vote <= 0.25);
    for (double s : {score_individual(mh, text, 2), score_group(mh, text), score_single_entropy(sh, text)}) {
      CHECK(s >= 0.0);
      CHECK(s <= kLn2 + 1e-12);
    }
    SeededRng passes(trial);
    CHECK(score_bald(sh, text, 5, passes) >= 0.0);
  }
}

TEST_CASE("DAL discriminator") {
  SeededRng rng(34);
  std::vector<Vec> labeled, unlabeled;
  for (int i = 0; i < 40; ++i) {
    Vec a(3), b(3);
    a << 2 + rng.normal(0, 0.3), 0 + rng.normal(0, 0.3), 1;
    b << -2 + rng.normal(0, 0.3), 0 + rng.normal(0, 0.3), 1;
    labeled.push_back(a);
    unlabeled.push_back(b);
  }
  Vec inside(3);
  inside << 2, 0, 1;
  CHECK(score_dal(labeled, unlabeled, inside) < 0.5);
  Vec far(3);
  far << -2.5, 0, 1;
  CHECK(score_dal(labeled, unlabeled, far) > 0.5);

  // Identical sets cancel exactly, so only round-off reaches Adam's normalized step.
  const DalDiscriminator same(labeled, labeled);
  for (const Vec& x : labeled) CHECK(std::abs(same.prob_unlabeled(x) - 0.5) < 1e-3);

  CHECK_THROWS_AS(DalDiscriminator(std::vector<Vec>{}, unlabeled), InvalidInput);
}

namespace {

RawDataset two_instance_dataset() {
  return RawDataset({fixtures::record("x1", "hot", {1, 0, 1, 0, 1, 0}),
                     fixtures::record("x2", "cold", {0, 0, 0, 0, 0, 1})},
                    Split::kTrain);
}

}  // namespace

TEST_CASE("label diversity first claims whole instances") {
  const PairPool pool = expand_pairs(two_instance_dataset());
  const std::vector<ScoredKey> scores{{{0}, 0.9}, {{1}, 0.1}};
  SeededRng rng(35);
  auto b = select_batch(scores, Policy::kLabelDiversityFirst, pool, 6, rng);
  CHECK(b.cost == 6);
  for (std::size_t id : b.pair_ids) CHECK(pool.pair(id).instance == 0);

  b = select_batch(scores, Policy::kLabelDiversityFirst, pool, 4, rng);
  CHECK(b.cost == 4);
  std::set<std::size_t> annotators;
  for (std::size_t id : b.pair_ids) {
    CHECK(pool.pair(id).instance == 0);
    annotators.insert(pool.pair(id).annotator);
  }
  CHECK(annotators.size() == 4);

  b = select_batch(scores, Policy::kLabelDiversityFirst, pool, 8, rng);
  CHECK(b.cost == 8);
  CHECK(std::count_if(b.pair_ids.begin(), b.pair_ids.end(),
                      [&](std::size_t id) { return pool.pair(id).instance == 1; }) == 2);
}

TEST_CASE("label diversity subsets vary with the rng") {
  const PairPool pool = expand_pairs(two_instance_dataset());
  const std::vector<ScoredKey> scores{{{0}, 0.9}, {{1}, 0.1}};
  std::set<std::vector<std::size_t>> seen;
  for (std::uint64_t s = 0; s < 20; ++s) {
    SeededRng rng(s);
    seen.insert(select_batch(scores, Policy::kLabelDiversityFirst, pool, 3, rng).pair_ids);
  }
  CHECK(seen.size() > 1);
}

TEST_CASE("sample diversity first spreads over instances") {
  const PairPool pool = expand_pairs(two_instance_dataset());
  const std::vector<ScoredKey> scores{{{0}, 0.9}, {{1}, 0.1}};
  SeededRng rng(36);
  auto b = select_batch(scores, Policy::kSampleDiversityFirst, pool, 2, rng);
  REQUIRE(b.cost == 2);
  CHECK(pool.pair(b.pair_ids[0]).instance == 0);
  CHECK(pool.pair(b.pair_ids[1]).instance == 1);

  b = select_batch(scores, Policy::kSampleDiversityFirst, pool, 5, rng);
  CHECK(b.cost == 5);
  std::set<std::size_t> unique(b.pair_ids.begin(), b.pair_ids.end());
  CHECK(unique.size() == 5);
}

TEST_CASE("pairwise selection and budget clamps") {
  PairPool pool = expand_pairs(two_instance_dataset());
  std::vector<ScoredKey> scores;
  for (std::size_t id = 0; id < pool.size(); ++id)
    scores.push_back({{pool.pair(id).instance, pool.pair(id).annotator}, static_cast<double>(id)});
  SeededRng rng(37);
  auto b = select_batch(scores, Policy::kPairwise, pool, 3, rng);
  CHECK(b.pair_ids == std::vector<std::size_t>{11, 10, 9});

  b = select_batch(scores, Policy::kPairwise, pool, 100, rng);
  CHECK(b.cost == 12);

  CHECK_THROWS_AS(select_batch(scores, Policy::kLabelDiversityFirst, pool, 3, rng), InvalidInput);
  CHECK_THROWS_AS(select_batch(scores, Policy::kPairwise, pool, 0, rng), InvalidInput);

  for (std::size_t id = 0; id < pool.size(); ++id) pool.mark_labeled(id);
  b = select_batch({}, Policy::kPairwise, pool, 3, rng);
  CHECK(b.empty_pool);
  CHECK(b.cost == 0);
}

TEST_CASE("candidates exclude labeled pairs") {
  SeededRng rng(38);
  const RawDataset ds = fixtures::random_pair_dataset(30, 4, rng);
  PairPool pool = expand_pairs(ds);
  for (std::size_t k : rng.sample_without_replacement(pool.size(), 12)) pool.mark_labeled(k);
  Classifier mh = Classifier::multi_head({32, 6, 0.1}, ds.annotator_pool(), SeededRng(1));
  const AcquisitionContext ctx{ds, pool, mh};
  for (Method m : {Method::kIndividual, Method::kMix, Method::kRandMultiHead}) {
    const auto scores = score_candidates(m, ctx, rng);
    CHECK(scores.size() == pool.remaining());
    for (const auto& s : scores) {
      const auto id = pool.find(s.key.instance, s.key.annotator);
      REQUIRE(id.has_value());
      CHECK_FALSE(pool.is_labeled(*id));
    }
  }
  const auto inst = score_candidates(Method::kGroup, ctx, rng);
  CHECK(inst.size() == pool.open_instances().size());
  const Classifier sh = Classifier::single_head({32, 6, 0.1}, SeededRng(1));
  CHECK_THROWS_AS(score_candidates(Method::kEntropy, ctx, rng), InvalidInput);
  const AcquisitionContext sctx{ds, pool, sh};
  CHECK_THROWS_AS(score_candidates(Method::kGroup, sctx, rng), InvalidInput);
}

TEST_CASE("select_batch cost equals pairs revealed") {
  SeededRng rng(39);
  for (int trial = 0; trial < 30; ++trial) {
    const RawDataset ds = fixtures::random_pair_dataset(40, 5, rng);
    PairPool pool = expand_pairs(ds);
    Classifier mh = Classifier::multi_head({32, 6, 0.1}, ds.annotator_pool(), rng.substream("m"));
    fixtures::randomize(mh, rng, 1.0);
    const AcquisitionContext ctx{ds, pool, mh};
    for (Method m : {Method::kGroup, Method::kIndividual}) {
      const std::size_t budget = 1 + rng.uniform_index(15);
      const Policy p = default_policy(m);
      const auto batch = select_batch(score_candidates(m, ctx, rng), p, pool, budget, rng);
      const std::size_t before = pool.spent_budget();
      CHECK(batch.cost == std::min(budget, pool.remaining()));
      for (std::size_t id : batch.pair_ids) pool.mark_labeled(id);
      CHECK(pool.spent_budget() - before == batch.cost);
    }
  }
}

TEST_CASE("K=1 selection agrees with the exhaustive oracle") {
  SeededRng rng(40);
  for (Method method : kAllMethods) {
    CAPTURE(to_string(method));
    for (int trial = 0; trial < 10; ++trial) {
      const RawDataset ds = fixtures::random_pair_dataset(20, 4, rng);
      PairPool pool = expand_pairs(ds);
      for (std::size_t k : rng.sample_without_replacement(pool.size(), 1 + rng.uniform_index(9)))
        pool.mark_labeled(k);
      Classifier model = uses_multi_head(method)
                             ? Classifier::multi_head({32, 6, 0.2}, ds.annotator_pool(), rng.substream("m"))
                             : Classifier::single_head({32, 6, 0.2}, rng.substream("m"));
      fixtures::randomize(model, rng, 1.0);
      const AcquisitionContext ctx{ds, pool, model};
      const SeededRng start = rng.substream("acq/" + std::to_string(trial));
      SeededRng lib = start;
      const auto batch = select_batch(score_candidates(method, ctx, lib), default_policy(method), pool, 1, lib);
      REQUIRE(batch.cost == 1);
      const auto& chosen = pool.pair(batch.pair_ids[0]);
      const auto scored = oracle::candidate_scores(method, ds, pool, model, ctx.bald_passes, ctx.dal, start);
      const auto best = oracle::best_of(scored);
      CHECK(oracle::score_of(scored, chosen.instance, chosen.annotator) >= best.score - 1e-12);
      if (method != Method::kGroup) {  // binary group scores tie on vote balance
        CHECK(chosen.instance == best.pick.instance);
        if (best.pick.annotator) CHECK(chosen.annotator == *best.pick.annotator);
      }
      CHECK_FALSE(pool.is_labeled(batch.pair_ids[0]));
    }
  }
}
