#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dgvae/evaluator.hpp"
#include "dgvae/fixtures.hpp"

using namespace dgvae;

namespace {

// Straightforward re-statement of the metric definitions: full sort of the
// ranking prefix, set lookups, explicit ideal ordering.
double brute_recall(const Ranking& r, const std::set<std::uint32_t>& t, std::size_t k) {
  double hits = 0;
  for (std::size_t p = 0; p < r.size() && p < k; ++p) hits += t.count(r[p]) ? 1.0 : 0.0;
  return hits / static_cast<double>(t.size());
}

double brute_ndcg(const Ranking& r, const std::set<std::uint32_t>& t, std::size_t k) {
  std::vector<int> gains;
  for (std::size_t p = 0; p < r.size() && p < k; ++p) gains.push_back(t.count(r[p]) ? 1 : 0);
  double dcg = 0;
  for (std::size_t p = 0; p < gains.size(); ++p) dcg += (std::pow(2.0, gains[p]) - 1.0) / std::log2(p + 2.0);
  std::vector<int> ideal(t.size(), 1);
  ideal.resize(std::max(ideal.size(), k), 0);
  double idcg = 0;
  for (std::size_t p = 0; p < k; ++p) idcg += (std::pow(2.0, ideal[p]) - 1.0) / std::log2(p + 2.0);
  return dcg / idcg;
}

std::vector<std::vector<std::uint32_t>> as_truth(std::initializer_list<std::vector<std::uint32_t>> l) { return l; }

}  // namespace

TEST(TopK, MasksAndBreaksTies) {
  const std::vector<double> s{0.5, 0.9, 0.9, 0.1, 0.9};
  const std::vector<std::uint32_t> none;
  EXPECT_EQ(top_k(s, none, 3), (Ranking{1, 2, 4}));
  const std::vector<std::uint32_t> masked{2};
  EXPECT_EQ(top_k(s, masked, 3), (Ranking{1, 4, 0}));
  // Uniform scores: lowest unmasked indices.
  const std::vector<double> flat(6, 1.0);
  const std::vector<std::uint32_t> m2{0, 3};
  EXPECT_EQ(top_k(flat, m2, 3), (Ranking{1, 2, 4}));
  // k larger than candidates.
  const std::vector<double> three{1, 2, 3};
  const std::vector<std::uint32_t> m0{0};
  EXPECT_EQ(top_k(three, m0, 20), (Ranking{2, 1}));
}

TEST(Metrics, SmallExamples) {
  EXPECT_DOUBLE_EQ(recall_at_k({{0, 1, 2}}, as_truth({{1}}), 3).mean, 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k({{0, 1}}, as_truth({{2, 3}}), 2).mean, 0.0);
  EXPECT_DOUBLE_EQ(ndcg_at_k({{4, 0, 1}}, as_truth({{4}}), 3).mean, 1.0);
}

TEST(Metrics, NdcgClosedForms) {
  const double single = ndcg_at_k({{7, 3, 9}}, as_truth({{3}}), 2).mean;
  EXPECT_NEAR(single, 1.0 / std::log2(3.0), 1e-10);
  EXPECT_NEAR(single, 0.6309, 5e-5);
  const double two = ndcg_at_k({{3, 7, 9}}, as_truth({{3, 9}}), 3).mean;
  EXPECT_NEAR(two, (1.0 + 0.5) / (1.0 + 1.0 / std::log2(3.0)), 1e-10);
}

TEST(Metrics, MatchBruteForceOnRandomInstances) {
  Rng rng(2024);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t m = 1 + rng.index(20), n = 2 + rng.index(49), k = 1 + rng.index(n);
    std::vector<Ranking> rankings;
    std::vector<std::vector<std::uint32_t>> truth;
    double sr = 0, sn = 0;
    std::size_t counted = 0;
    for (std::size_t u = 0; u < m; ++u) {
      std::vector<std::uint32_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0u);
      rng.shuffle(std::span<std::uint32_t>(perm));
      perm.resize(rng.index(n + 1));
      rankings.push_back(perm);
      std::set<std::uint32_t> t;
      const std::size_t nt = rng.index(6);
      for (std::size_t j = 0; j < nt; ++j) t.insert(static_cast<std::uint32_t>(rng.index(n)));
      truth.emplace_back(t.begin(), t.end());
      if (!t.empty()) {
        sr += brute_recall(perm, t, k);
        sn += brute_ndcg(perm, t, k);
        ++counted;
      }
    }
    const auto r = recall_at_k(rankings, truth, k);
    const auto g = ndcg_at_k(rankings, truth, k);
    ASSERT_EQ(r.users, counted);
    ASSERT_EQ(r.skipped, m - counted);
    if (counted == 0) continue;
    ASSERT_EQ(r.mean, sr / counted) << "instance " << inst;
    ASSERT_EQ(g.mean, sn / counted) << "instance " << inst;
  }
}

TEST(Metrics, MonotoneInK) {
  Rng rng(8);
  std::vector<Ranking> rankings;
  std::vector<std::vector<std::uint32_t>> truth;
  for (int u = 0; u < 30; ++u) {
    Ranking r(40);
    std::iota(r.begin(), r.end(), 0u);
    rng.shuffle(std::span<std::uint32_t>(r));
    rankings.push_back(r);
    std::set<std::uint32_t> t{static_cast<std::uint32_t>(rng.index(40)), static_cast<std::uint32_t>(rng.index(40))};
    truth.emplace_back(t.begin(), t.end());
  }
  const auto r10 = recall_at_k(rankings, truth, 10), r20 = recall_at_k(rankings, truth, 20);
  const auto n10 = ndcg_at_k(rankings, truth, 10), n20 = ndcg_at_k(rankings, truth, 20);
  for (std::size_t u = 0; u < 30; ++u) {
    EXPECT_GE(r20.per_user[u], r10.per_user[u]);
    EXPECT_GE(n20.per_user[u], n10.per_user[u]);
  }
}

TEST(Improvement, TableValues) {
  EXPECT_EQ(format_improvement(improvement_percent(0.0636, 0.0564)), "12.77%");
  EXPECT_EQ(format_improvement(improvement_percent(0.1127, 0.1008)), "11.81%");
  EXPECT_DOUBLE_EQ(improvement_percent(0.1, 0.1), 0.0);
  EXPECT_THROW(improvement_percent(0.1, 0.0), ConfigError);
}

TEST(PairedTTest, HandComputed) {
  // d = [.01 .02 0 .02 .02]: mean .014, sd sqrt(8e-5), t = 3.5 exactly.
  const std::vector<double> a{0.10, 0.12, 0.11, 0.13, 0.12}, b{0.09, 0.10, 0.11, 0.11, 0.10};
  const auto r = paired_ttest(a, b);
  EXPECT_EQ(r.df, 4u);
  EXPECT_NEAR(r.t, 3.5, 1e-10);
  // df = 4 has a closed-form CDF: P(|T| > t) = 1 - 1.5 (s - s^3 / 3), s = t / sqrt(4 + t^2).
  const double s = 3.5 / std::sqrt(4.0 + 3.5 * 3.5);
  EXPECT_NEAR(r.p_value, 1.0 - 1.5 * (s - s * s * s / 3.0), 1e-10);
  EXPECT_FALSE(r.degenerate);
}

TEST(PairedTTest, DegenerateCases) {
  const std::vector<double> a{0.1, 0.2, 0.3};
  auto same = paired_ttest(a, a);
  EXPECT_TRUE(same.degenerate);
  EXPECT_EQ(same.p_value, 1.0);
  EXPECT_EQ(same.t, 0.0);
  const std::vector<double> x{2, 3, 4, 5, 6}, y{1, 2, 3, 4, 5};
  auto shifted = paired_ttest(x, y);
  EXPECT_TRUE(shifted.degenerate);
  EXPECT_EQ(shifted.p_value, 0.0);
  EXPECT_THROW(paired_ttest(std::vector<double>{1.0}, std::vector<double>{2.0}), ConfigError);
  EXPECT_THROW(paired_ttest(x, a), ConfigError);
}

TEST(RankItems, NeverLeaksTrainingItemsAndIsThreadInvariant) {
  const auto f = tiny_fixture();
  const std::vector<std::uint32_t> users{0, 1, 2, 3, 4, 5};
  const auto seq = rank_items(f.params, f.model, &f.graph.matrix(), f.ratings, users, {.k = 8, .batch_size = 1, .threads = 1});
  const auto par = rank_items(f.params, f.model, &f.graph.matrix(), f.ratings, users, {.k = 8, .batch_size = 2, .threads = 4});
  EXPECT_EQ(seq, par);
  for (std::size_t u = 0; u < users.size(); ++u) {
    const auto cols = f.ratings.row_cols(users[u]);
    EXPECT_EQ(seq[u].size(), 8 - cols.size());
    for (auto i : seq[u]) EXPECT_EQ(std::count(cols.begin(), cols.end(), i), 0);
    std::set<std::uint32_t> uniq(seq[u].begin(), seq[u].end());
    EXPECT_EQ(uniq.size(), seq[u].size());
  }
  EXPECT_THROW(rank_items(f.params, f.model, nullptr, f.ratings, std::vector<std::uint32_t>{6}, {}), ConfigError);
}

TEST(RankItems, MatchesExhaustiveScoring) {
  const auto f = tiny_fixture();
  const DenseTensor r = f.ratings.to_dense();
  const DenseTensor scores = score_items(f.params, f.model, &f.graph.matrix(), r);
  const std::vector<std::uint32_t> users{0, 1, 2, 3, 4, 5};
  const auto ranked = rank_items(f.params, f.model, &f.graph.matrix(), f.ratings, users, {.k = 3});
  for (std::uint32_t u = 0; u < 6; ++u) {
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t i = 0; i < 8; ++i)
      if (r(u, i) == 0.0) all.push_back({-scores(u, i), i});
    std::sort(all.begin(), all.end());
    Ranking expect;
    for (std::size_t p = 0; p < 3; ++p) expect.push_back(all[p].second);
    EXPECT_EQ(ranked[u], expect);
  }
}

TEST(Popularity, RanksByTrainCountsWithMasking) {
  // Item counts: 0 -> 3, 1 -> 1, 2 -> 2, 3 -> 0.
  const auto train = SparseMatrix::from_triplets(
      3, 4, {{0, 0, 1.0}, {1, 0, 1.0}, {2, 0, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}, {2, 1, 1.0}});
  const std::vector<std::uint32_t> users{0, 2};
  const auto r = rank_by_popularity(train, users, 2);
  EXPECT_EQ(r[0], (Ranking{1, 3}));
  EXPECT_EQ(r[1], (Ranking{2, 3}));
}

TEST(Report, EvaluateRankingsAndJson) {
  const std::vector<Ranking> rankings{{1, 2, 3}, {0, 1, 2}};
  const std::vector<std::uint32_t> users{0, 1};
  const std::vector<std::vector<std::uint32_t>> truth{{2}, {}};
  const std::vector<std::size_t> ks{1, 3};
  const auto rep = evaluate_rankings(rankings, users, truth, ks);
  EXPECT_EQ(rep.users, (std::vector<std::uint32_t>{0}));
  EXPECT_EQ(rep.skipped, 1u);
  EXPECT_DOUBLE_EQ(rep.recall.at(1), 0.0);
  EXPECT_DOUBLE_EQ(rep.recall.at(3), 1.0);
  const auto j = report_json(rep);
  EXPECT_TRUE(j.contains("R@1") && j.contains("R@3") && j.contains("N@1") && j.contains("N@3"));
  const std::string tsv = per_user_tsv(rep, {"alice", "bob"});
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "user\tR@1\tR@3\tN@1\tN@3");
  EXPECT_NE(tsv.find("alice\t0\t1\t0\t"), std::string::npos);
}
