#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "dgvae/error.hpp"
#include "dgvae/ingestion.hpp"
#include "dgvae/model.hpp"
#include "dgvae/numerics/parallel.hpp"

namespace dgvae {

using Ranking = std::vector<std::uint32_t>;

// Top-k entity indices by descending score, skipping `masked` (sorted ascending).
// Ties go to the lower index.
inline Ranking top_k(std::span<const double> scores, std::span<const std::uint32_t> masked, std::size_t k) {
  std::vector<std::uint32_t> cand;
  cand.reserve(scores.size());
  std::size_t m = 0;
  for (std::uint32_t i = 0; i < scores.size(); ++i) {
    while (m < masked.size() && masked[m] < i) ++m;
    if (m < masked.size() && masked[m] == i) continue;
    cand.push_back(i);
  }
  const std::size_t take = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                    [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  cand.resize(take);
  return cand;
}

struct RankOptions {
  std::size_t k = 20;
  std::size_t batch_size = 256;
  std::size_t threads = 0;  // 0 = thread_count()
};

// Dense B x N rows of `m` for the listed users.
inline DenseTensor dense_rows(const SparseMatrix& m, std::span<const std::uint32_t> users) {
  DenseTensor out = DenseTensor::zeros(users.size(), m.cols());
  for (std::size_t b = 0; b < users.size(); ++b) {
    if (users[b] >= m.rows()) throw ConfigError("user index " + std::to_string(users[b]) + " not in split");
    auto cols = m.row_cols(users[b]);
    auto vals = m.row_values(users[b]);
    for (std::size_t p = 0; p < cols.size(); ++p) out(b, cols[p]) = vals[p];
  }
  return out;
}

// Ranks items for each listed user from the decoder at z = mu, masking that
// user's training items. Users are scored in independent batches, so the result
// does not depend on batch size or thread count.
inline std::vector<Ranking> rank_items(const ModelParams& params, const ModelConfig& cfg, const SparseMatrix* graph,
                                       const SparseMatrix& train, std::span<const std::uint32_t> users,
                                       const RankOptions& opt) {
  if (opt.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<Ranking> out(users.size());
  const std::size_t batches = (users.size() + opt.batch_size - 1) / opt.batch_size;
  parallel_for(
      batches,
      [&](std::size_t bi) {
        const std::size_t lo = bi * opt.batch_size, hi = std::min(users.size(), lo + opt.batch_size);
        auto ids = users.subspan(lo, hi - lo);
        DenseTensor scores = score_items(params, cfg, graph, dense_rows(train, ids));
        for (std::size_t b = 0; b < ids.size(); ++b) out[lo + b] = top_k(scores.row(b), train.row_cols(ids[b]), opt.k);
      },
      opt.threads ? opt.threads : thread_count());
  return out;
}

// Popularity baseline: train interaction counts, same masking and tie rule.
inline std::vector<Ranking> rank_by_popularity(const SparseMatrix& train, std::span<const std::uint32_t> users,
                                               std::size_t k) {
  std::vector<double> pop(train.cols(), 0.0);
  for (std::size_t u = 0; u < train.rows(); ++u)
    for (auto i : train.row_cols(u)) pop[i] += 1.0;
  std::vector<Ranking> out;
  out.reserve(users.size());
  for (auto u : users) out.push_back(top_k(pop, train.row_cols(u), k));
  return out;
}

struct MetricResult {
  double mean = 0.0;
  std::vector<double> per_user;  // aligned with the evaluated users
  std::size_t users = 0;
  std::size_t skipped = 0;  // users with no relevant items
};

namespace detail {

template <class PerUser>
MetricResult average_metric(const std::vector<Ranking>& rankings, const std::vector<std::vector<std::uint32_t>>& truth,
                            PerUser per_user) {
  if (rankings.size() != truth.size()) throw ShapeError("metric: rankings and ground truth differ in user count");
  MetricResult r;
  double total = 0.0;
  for (std::size_t u = 0; u < rankings.size(); ++u) {
    if (truth[u].empty()) {
      ++r.skipped;
      continue;
    }
    const double v = per_user(rankings[u], truth[u]);
    r.per_user.push_back(v);
    total += v;
  }
  r.users = r.per_user.size();
  r.mean = r.users ? total / static_cast<double>(r.users) : 0.0;
  return r;
}

inline bool contains(const std::vector<std::uint32_t>& sorted, std::uint32_t x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

}  // namespace detail

// truth[u] must be sorted ascending. Users with empty truth are skipped.
inline MetricResult recall_at_k(const std::vector<Ranking>& rankings,
                                const std::vector<std::vector<std::uint32_t>>& truth, std::size_t k) {
  return detail::average_metric(rankings, truth, [k](const Ranking& r, const std::vector<std::uint32_t>& t) {
    std::size_t hits = 0;
    for (std::size_t p = 0; p < std::min(k, r.size()); ++p) hits += detail::contains(t, r[p]);
    return static_cast<double>(hits) / static_cast<double>(t.size());
  });
}

inline MetricResult ndcg_at_k(const std::vector<Ranking>& rankings, const std::vector<std::vector<std::uint32_t>>& truth,
                              std::size_t k) {
  return detail::average_metric(rankings, truth, [k](const Ranking& r, const std::vector<std::uint32_t>& t) {
    double dcg = 0.0, idcg = 0.0;
    for (std::size_t p = 0; p < std::min(k, r.size()); ++p)
      if (detail::contains(t, r[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    for (std::size_t p = 0; p < std::min(k, t.size()); ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    return dcg / idcg;
  });
}

struct EvalReport {
  std::map<std::size_t, double> recall;
  std::map<std::size_t, double> ndcg;
  std::map<std::size_t, std::vector<double>> recall_per_user;
  std::map<std::size_t, std::vector<double>> ndcg_per_user;
  std::vector<std::uint32_t> users;  // evaluated users, in order
  std::size_t skipped = 0;
};

inline EvalReport evaluate_rankings(const std::vector<Ranking>& rankings, std::span<const std::uint32_t> users,
                                    const std::vector<std::vector<std::uint32_t>>& truth_by_user,
                                    std::span<const std::size_t> ks) {
  std::vector<std::vector<std::uint32_t>> truth;
  truth.reserve(users.size());
  for (auto u : users) truth.push_back(truth_by_user.at(u));
  EvalReport rep;
  for (std::size_t b = 0; b < users.size(); ++b)
    if (!truth[b].empty()) rep.users.push_back(users[b]);
  for (auto k : ks) {
    auto r = recall_at_k(rankings, truth, k);
    auto n = ndcg_at_k(rankings, truth, k);
    rep.recall[k] = r.mean;
    rep.ndcg[k] = n.mean;
    rep.recall_per_user[k] = std::move(r.per_user);
    rep.ndcg_per_user[k] = std::move(n.per_user);
    rep.skipped = r.skipped;
  }
  return rep;
}

// Users with at least one interaction in `part`, ascending.
inline std::vector<std::uint32_t> users_with_items(const std::vector<std::vector<std::uint32_t>>& by_user) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t u = 0; u < by_user.size(); ++u)
    if (!by_user[u].empty()) out.push_back(u);
  return out;
}

inline nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j;
  for (auto [k, v] : r.recall) j["R@" + std::to_string(k)] = v;
  for (auto [k, v] : r.ndcg) j["N@" + std::to_string(k)] = v;
  j["users"] = r.users.size();
  j["skipped_users"] = r.skipped;
  return j;
}

// One row per evaluated user: recall columns then NDCG columns, by ascending K.
inline std::string per_user_tsv(const EvalReport& r, const std::vector<std::string>& user_ids) {
  std::string out = "user";
  for (const auto& [k, v] : r.recall) out += "\tR@" + std::to_string(k);
  for (const auto& [k, v] : r.ndcg) out += "\tN@" + std::to_string(k);
  out += '\n';
  char buf[32];
  for (std::size_t b = 0; b < r.users.size(); ++b) {
    out += user_ids.at(r.users[b]);
    for (const auto* m : {&r.recall_per_user, &r.ndcg_per_user})
      for (const auto& [k, vals] : *m) {
        std::snprintf(buf, sizeof buf, "\t%.10g", vals[b]);
        out += buf;
      }
    out += '\n';
  }
  return out;
}

// 100 (ours - baseline) / baseline, rounded to two decimals.
inline double improvement_percent(double ours, double baseline) {
  if (!(baseline > 0.0)) throw ConfigError("improvement: baseline must be positive");
  return std::round(10000.0 * (ours - baseline) / baseline) / 100.0;
}

inline std::string format_improvement(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", pct);
  return buf;
}

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
  std::size_t df = 0;
  bool degenerate = false;  // differences have zero variance
};

// Two-sided paired t-test. With zero-variance differences the statistic is
// undefined: p = 1 when all differences are zero, else 0, and `degenerate` is set.
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("paired t-test: samples differ in length");
  if (a.size() < 2) throw ConfigError("paired t-test: need at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult r;
  r.df = n - 1;
  if (sd == 0.0) {
    r.degenerate = true;
    r.p_value = mean == 0.0 ? 1.0 : 0.0;
    r.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(r.df));
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

}  // namespace dgvae
