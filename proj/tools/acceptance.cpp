// Acceptance suite: one PASS/FAIL line per criterion, each at its stated tolerance.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dgvae/dgvae.hpp"
#include "dgvae/fixtures.hpp"

#ifndef DGVAE_CLI_PATH
#define DGVAE_CLI_PATH "dgvae"
#endif

namespace fs = std::filesystem;
using namespace dgvae;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto f = tiny_fixture();
  GradcheckOptions opt;
  opt.step = 1e-5;
  opt.tolerance = 1e-4;
  const auto rep = tiny_gradcheck(f, opt);
  const double secs = seconds_since(t0);
  std::size_t scalars = 0;
  for (const auto& p : rep.params) scalars += p.count;
  const bool ok = rep.max_relative_error < 1e-4 && secs < 30.0 && f.ratings.rows() == 6 && f.ratings.cols() == 8 &&
                  f.words.cols() == 10 && f.model.num_prototypes == 3 && f.model.latent_dim == 4 && f.model.gcn_layers == 2;
  return {ok, fmt("%zu scalars, max rel err %.2e (< 1e-4), %.2fs (< 30s)", scalars, rep.max_relative_error, secs)};
}

// Metric definitions restated with sets and explicit gain vectors.
double oracle_recall(const Ranking& r, const std::set<std::uint32_t>& t, std::size_t k) {
  double hits = 0;
  for (std::size_t p = 0; p < r.size() && p < k; ++p) hits += t.count(r[p]) ? 1.0 : 0.0;
  return hits / static_cast<double>(t.size());
}

double oracle_ndcg(const Ranking& r, const std::set<std::uint32_t>& t, std::size_t k) {
  double dcg = 0, idcg = 0;
  for (std::size_t p = 0; p < k; ++p) {
    const double disc = std::log2(static_cast<double>(p) + 2.0);
    if (p < r.size() && t.count(r[p])) dcg += (std::pow(2.0, 1) - 1.0) / disc;
    if (p < t.size()) idcg += (std::pow(2.0, 1) - 1.0) / disc;
  }
  return dcg / idcg;
}

Outcome metric_oracles() {
  Rng rng(2024);
  std::size_t mismatches = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t m = 1 + rng.index(20), n = 2 + rng.index(49), k = 1 + rng.index(n);
    std::vector<Ranking> rankings;
    std::vector<std::vector<std::uint32_t>> truth;
    double sr = 0, sn = 0;
    std::size_t counted = 0;
    for (std::size_t u = 0; u < m; ++u) {
      Ranking perm(n);
      for (std::uint32_t i = 0; i < n; ++i) perm[i] = i;
      rng.shuffle(std::span<std::uint32_t>(perm));
      perm.resize(rng.index(n + 1));
      std::set<std::uint32_t> t;
      for (std::size_t j = 0, nt = rng.index(6); j < nt; ++j) t.insert(static_cast<std::uint32_t>(rng.index(n)));
      if (!t.empty()) {
        sr += oracle_recall(perm, t, k);
        sn += oracle_ndcg(perm, t, k);
        ++counted;
      }
      rankings.push_back(std::move(perm));
      truth.emplace_back(t.begin(), t.end());
    }
    if (!counted) continue;
    const double c = static_cast<double>(counted);
    if (recall_at_k(rankings, truth, k).mean != sr / c || ndcg_at_k(rankings, truth, k).mean != sn / c) ++mismatches;
  }
  const double one = ndcg_at_k({{7, 3, 9}}, {{3}}, 2).mean;
  const double two = ndcg_at_k({{3, 7, 9}}, {{3, 9}}, 3).mean;
  const double e1 = std::fabs(one - 1.0 / std::log2(3.0));
  const double e2 = std::fabs(two - 1.5 / (1.0 + 1.0 / std::log2(3.0)));
  const bool ok = mismatches == 0 && e1 < 1e-10 && e2 < 1e-10;
  // The printed approximation for the two-hit case does not match its own
  // expression; report both so the discrepancy is visible.
  return {ok, fmt("200 instances, %zu mismatches; 1/log2(3): %.10f (err %.1e); (1+1/2)/(1+1/log2 3): %.10f (err %.1e, "
                  "stated approx 0.9103 differs by %.4f)",
                  mismatches, one, e1, two, e2, two - 0.9103)};
}

Outcome reported_arithmetic() {
  struct Row {
    const char* name;
    std::size_t users, items, interactions;
    const char* expect;
  };
  const Row rows[] = {{"Baby", 19445, 7050, 160792, "99.88%"},
                      {"Sports", 35598, 18357, 296337, "99.95%"},
                      {"Clothing", 39387, 23033, 278677, "99.97%"}};
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const std::string got = format_percent(sparsity(r.users, r.items, r.interactions));
    ok &= got == r.expect;
    detail += std::string(r.name) + " " + got + ", ";
  }
  const std::string a = format_improvement(improvement_percent(0.0636, 0.0564));
  const std::string b = format_improvement(improvement_percent(0.1127, 0.1008));
  ok &= a == "12.77%" && b == "11.81%";
  return {ok, detail + "improv. " + a + " / " + b};
}

Outcome graph_invariants() {
  bool ok = true;
  std::string why;
  Rng rng(17);
  // Row counts: exactly min(k, N) ones, including k > N.
  for (std::size_t n : {1u, 5u, 12u, 40u})
    for (std::size_t k : {1u, 3u, 10u, 50u}) {
      DenseTensor x = DenseTensor::zeros(n, 6);
      for (double& v : x.values()) v = rng.normal();
      const auto b = knn_binarize(x, {.k = k, .block_rows = 7});
      for (std::size_t i = 0; i < n; ++i) {
        const auto vals = b.row_values(i);
        const bool ones = std::all_of(vals.begin(), vals.end(), [](double v) { return v == 1.0; });
        if (vals.size() != std::min(k, n) || !ones) {
          ok = false;
          why = fmt("row %zu of N=%zu,k=%zu has %zu entries", i, n, k, vals.size());
        }
      }
    }
  // Hand fixture: item 0 links to 1 and 2, items 1 and 2 link back to 0.
  // Degrees 2, 1, 1, so every entry is 1/sqrt(2).
  const auto star = SparseMatrix::from_dense(DenseTensor::from_rows({{0, 1, 1}, {1, 0, 0}, {1, 0, 0}}));
  const auto ns = symmetric_normalize(star);
  ok &= ns.nnz() == 4;
  for (const auto& t : ns.triplets()) ok &= std::fabs(t.value - 1.0 / std::sqrt(2.0)) < 1e-15;
  // Asymmetric fixture: degrees 1, 2, 3.
  const auto asym = SparseMatrix::from_dense(DenseTensor::from_rows({{0, 0, 1}, {1, 0, 1}, {1, 1, 1}}));
  const double deg[3] = {1, 2, 3};
  for (const auto& t : symmetric_normalize(asym).triplets())
    ok &= std::fabs(t.value - 1.0 / std::sqrt(deg[t.row] * deg[t.col])) < 1e-15;
  // Fusion weights.
  DenseTensor xv = DenseTensor::zeros(20, 5), xt = DenseTensor::zeros(20, 5);
  for (double& v : xv.values()) v = rng.normal();
  for (double& v : xt.values()) v = rng.normal();
  const auto v = build_modality_graph({Modality::kVisual, xv}, {.k = 3});
  const auto t = build_modality_graph({Modality::kTextual, xt}, {.k = 3});
  const auto g = build_item_graph({Modality::kVisual, xv}, {Modality::kTextual, xt}, 0.1, {.k = 3});
  double worst = 0;
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j)
      worst = std::max(worst, std::fabs(g.matrix().at(i, j) - (0.1 * v.normalized.at(i, j) + 0.9 * t.normalized.at(i, j))));
  ok &= worst < 1e-15 && g.alphas() == std::vector<double>{0.1, 1.0 - 0.1};
  return {ok, why.empty() ? fmt("row counts min(k,N) on 16 shapes; 1/sqrt(d_i d_j) on 2 hand fixtures; fusion 0.1/0.9, "
                                "max dev %.1e",
                                worst)
                          : why};
}

Outcome vae_invariants() {
  const double s0 = 0.1;
  Rng rng(3);
  auto kl_of = [&](const DenseTensor& mu, const DenseTensor& sigma) {
    DenseTensor b = sigma;
    for (double& x : b.values()) x = -2.0 * std::log(x / s0);
    Tape tape;
    return kl_term({tape.constant(mu), tape.constant(sigma), tape.constant(b)}, s0).value().item();
  };
  std::size_t negative = 0;
  double min_kl = 1e300;
  for (int i = 0; i < 1000; ++i) {
    DenseTensor mu = DenseTensor::zeros(1, 4), sigma = DenseTensor::zeros(1, 4);
    for (double& x : mu.values()) x = rng.normal();
    for (double& x : sigma.values()) x = 0.01 + rng.uniform();
    const double kl = kl_of(mu, sigma);
    if (!(kl > 0.0)) ++negative;
    min_kl = std::min(min_kl, kl);
  }
  const double at_prior = kl_of(DenseTensor::zeros(1, 4), DenseTensor::filled(1, 4, s0));
  // One coordinate off the prior makes it strictly positive.
  DenseTensor nudged = DenseTensor::zeros(1, 4);
  nudged(0, 2) = 1e-3;
  const double off_prior = kl_of(nudged, DenseTensor::filled(1, 4, s0));

  // Decoder and encoder on the tiny fixture, plus random batches.
  const auto f = tiny_fixture();
  double row_err = 0, norm_err = 0;
  bool z_is_mu = true;
  for (int trial = 0; trial < 10; ++trial) {
    auto p = f.params;
    if (trial) {
      Rng r2(100 + trial);
      p = init_params(f.model, 8, 10, r2);
    }
    Tape tape;
    ParamVars pv = bind_params(tape, p, false);
    const Var r = tape.constant(f.ratings.to_dense());
    std::vector<DenseTensor> zero(f.model.num_prototypes, DenseTensor::zeros(6, f.model.latent_dim));
    const auto out = forward_branch(r, pv.prototypes, pv.rating, &f.graph.matrix(), f.model, &zero);
    const DenseTensor lp = out.log_pi.value();
    for (std::size_t u = 0; u < lp.rows(); ++u) {
      double s = 0;
      for (double x : lp.row(u)) s += std::exp(x);
      row_err = std::max(row_err, std::fabs(s - 1.0));
    }
    for (std::size_t k = 0; k < out.posteriors.size(); ++k) {
      const DenseTensor mu = out.posteriors[k].mu.value();
      for (std::size_t u = 0; u < mu.rows(); ++u) {
        double s = 0;
        for (double x : mu.row(u)) s += x * x;
        norm_err = std::max(norm_err, std::fabs(std::sqrt(s) - 1.0));
      }
      z_is_mu &= out.z[k].value() == mu;
    }
  }
  const bool ok = negative == 0 && at_prior == 0.0 && off_prior > 0.0 && row_err <= 1e-12 && norm_err <= 1e-12 && z_is_mu;
  return {ok, fmt("KL min %.3e over 1000 draws, %zu non-positive; KL at prior %.1e, nudged %.1e; decoder row sum err %.1e; "
                  "|mu| err %.1e; eps=0 gives z=mu: %s",
                  min_kl, negative, at_prior, off_prior, row_err, norm_err, z_is_mu ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// Five seeded trainings on the default synthetic config, shared by the
// disentanglement, ranking and interpretability criteria.

struct SeedRun {
  std::uint64_t seed = 0;
  double purity = 0, recall = 0, pop_recall = 0, interp = 0, seconds = 0;
  std::size_t one_hot_users = 0, epochs = 0;
};

SeedRun run_seed(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig sc;
  sc.seed = seed;
  const auto d = generate(sc);
  PrepareOptions po;
  po.seed = seed;
  const auto p = prepare(d.interactions, d.tokens, d.visual, d.textual, po);
  const auto g = build_item_graph(p.visual, p.textual, 0.1, {});
  ModelConfig mc;
  mc.latent_dim = 16;
  TrainConfig tc;
  tc.mi_weight = 0.2;
  tc.seed = seed;
  const SparseMatrix train = p.split.matrix(SplitPart::kTrain);
  const TrainData td{&train, &p.words.weights, &g.matrix(), p.split.items_by_user(SplitPart::kValidation)};
  const auto res = fit(mc, tc, td);
  const ModelParams& best = res.best_params;

  SeedRun out;
  out.seed = seed;
  out.epochs = res.log.size();
  const auto items = item_prototypes(best, mc);
  const auto item_label = d.truth.item_label_map();
  std::vector<std::size_t> learned, truth;
  for (std::size_t i = 0; i < p.split.num_items(); ++i) {
    learned.push_back(items[i].prototype);
    truth.push_back(item_label.at(p.split.item_ids[i]));
  }
  out.purity = prototype_purity(learned, truth, sc.prototypes);

  const auto test = p.split.items_by_user(SplitPart::kTest);
  const auto users = users_with_items(test);
  const std::vector<std::size_t> ks{20};
  out.recall = evaluate_rankings(rank_items(best, mc, &g.matrix(), train, users, {.k = 20}), users, test, ks).recall.at(20);
  out.pop_recall = evaluate_rankings(rank_by_popularity(train, users, 20), users, test, ks).recall.at(20);

  // Each one-hot user: top-10 words of the prototype the model weights most for
  // them, scored by the fraction drawn from the user's planted word pool.
  const auto word_label = d.truth.word_label_map();
  const auto train_by_user = p.split.items_by_user(SplitPart::kTrain);
  std::map<std::string, std::size_t> index_of;
  for (std::uint32_t u = 0; u < p.split.num_users(); ++u) index_of[p.split.user_ids[u]] = u;
  double total = 0;
  for (std::size_t gu : d.truth.one_hot_users()) {
    const auto it = index_of.find(d.truth.user_ids[gu]);
    if (it == index_of.end()) continue;
    const std::uint32_t u = it->second;
    const auto& mix = d.truth.user_mixtures[gu];
    const std::size_t planted = static_cast<std::size_t>(std::max_element(mix.begin(), mix.end()) - mix.begin());
    const auto w = user_prototype_weights(items, train_by_user[u]);
    const std::size_t k = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    const auto top = top_words(best, mc, dense_rows(p.words.weights, std::vector<std::uint32_t>{u}), k, 10,
                               p.words.vocabulary);
    std::size_t hits = 0;
    for (const auto& sw : top) hits += word_label.at(sw.word) == planted;
    total += static_cast<double>(hits) / 10.0;
    ++out.one_hot_users;
  }
  out.interp = out.one_hot_users ? total / static_cast<double>(out.one_hot_users) : 0.0;
  out.seconds = seconds_since(t0);
  return out;
}

const std::vector<SeedRun>& seed_runs() {
  static const std::vector<SeedRun> runs = [] {
    std::vector<SeedRun> r;
    for (std::uint64_t s = 0; s < 5; ++s) {
      r.push_back(run_seed(s));
      const auto& x = r.back();
      std::fprintf(stderr, "  seed %llu: purity %.3f, R@20 %.4f vs popularity %.4f, top-word precision %.3f, %zu epochs, %.1fs\n",
                   static_cast<unsigned long long>(x.seed), x.purity, x.recall, x.pop_recall, x.interp, x.epochs, x.seconds);
    }
    return r;
  }();
  return runs;
}

Outcome disentanglement_recovery() {
  const auto& runs = seed_runs();
  std::size_t good = 0;
  double worst_time = 0;
  std::string list;
  for (const auto& r : runs) {
    good += r.purity >= 0.8;
    worst_time = std::max(worst_time, r.seconds);
    list += fmt("%s%.3f", list.empty() ? "" : " ", r.purity);
  }
  return {good >= 4 && worst_time < 300.0,
          fmt("purity per seed [%s], %zu/5 >= 0.8 (need 4); slowest seed %.1fs (< 300s)", list.c_str(), good, worst_time)};
}

Outcome ranking_sanity() {
  const auto& runs = seed_runs();
  bool all_above = true;
  std::vector<double> gains;
  std::string list;
  for (const auto& r : runs) {
    all_above &= r.recall > r.pop_recall;
    gains.push_back((r.recall - r.pop_recall) / r.pop_recall);
    list += fmt("%s%.4f/%.4f", list.empty() ? "" : " ", r.recall, r.pop_recall);
  }
  const double med = median(gains);
  return {all_above && med >= 0.2,
          fmt("R@20 ours/popularity [%s]; beats on all seeds: %s; median relative gain %.1f%% (need >= 20%%)", list.c_str(),
              all_above ? "yes" : "no", 100.0 * med)};
}

Outcome interpretability_oracle() {
  const auto& runs = seed_runs();
  std::vector<double> v;
  std::string list;
  for (const auto& r : runs) {
    v.push_back(r.interp);
    list += fmt("%s%.3f", list.empty() ? "" : " ", r.interp);
  }
  const double med = median(v);
  return {med >= 0.6, fmt("planted-word fraction in top-10 per seed [%s], median %.3f (need >= 0.6)", list.c_str(), med)};
}

// ---------------------------------------------------------------------------

int shell(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream x(a, std::ios::binary), y(b, std::ios::binary);
  if (!x || !y) return false;
  std::stringstream sx, sy;
  sx << x.rdbuf();
  sy << y.rdbuf();
  return sx.str() == sy.str();
}

Outcome determinism(const std::string& cli, const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string q = "'" + cli + "'", w = "'" + work.string() + "'";
  if (shell(q + " synth --out " + w + "/syn --seed 7") ||
      shell(q + " prepare --interactions " + w + "/syn/interactions.tsv --tokens " + w + "/syn/tokens.jsonl --visual " + w +
            "/syn/visual.emb --textual " + w + "/syn/textual.emb --out " + w + "/data --seed 7") ||
      shell(q + " graph --data " + w + "/data"))
    return {false, "could not prepare inputs with " + cli};
  for (const char* threads : {"1", "4"})
    if (shell(std::string("DGVAE_THREADS=") + threads + " " + q + " train --quiet --seed 7 --data " + w + "/data --out " + w +
              "/run" + threads))
      return {false, std::string("train failed with DGVAE_THREADS=") + threads};
  std::string detail;
  bool ok = true;
  for (const char* f : {"train_log.jsonl", "last.ckpt", "best.ckpt"}) {
    const bool same = same_bytes(work / "run1" / f, work / "run4" / f);
    ok &= same;
    detail += std::string(detail.empty() ? "" : ", ") + f + (same ? " identical" : " DIFFER");
  }
  std::ifstream log(work / "run1" / "train_log.jsonl");
  const auto epochs = std::count(std::istreambuf_iterator<char>(log), std::istreambuf_iterator<char>(), '\n');
  return {ok, detail + fmt(" (DGVAE_THREADS=1 vs 4, %ld epochs)", static_cast<long>(epochs))};
}

RawInteractions ten_item_fixture() {
  // 12 users over 10 items; every item has at least 4 interactions.
  RawInteractions r;
  for (int u = 0; u < 12; ++u)
    for (int j = 0; j < 5; ++j) r.pairs.push_back({"u" + std::to_string(u), "i" + std::to_string((u + 2 * j) % 10)});
  return r;
}

Outcome cold_start_protocol() {
  const auto raw = ten_item_fixture();
  bool ok = true;
  std::string detail;
  for (std::size_t keep : {2u, 0u}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto s = cold_start_split(raw, 0.2, keep, seed);
      std::map<std::uint32_t, std::size_t> tr, va, te, total;
      for (const auto& e : s.train) ++tr[e.item], ++total[e.item];
      for (const auto& e : s.validation) ++va[e.item], ++total[e.item];
      for (const auto& e : s.test) ++te[e.item], ++total[e.item];
      std::set<std::uint32_t> cold;
      for (auto [i, c] : va) cold.insert(i);
      for (auto [i, c] : te) cold.insert(i);
      // floor(0.2 * 10) = 2 sampled items, one validation and one test.
      bool good = s.num_interactions() == raw.size() && s.num_items() == 10 && va.size() == 1 && te.size() == 1 &&
                  va.begin()->first != te.begin()->first;
      for (auto i : cold) {
        const std::size_t in_train = tr.count(i) ? tr[i] : 0;
        good &= in_train == keep && in_train + va[i] + te[i] == total[i];
      }
      for (std::uint32_t i = 0; i < 10; ++i)
        if (!cold.count(i)) good &= tr[i] == total[i];
      ok &= good;
    }
    detail += fmt("%skeep=%zu: 20 seeds checked", detail.empty() ? "" : "; ", keep);
  }
  return {ok, detail + "; cold items keep exactly `keep` train rows, zero-shot items absent from train"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dgvae acceptance suite"};
  std::string cli = DGVAE_CLI_PATH, work = (fs::temp_directory_path() / "dgvae_acceptance").string();
  std::vector<std::string> only, expect_fail;
  app.add_option("--cli", cli, "dgvae executable used by the determinism check")->capture_default_str();
  app.add_option("--work", work, "scratch directory")->capture_default_str();
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--expect-fail", expect_fail,
                 "criteria known to fail; still evaluated and reported, but do not set the exit status");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient_correctness", gradient_correctness},
      {"metric_oracles", metric_oracles},
      {"reported_arithmetic", reported_arithmetic},
      {"graph_invariants", graph_invariants},
      {"vae_invariants", vae_invariants},
      {"disentanglement_recovery", disentanglement_recovery},
      {"ranking_sanity", ranking_sanity},
      {"interpretability_oracle", interpretability_oracle},
      {"determinism", [&] { return determinism(cli, work); }},
      {"cold_start_protocol", cold_start_protocol},
  };
  for (const auto& name : only)
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", name.c_str());
      return 2;
    }

  std::size_t failed = 0, expected = 0, ran = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const bool known = std::find(expect_fail.begin(), expect_fail.end(), name) != expect_fail.end();
    const char* tag = o.pass ? (known ? "PASS (expected fail)" : "PASS") : (known ? "FAIL (expected)" : "FAIL");
    std::printf("%-4s %-26s %s [%.1fs]\n", tag, name.c_str(), o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    if (!o.pass) (known ? expected : failed)++;
  }
  std::printf("%zu/%zu criteria passed", ran - failed - expected, ran);
  if (expected) std::printf(", %zu known failure%s", expected, expected == 1 ? "" : "s");
  std::printf("\n");
  return failed ? 1 : 0;
}
