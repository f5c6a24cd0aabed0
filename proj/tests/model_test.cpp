#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "dgvae/fixtures.hpp"
#include "dgvae/mi_align.hpp"
#include "dgvae/model.hpp"
#include "dgvae/trainer.hpp"

using namespace dgvae;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const DenseTensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> unit(std::vector<double> v) {
  const double n = std::sqrt(dot(v, v));
  if (n >= 1e-12)
    for (double& x : v) x /= n;
  return v;
}

double sp(double x) { return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0); }

struct OracleBranch {
  double neg_elbo = 0;
  std::vector<Mat> z;  // [k][u][d]
};

// Plain-loop forward pass of one branch. `graph` empty means identity.
OracleBranch oracle_branch(const Mat& r, const Mat& h, const Mat& m, const Mat& w, const std::vector<double>& bias,
                           const Mat& graph, std::size_t layers, const std::vector<Mat>& eps, double tau, double s0,
                           double beta) {
  const std::size_t users = r.size(), n = h.size(), kk = m.size(), d = m[0].size();
  Mat c(n, std::vector<double>(kk));
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -1e300, tot = 0;
    for (std::size_t k = 0; k < kk; ++k) mx = std::max(mx, dot(h[i], m[k]) / tau);
    for (std::size_t k = 0; k < kk; ++k) tot += c[i][k] = std::exp(dot(h[i], m[k]) / tau - mx);
    for (std::size_t k = 0; k < kk; ++k) c[i][k] /= tot;
  }
  OracleBranch out;
  out.z.assign(kk, Mat(users));
  Mat hn;
  for (const auto& row : h) hn.push_back(unit(row));
  double total = 0;
  for (std::size_t u = 0; u < users; ++u) {
    double kl = 0;
    for (std::size_t k = 0; k < kk; ++k) {
      std::vector<double> e(n);
      for (std::size_t i = 0; i < n; ++i) e[i] = r[u][i] * c[i][k];
      e = unit(e);
      std::vector<double> g = e;
      if (graph.empty()) {
        for (std::size_t i = 0; i < n; ++i) g[i] = 2 * e[i];
      } else {
        for (std::size_t l = 0; l < layers; ++l) {
          std::vector<double> nx(n, 0.0);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) nx[j] += g[i] * graph[i][j];
          g = nx;
        }
        for (std::size_t i = 0; i < n; ++i) g[i] += e[i];
      }
      std::vector<double> a(d), b(d);
      for (std::size_t j = 0; j < 2 * d; ++j) {
        double v = bias[j];
        for (std::size_t i = 0; i < n; ++i) v += g[i] * w[i][j];
        (j < d ? a[j] : b[j - d]) = v;
      }
      a = unit(a);
      std::vector<double> z(d);
      for (std::size_t j = 0; j < d; ++j) {
        const double sigma = s0 * std::exp(-b[j] / 2);
        z[j] = a[j] + eps[k][u][j] * sigma;
        kl += std::log(s0 / sigma) + (sigma * sigma + a[j] * a[j]) / (2 * s0 * s0) - 0.5;
      }
      out.z[k][u] = z;
    }
    std::vector<double> s(n, 0.0);
    for (std::size_t k = 0; k < kk; ++k) {
      auto zn = unit(out.z[k][u]);
      for (std::size_t i = 0; i < n; ++i) s[i] += c[i][k] * std::exp(dot(zn, hn[i]) / tau);
    }
    double sum = 0;
    for (double v : s) sum += v;
    double ll = 0;
    for (std::size_t i = 0; i < n; ++i) ll += r[u][i] * std::max(std::log(s[i] / sum), std::log(1e-12));
    total += beta * kl - ll;
  }
  out.neg_elbo = total / static_cast<double>(users);
  return out;
}

// Attention-fused latents: query latents q attend over key/value latents v.
std::vector<Mat> oracle_fuse(const std::vector<Mat>& q, const std::vector<Mat>& v) {
  const std::size_t kk = q.size(), users = q[0].size(), d = q[0][0].size();
  std::vector<Mat> out(kk, Mat(users, std::vector<double>(d, 0.0)));
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t k = 0; k < kk; ++k)
      for (std::size_t j = 0; j < kk; ++j) {
        double l1 = 0;
        for (std::size_t x = 0; x < d; ++x) l1 += std::fabs(q[k][u][x] - v[j][u][x]);
        const double a = std::tanh(dot(q[k][u], v[j][u]) / std::sqrt(double(d))) *
                         (1.0 / (1.0 + std::exp(l1 / std::sqrt(double(d)))));
        for (std::size_t x = 0; x < d; ++x) out[k][u][x] += a * v[j][u][x];
      }
  return out;
}

double oracle_mi(const std::vector<Mat>& zr, const std::vector<Mat>& zw) {
  const std::size_t kk = zr.size(), users = zr[0].size();
  double total = 0;
  for (std::size_t k = 0; k < kk; ++k)
    for (std::size_t j = 0; j < kk; ++j) {
      double acc = 0;
      for (std::size_t u = 0; u < users; ++u) acc += sp(j == k ? -dot(zr[k][u], zw[j][u]) : dot(zr[k][u], zw[j][u]));
      total += acc / static_cast<double>(users);
    }
  return total;
}

std::vector<Mat> noise_mats(const std::vector<DenseTensor>& eps) {
  std::vector<Mat> out;
  for (const auto& e : eps) out.push_back(to_mat(e));
  return out;
}

double oracle_total(const TinyFixture& f) {
  const auto& p = f.params;
  const auto& c = f.model;
  auto r = oracle_branch(to_mat(f.ratings.to_dense()), to_mat(p.rating.entities), to_mat(p.prototypes),
                         to_mat(p.rating.weight), to_mat(p.rating.bias)[0], to_mat(f.graph.matrix().to_dense()),
                         c.gcn_layers, noise_mats(f.noise.rating), c.temperature, c.prior_scale, f.train.kl_weight);
  auto w = oracle_branch(to_mat(f.words.to_dense()), to_mat(p.word.entities), to_mat(p.prototypes),
                         to_mat(p.word.weight), to_mat(p.word.bias)[0], {}, c.gcn_layers, noise_mats(f.noise.word),
                         c.temperature, c.prior_scale, f.train.kl_weight);
  const auto fr = oracle_fuse(w.z, r.z);
  const auto fw = oracle_fuse(r.z, w.z);
  return r.neg_elbo + w.neg_elbo + f.train.mi_weight * oracle_mi(fr, fw);
}

DenseTensor values_of(const Var& v) { return v.value(); }

}  // namespace

// ---------------------------------------------------------------------------
// Assignment

TEST(PrototypeAssign, ClosedForm) {
  auto m = DenseTensor::from_rows({{1, 0}, {0, 1}});
  auto a = prototype_assign(DenseTensor::from_rows({{1, 0}, {0, 0}}), m, 1.0);
  EXPECT_NEAR(a.logits(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(a.logits(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(a.soft(0, 0), 0.7310585786300049, 1e-12);
  EXPECT_NEAR(a.soft(0, 1), 0.2689414213699951, 1e-12);
  EXPECT_DOUBLE_EQ(a.soft(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(a.soft(1, 1), 0.5);
  auto sharp = prototype_assign(DenseTensor::from_rows({{1, 0}}), m, 0.1);
  EXPECT_GT(sharp.soft(0, 0), a.soft(0, 0));
  EXPECT_THROW(prototype_assign(m, m, 0.0), ConfigError);
}

TEST(PrototypeAssign, RowsSumToOneAndMatchTapeVersion) {
  Rng rng(1);
  auto h = xavier_uniform(12, 4, rng), m = xavier_uniform(3, 4, rng);
  auto a = prototype_assign(h, m, 0.1);
  Tape tape;
  auto c = assign(tape.constant(h), tape.constant(m), 0.1).value();
  for (std::size_t i = 0; i < 12; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      s += a.soft(i, k);
      EXPECT_NEAR(a.soft(i, k), c(i, k), 1e-15);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  auto hard = hard_assignment(DenseTensor::from_rows({{0.7, 0.2, 0.1}, {1, 1, 1}}));
  EXPECT_EQ(hard[0], 0u);
  EXPECT_EQ(hard[1], 0u);
}

// ---------------------------------------------------------------------------
// Encoder pieces

TEST(ResGcn, Examples) {
  Tape tape;
  auto e = tape.constant(DenseTensor::from_rows({{1, 0}}));
  auto id = SparseMatrix::identity(2);
  auto swap = SparseMatrix::from_dense(DenseTensor::from_rows({{0, 1}, {1, 0}}));
  for (std::size_t l : {0u, 1u, 2u, 5u}) {
    EXPECT_EQ(values_of(res_gcn(e, &id, l)), DenseTensor::from_rows({{2, 0}}));
    EXPECT_EQ(values_of(res_gcn(e, nullptr, l)), DenseTensor::from_rows({{2, 0}}));
  }
  EXPECT_EQ(values_of(res_gcn(e, &swap, 2)), DenseTensor::from_rows({{2, 0}}));
  EXPECT_EQ(values_of(res_gcn(e, &swap, 1)), DenseTensor::from_rows({{1, 1}}));
  auto three = SparseMatrix::identity(3);
  EXPECT_THROW(res_gcn(e, &three, 1), ShapeError);
}

TEST(Encode, MaskNormalizeAndPosteriorShape) {
  ModelConfig cfg;
  cfg.latent_dim = 2;
  cfg.gcn_layers = 0;
  Tape tape;
  auto r = tape.constant(DenseTensor::from_rows({{1, 0, 1}}));
  auto c = tape.constant(DenseTensor::from_rows({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}));
  auto masked = ad::mul_row(r, ad::transpose(ad::column(c, 0)));
  EXPECT_EQ(masked.value(), DenseTensor::from_rows({{0.5, 0, 0.5}}));

  // Identity-like weights: a = 2 * normalized mask in the first two slots, b = 0.
  auto w = DenseTensor::zeros(3, 4);
  w(0, 0) = 1;
  w(2, 1) = 1;
  BranchVars p{tape.constant(DenseTensor::zeros(3, 2)), tape.constant(w), tape.constant(DenseTensor::zeros(1, 4))};
  auto q = encode(r, c, 0, nullptr, p, cfg);
  EXPECT_NEAR(q.mu.value()(0, 0), 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(q.mu.value()(0, 1), 1 / std::sqrt(2.0), 1e-15);
  for (double s : q.sigma.value().values()) EXPECT_DOUBLE_EQ(s, cfg.prior_scale);
}

TEST(Encode, EmptyRowStaysFinite) {
  ModelConfig cfg;
  cfg.latent_dim = 3;
  Rng rng(2);
  auto params = init_params(cfg, 5, 4, rng);
  Tape tape;
  auto pv = bind_params(tape, params, false);
  auto c = assign(pv.rating.entities, pv.prototypes, cfg.temperature);
  auto r = tape.constant(DenseTensor::zeros(1, 5));
  auto g = SparseMatrix::identity(5);
  for (std::size_t k = 0; k < cfg.num_prototypes; ++k) {
    auto q = encode(r, c, k, &g, pv.rating, cfg);
    EXPECT_TRUE(q.mu.value().all_finite());
    EXPECT_TRUE(q.sigma.value().all_finite());
    EXPECT_EQ(l2_norm(q.mu.value().row(0)), 0.0);  // zero bias: degenerate zero mean
  }
}

TEST(Encode, MuUnitNormAndSigmaPositiveOnRandomInputs) {
  auto f = tiny_fixture();
  Tape tape;
  auto pv = bind_params(tape, f.params, false);
  auto out = forward_branch(tape.constant(f.ratings.to_dense()), pv.prototypes, pv.rating, &f.graph.matrix(), f.model,
                            &f.noise.rating);
  for (const auto& q : out.posteriors) {
    for (std::size_t u = 0; u < 6; ++u) EXPECT_NEAR(l2_norm(q.mu.value().row(u)), 1.0, 1e-12);
    for (double s : q.sigma.value().values()) EXPECT_GT(s, 0.0);
  }
}

// ---------------------------------------------------------------------------
// Sampling

TEST(Reparameterize, Examples) {
  Tape tape;
  auto mu = tape.constant(DenseTensor::from_rows({{0.3, -0.4}}));
  auto sigma = tape.constant(DenseTensor::from_rows({{0.5, 2.0}}));
  EXPECT_EQ(reparameterize(mu, sigma, tape.constant(DenseTensor::zeros(1, 2))).value(), mu.value());
  auto z = reparameterize(tape.constant(DenseTensor::zeros(1, 2)), tape.constant(DenseTensor::filled(1, 2, 1.0)),
                          tape.constant(DenseTensor::from_rows({{1, -1}})));
  EXPECT_EQ(z.value(), DenseTensor::from_rows({{1, -1}}));
}

TEST(Reparameterize, MonteCarloMean) {
  const double mu = 0.7, sigma = 0.3;
  const std::size_t n = 100000;
  Rng rng(5);
  Tape tape;
  DenseTensor eps = DenseTensor::zeros(n, 1);
  for (double& v : eps.values()) v = rng.normal();
  auto z = reparameterize(tape.constant(DenseTensor::filled(n, 1, mu)), tape.constant(DenseTensor::filled(n, 1, sigma)),
                          tape.constant(eps));
  double mean = 0;
  for (double v : z.value().values()) mean += v;
  mean /= static_cast<double>(n);
  EXPECT_LT(std::fabs(mean - mu), 3 * sigma / std::sqrt(static_cast<double>(n)));
}

// ---------------------------------------------------------------------------
// Decoder

TEST(Decode, UniformWhenEntitiesIdentical) {
  Tape tape;
  auto h = tape.constant(DenseTensor::filled(5, 3, 0.4));
  auto c = tape.constant(DenseTensor::filled(5, 1, 1.0));
  auto z = tape.constant(DenseTensor::from_rows({{0.1, -0.2, 0.3}}));
  auto lp = decode({z}, c, h, 0.1).value();
  for (double v : lp.values()) EXPECT_NEAR(v, std::log(0.2), 1e-14);
}

TEST(Decode, AlignedItemRanksFirst) {
  Tape tape;
  auto hv = DenseTensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.5, 0.5, 0}});
  auto c = tape.constant(DenseTensor::filled(4, 2, 0.5));
  auto z1 = tape.constant(DenseTensor::from_rows({{0, 2, 0}}));
  auto z2 = tape.constant(DenseTensor::from_rows({{0, 3, 0}}));
  auto lp = decode({z1, z2}, c, tape.constant(hv), 0.1).value();
  auto row = lp.row(0);
  EXPECT_EQ(std::max_element(row.begin(), row.end()) - row.begin(), 1);
}

TEST(Decode, ProbabilitiesSumToOne) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    auto h = tape.constant(xavier_uniform(30, 4, rng));
    auto c = assign(h, tape.constant(xavier_uniform(3, 4, rng)), 0.1);
    std::vector<Var> z;
    for (int k = 0; k < 3; ++k) z.push_back(tape.constant(xavier_uniform(7, 4, rng)));
    auto lp = decode(z, c, h, 0.1).value();
    for (std::size_t u = 0; u < 7; ++u) {
      double s = 0;
      for (double v : lp.row(u)) s += std::exp(v);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// ELBO terms

namespace {

Posterior posterior(Tape& tape, const DenseTensor& mu, const DenseTensor& sigma, double s0) {
  DenseTensor b = sigma;
  for (double& v : b.values()) v = -2.0 * std::log(v / s0);
  return {tape.constant(mu), tape.constant(sigma), tape.constant(b)};
}

}  // namespace

TEST(KlTerm, Examples) {
  const double s0 = 0.1;
  Tape tape;
  EXPECT_NEAR(kl_term(posterior(tape, DenseTensor::zeros(1, 4), DenseTensor::filled(1, 4, s0), s0), s0).value().item(),
              0.0, 1e-15);
  EXPECT_NEAR(kl_term(posterior(tape, DenseTensor::filled(1, 4, s0), DenseTensor::filled(1, 4, s0), s0), s0).value().item(),
              4 * 0.5, 1e-12);
}

TEST(KlTerm, NonNegativeOnRandomPosteriors) {
  const double s0 = 0.1;
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    DenseTensor mu = DenseTensor::zeros(1, 4), sigma = DenseTensor::zeros(1, 4);
    for (double& v : mu.values()) v = rng.normal();
    for (double& v : sigma.values()) v = 0.01 + rng.uniform();
    Tape tape;
    EXPECT_GE(kl_term(posterior(tape, mu, sigma, s0), s0).value().item(), 0.0);
  }
}

TEST(ReconstructionLoglik, Examples) {
  Tape tape;
  auto onehot = tape.constant(DenseTensor::from_rows({{0, 1, 0, 0}}));
  auto sure = tape.constant(DenseTensor::from_rows({{kLogProbFloor, 0, kLogProbFloor, kLogProbFloor}}));
  EXPECT_EQ(reconstruction_loglik(sure, onehot).value().item(), 0.0);
  auto uniform = tape.constant(DenseTensor::filled(1, 4, std::log(0.25)));
  EXPECT_NEAR(reconstruction_loglik(uniform, onehot).value().item(), -1.3862943611198906, 1e-12);
  auto twice = tape.constant(DenseTensor::from_rows({{0, 2, 0, 0}}));
  EXPECT_DOUBLE_EQ(reconstruction_loglik(uniform, twice).value().item(),
                   2 * reconstruction_loglik(uniform, onehot).value().item());
}

// ---------------------------------------------------------------------------
// MI alignment

TEST(Coda, Examples) {
  Tape tape;
  auto zero = tape.constant(DenseTensor::zeros(1, 4));
  EXPECT_EQ(coda_scores({zero}, {zero})[0][0].value().item(), 0.0);
  const double x = 1 / std::sqrt(2.0);  // |q|^2 = 2 = sqrt(4)
  auto q = tape.constant(DenseTensor::filled(1, 4, x));
  EXPECT_NEAR(coda_scores({q}, {q})[0][0].value().item(), std::tanh(1.0) * 0.5, 1e-12);
  EXPECT_NEAR(std::tanh(1.0) * 0.5, 0.3808, 1e-4);
}

TEST(Coda, BoundedAndPermutationEquivariant) {
  Rng rng(4);
  Tape tape;
  BranchLatents q, k;
  for (int i = 0; i < 3; ++i) {
    q.push_back(tape.constant(xavier_uniform(5, 4, rng)));
    k.push_back(tape.constant(xavier_uniform(5, 4, rng)));
  }
  auto a = coda_scores(q, k);
  const std::size_t perm[3] = {2, 0, 1};
  BranchLatents qp, kp;
  for (auto p : perm) {
    qp.push_back(q[p]);
    kp.push_back(k[p]);
  }
  auto ap = coda_scores(qp, kp);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      for (double v : a[i][j].value().values()) {
        EXPECT_GT(v, -1.0);
        EXPECT_LT(v, 1.0);
      }
      EXPECT_EQ(ap[i][j].value(), a[perm[i]][perm[j]].value());
    }
}

TEST(Fuse, IdentityZeroAndSwap) {
  Tape tape;
  BranchLatents z{tape.constant(DenseTensor::from_rows({{1, 2}, {3, 4}})),
                  tape.constant(DenseTensor::from_rows({{5, 6}, {7, 8}}))};
  auto col = [&](double v) { return tape.constant(DenseTensor::filled(2, 1, v)); };
  auto id = fuse({{col(1), col(0)}, {col(0), col(1)}}, z);
  EXPECT_EQ(id[0].value(), z[0].value());
  EXPECT_EQ(id[1].value(), z[1].value());
  auto zero = fuse({{col(0), col(0)}, {col(0), col(0)}}, z);
  for (const auto& v : zero)
    for (double x : v.value().values()) EXPECT_EQ(x, 0.0);
  auto swap = fuse({{col(0), col(1)}, {col(1), col(0)}}, z);
  EXPECT_EQ(swap[0].value(), z[1].value());
  EXPECT_EQ(swap[1].value(), z[0].value());
}

TEST(MiLoss, ClosedForms) {
  Tape tape;
  auto ones = tape.constant(DenseTensor::filled(1, 2, 1.0));
  EXPECT_NEAR(mi_loss({ones}, {ones}).value().item(), 0.126928011042972, 1e-12);
  auto zero = tape.constant(DenseTensor::zeros(1, 2));
  EXPECT_NEAR(mi_loss({zero}, {zero}).value().item(), std::log(2.0), 1e-15);
}

TEST(MiLoss, AlignedPairingBeatsSwapped) {
  Tape tape;
  auto a = tape.constant(DenseTensor::from_rows({{1, 0}, {2, 0}}));
  auto b = tape.constant(DenseTensor::from_rows({{0, 1}, {0, 2}}));
  const double aligned = mi_loss({a, b}, {a, b}).value().item();
  const double swapped = mi_loss({a, b}, {b, a}).value().item();
  EXPECT_LT(aligned, swapped);
  EXPECT_GT(aligned, 0.0);
}

TEST(MiLoss, PositiveTermMonotone) {
  Tape tape;
  auto zr = tape.constant(DenseTensor::from_rows({{1, 0.5}}));
  double prev = -1;
  for (double s : {2.0, 1.0, 0.5, 0.0, -1.0}) {
    auto zw = tape.constant(DenseTensor::from_rows({{s, 0}}));
    const double v = mi_loss({zr}, {zw}).value().item();
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(MiLoss, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  std::vector<DenseTensor> params;
  for (int i = 0; i < 6; ++i) params.push_back(xavier_uniform(4, 3, rng));
  auto loss = [](Tape&, std::span<const Var> p) {
    BranchLatents zr(p.begin(), p.begin() + 3), zw(p.begin() + 3, p.end());
    auto f = cross_fuse(zr, zw);
    return mi_loss(f.rating_given_word, f.word_given_rating);
  };
  auto rep = gradcheck(loss, params, {}, {.step = 1e-4, .tolerance = 1e-5});
  for (const auto& p : rep.params)
    EXPECT_TRUE(p.passed) << p.name << " rel " << p.max_relative_error << " at " << p.worst_index << " analytic "
                          << p.worst_analytic << " numeric " << p.worst_numeric;
}

// ---------------------------------------------------------------------------
// Full objective

TEST(TotalLoss, MatchesStraightLineOracle) {
  auto f = tiny_fixture();
  const double expected = oracle_total(f);
  Tape tape;
  auto pv = bind_params(tape, f.params, false);
  const DenseTensor r = f.ratings.to_dense(), w = f.words.to_dense();
  const double got = total_loss(pv, r, &w, &f.graph.matrix(), f.model, f.train, f.noise).total.value().item();
  EXPECT_NEAR(got, expected, 1e-10);
}

TEST(TotalLoss, LambdaZeroIsSumOfNegativeElbos) {
  auto f = tiny_fixture();
  f.train.mi_weight = 0.0;
  Tape tape;
  auto pv = bind_params(tape, f.params, false);
  const DenseTensor r = f.ratings.to_dense(), w = f.words.to_dense();
  auto t = total_loss(pv, r, &w, &f.graph.matrix(), f.model, f.train, f.noise);
  EXPECT_FALSE(t.mi.valid());
  EXPECT_EQ(t.total.value().item(), t.rating.value().item() + t.word.value().item());
}

TEST(TotalLoss, FullGradcheckOnTinyFixture) {
  auto f = tiny_fixture();
  auto rep = tiny_gradcheck(f);
  for (const auto& p : rep.params)
    EXPECT_TRUE(p.passed) << p.name << " rel " << p.max_relative_error << " at " << p.worst_index << " analytic "
                          << p.worst_analytic << " numeric " << p.worst_numeric;
  EXPECT_LT(rep.max_relative_error, 1e-4);
}

// ---------------------------------------------------------------------------
// Training

namespace {

TrainData tiny_data(const TinyFixture& f) {
  TrainData d;
  d.ratings = &f.ratings;
  d.words = &f.words;
  d.graph = &f.graph.matrix();
  d.validation.resize(6);
  for (std::uint32_t u = 0; u < 6; ++u)
    for (std::uint32_t i = 0; i < 8; ++i)
      if (f.ratings.at(u, i) == 0.0) {
        d.validation[u] = {i};
        break;
      }
  return d;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dgvae_model_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(TrainStep, SingleUserReconstructionImproves) {
  auto f = tiny_fixture();
  f.train.mi_weight = 0.0;
  f.train.kl_weight = 0.0;
  auto data = tiny_data(f);
  AdamState adam(AdamOptions{.learning_rate = 1e-2});
  Rng rng(1);
  const std::uint32_t user = 2;
  auto recon = [&] {
    Tape tape;
    auto pv = bind_params(tape, f.params, false);
    auto r = tape.constant(dense_rows(f.ratings, std::vector<std::uint32_t>{user}));
    auto zero = draw_noise(3, 1, 4, rng);
    for (auto& z : zero) z = DenseTensor::zeros(1, 4);
    return -forward_branch(r, pv.prototypes, pv.rating, &f.graph.matrix(), f.model, &zero).loglik.value().item();
  };
  double prev = recon();
  for (int step = 0; step < 10; ++step) {
    train_step(f.params, adam, f.model, f.train, data, std::vector<std::uint32_t>{user}, rng);
    const double now = recon();
    EXPECT_LT(now, prev) << "step " << step;
    prev = now;
  }
}

TEST(Fit, DeterministicAcrossRunsAndThreads) {
  auto f = tiny_fixture();
  auto data = tiny_data(f);
  TrainConfig tc = f.train;
  tc.max_epochs = 6;
  tc.batch_size = 4;
  tc.seed = 7;
  tc.threads = 1;
  auto a = fit(f.model, tc, data);
  tc.threads = 3;
  auto b = fit(f.model, tc, data);
  EXPECT_EQ(log_jsonl(a.log, 20), log_jsonl(b.log, 20));
  EXPECT_EQ(a.params, b.params);
  tc.seed = 8;
  auto c = fit(f.model, tc, data);
  EXPECT_NE(a.params, c.params);
}

TEST(Fit, ResumeContinuesIdenticalTrajectory) {
  auto f = tiny_fixture();
  auto data = tiny_data(f);
  TrainConfig tc = f.train;
  tc.batch_size = 4;
  tc.seed = 3;
  tc.max_epochs = 5;
  auto full = fit(f.model, tc, data);

  auto dir = fresh_dir("resume");
  tc.max_epochs = 3;
  fit(f.model, tc, data, {.checkpoint_dir = dir});
  tc.max_epochs = 5;
  auto resumed = fit(f.model, tc, data, {.resume_from = dir / "last.ckpt"});
  EXPECT_EQ(resumed.log, full.log);
  EXPECT_EQ(resumed.params, full.params);
  EXPECT_EQ(resumed.best_params, full.best_params);
  EXPECT_LT(std::filesystem::file_size(dir / "last.ckpt"), 1u << 20);

  ModelConfig other = f.model;
  other.num_prototypes = 4;
  EXPECT_THROW(fit(other, tc, data, {.resume_from = dir / "last.ckpt"}), ConfigError);
}

TEST(Fit, CheckpointRoundTrip) {
  auto f = tiny_fixture();
  auto data = tiny_data(f);
  TrainConfig tc = f.train;
  tc.max_epochs = 2;
  auto dir = fresh_dir("ckpt");
  fit(f.model, tc, data, {.checkpoint_dir = dir});
  auto c = load_checkpoint(dir / "last.ckpt");
  std::stringstream buf;
  write_checkpoint(buf, c);
  auto back = read_checkpoint(buf);
  EXPECT_EQ(back.params, c.params);
  EXPECT_EQ(back.adam, c.adam);
  EXPECT_EQ(back.rng_state, c.rng_state);
  EXPECT_EQ(back.log, c.log);
  EXPECT_EQ(c.epoch, 2u);
  std::string bytes = buf.str();
  bytes[0] = 'Z';
  std::istringstream bad(bytes);
  EXPECT_THROW(read_checkpoint(bad), FormatError);
}

TEST(Fit, FlatValidationStopsAfterPatience) {
  auto f = tiny_fixture();
  auto data = tiny_data(f);
  TrainConfig tc = f.train;
  tc.max_epochs = 100;
  tc.patience = 20;
  // With 8 items and K = 20 every unmasked item is ranked, so recall is 1 from epoch 1.
  auto r = fit(f.model, tc, data);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.best_epoch, 1u);
  EXPECT_EQ(r.log.size(), 21u);
  EXPECT_DOUBLE_EQ(r.best_recall, 1.0);
}

TEST(Fit, RejectsEmptyValidationAndBadConfig) {
  auto f = tiny_fixture();
  auto data = tiny_data(f);
  for (auto& v : data.validation) v.clear();
  EXPECT_THROW(fit(f.model, f.train, data), ConfigError);
  data = tiny_data(f);
  TrainConfig tc = f.train;
  tc.patience = 0;
  EXPECT_THROW(fit(f.model, tc, data), ConfigError);
  ModelConfig mc = f.model;
  mc.word_branch = false;
  EXPECT_THROW(fit(mc, f.train, data), ConfigError);
}
