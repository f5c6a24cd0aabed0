#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dgvae/error.hpp"
#include "dgvae/numerics/autodiff.hpp"
#include "dgvae/numerics/binary_io.hpp"
#include "dgvae/numerics/functions.hpp"
#include "dgvae/numerics/rng.hpp"
#include "dgvae/numerics/tensor.hpp"

namespace dgvae {

// Floor applied to log-probabilities in the reconstruction term.
inline const double kLogProbFloor = std::log(1e-12);

struct ModelConfig {
  std::size_t num_prototypes = 3;  // K
  std::size_t latent_dim = 64;     // d
  std::size_t gcn_layers = 2;      // L
  double temperature = 0.1;        // tau
  double prior_scale = 0.1;        // sigma0
  bool word_branch = true;

  void validate() const {
    if (num_prototypes < 2) throw ConfigError("num_prototypes (K) must be >= 2");
    if (latent_dim < 1) throw ConfigError("latent_dim (d) must be >= 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
    if (!(prior_scale > 0.0) || !std::isfinite(prior_scale)) throw ConfigError("prior_scale (sigma0) must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Entity latents plus the one-layer MLP that maps an entity-indexed row to (a, b).
struct BranchParams {
  DenseTensor entities;  // N x d (items) or W x d (words)
  DenseTensor weight;    // N x 2d
  DenseTensor bias;      // 1 x 2d

  bool empty() const { return entities.size() == 0; }
  bool operator==(const BranchParams&) const = default;
};

struct ModelParams {
  DenseTensor prototypes;  // K x d, shared by both branches
  BranchParams rating;
  BranchParams word;

  std::size_t num_items() const { return rating.entities.rows(); }
  std::size_t num_words() const { return word.empty() ? 0 : word.entities.rows(); }

  // Fixed ordering used by the optimizer and checkpoints.
  std::vector<DenseTensor*> tensors() {
    std::vector<DenseTensor*> out{&prototypes, &rating.entities, &rating.weight, &rating.bias};
    if (!word.empty()) out.insert(out.end(), {&word.entities, &word.weight, &word.bias});
    return out;
  }
  std::vector<const DenseTensor*> tensors() const {
    std::vector<const DenseTensor*> out;
    for (auto* t : const_cast<ModelParams*>(this)->tensors()) out.push_back(t);
    return out;
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out{"prototypes", "rating.entities", "rating.weight", "rating.bias"};
    if (!word.empty()) out.insert(out.end(), {"word.entities", "word.weight", "word.bias"});
    return out;
  }

  bool operator==(const ModelParams&) const = default;
};

inline DenseTensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  DenseTensor t = DenseTensor::zeros(rows, cols);
  for (double& v : t.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

inline BranchParams init_branch(std::size_t entities, std::size_t d, Rng& rng) {
  BranchParams p;
  p.entities = xavier_uniform(entities, d, rng);
  p.weight = xavier_uniform(entities, 2 * d, rng);
  p.bias = DenseTensor::zeros(1, 2 * d);
  return p;
}

inline ModelParams init_params(const ModelConfig& cfg, std::size_t num_items, std::size_t num_words, Rng& rng) {
  cfg.validate();
  if (num_items == 0) throw ConfigError("model needs at least one item");
  if (cfg.word_branch && num_words == 0) throw ConfigError("word branch enabled but the vocabulary is empty");
  ModelParams p;
  p.prototypes = xavier_uniform(cfg.num_prototypes, cfg.latent_dim, rng);
  p.rating = init_branch(num_items, cfg.latent_dim, rng);
  if (cfg.word_branch) p.word = init_branch(num_words, cfg.latent_dim, rng);
  return p;
}

// ---------------------------------------------------------------------------
// Differentiable building blocks. All user-level quantities are batch x ... tensors.

struct BranchVars {
  Var entities, weight, bias;
};

struct ParamVars {
  Var prototypes;
  BranchVars rating;
  BranchVars word;
  bool has_word = false;

  // Trainable leaves in ModelParams::tensors() order.
  std::vector<Var> leaves() const {
    std::vector<Var> out{prototypes, rating.entities, rating.weight, rating.bias};
    if (has_word) out.insert(out.end(), {word.entities, word.weight, word.bias});
    return out;
  }
};

// Rebuilds ParamVars from leaves in ModelParams::tensors() order.
inline ParamVars param_vars(std::span<const Var> leaves) {
  if (leaves.size() != 4 && leaves.size() != 7) throw ShapeError("param_vars: expected 4 or 7 tensors");
  ParamVars v;
  v.prototypes = leaves[0];
  v.rating = {leaves[1], leaves[2], leaves[3]};
  if (leaves.size() == 7) {
    v.word = {leaves[4], leaves[5], leaves[6]};
    v.has_word = true;
  }
  return v;
}

inline ParamVars bind_params(Tape& tape, const ModelParams& p, bool trainable) {
  auto put = [&](const DenseTensor& t) { return trainable ? tape.leaf(t) : tape.constant(t); };
  ParamVars v;
  v.prototypes = put(p.prototypes);
  v.rating = {put(p.rating.entities), put(p.rating.weight), put(p.rating.bias)};
  if (!p.word.empty()) {
    v.word = {put(p.word.entities), put(p.word.weight), put(p.word.bias)};
    v.has_word = true;
  }
  return v;
}

// C = softmax(H M^T / tau) row-wise: N x K.
inline Var assign(const Var& entities, const Var& prototypes, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (entities.cols() != prototypes.cols())
    throw ShapeError("assign: entity dim " + std::to_string(entities.cols()) + " != prototype dim " +
                     std::to_string(prototypes.cols()));
  return ad::softmax_rows(ad::matmul_bt(entities, prototypes), temperature);
}

// e + e S^L. A null graph stands for the identity.
inline Var res_gcn(const Var& e, const SparseMatrix* graph, std::size_t layers) {
  if (!graph) return ad::scale(e, 2.0);
  if (graph->rows() != e.cols() || graph->cols() != e.cols())
    throw ShapeError("res_gcn: graph is " + std::to_string(graph->rows()) + "x" + std::to_string(graph->cols()) +
                     " but rows have " + std::to_string(e.cols()) + " entries");
  if (layers == 0) return ad::scale(e, 2.0);
  Var h = e;
  for (std::size_t l = 0; l < layers; ++l) h = ad::matmul(h, *graph);
  return ad::add(e, h);
}

struct Posterior {
  Var mu;     // B x d, unit rows
  Var sigma;  // B x d
  Var b;      // log-scale pre-activation, sigma = sigma0 exp(-b/2)
};

// Masks the batch rows r (B x N) with prototype column k of C, normalizes,
// propagates, and maps through the branch MLP.
inline Posterior encode(const Var& r, const Var& c, std::size_t k, const SparseMatrix* graph, const BranchVars& p,
                        const ModelConfig& cfg) {
  if (r.cols() != c.rows())
    throw ShapeError("encode: rating rows have " + std::to_string(r.cols()) + " entries but assignment covers " +
                     std::to_string(c.rows()));
  const std::size_t d = cfg.latent_dim;
  Var e = ad::mul_row(r, ad::transpose(ad::column(c, k)));
  e = ad::l2_normalize_rows(e);
  e = res_gcn(e, graph, cfg.gcn_layers);
  Var ab = ad::add_row(ad::matmul(e, p.weight), p.bias);
  Var a = ad::slice_cols(ab, 0, d);
  Var b = ad::slice_cols(ab, d, d);
  return {ad::l2_normalize_rows(a), ad::scale(ad::exp(ad::scale(b, -0.5)), cfg.prior_scale), b};
}

inline Var reparameterize(const Var& mu, const Var& sigma, const Var& eps) { return mu + eps * sigma; }

// Per-entity log pi (B x N): pi_i proportional to sum_k C_ik exp(cos(z_k, h_i) / tau),
// floored at ln 1e-12. The per-user max logit is subtracted as a constant.
inline Var decode(const std::vector<Var>& z, const Var& c, const Var& entities, double temperature) {
  if (z.size() != c.cols()) throw ShapeError("decode: got " + std::to_string(z.size()) + " latents for K=" +
                                             std::to_string(c.cols()));
  Tape& tape = c.tape();
  Var h = ad::l2_normalize_rows(entities);
  std::vector<Var> logits;
  for (const Var& zk : z) logits.push_back(ad::scale(ad::matmul_bt(ad::l2_normalize_rows(zk), h), 1.0 / temperature));
  const std::size_t batch = z.front().rows();
  DenseTensor mx = DenseTensor::filled(batch, 1, -std::numeric_limits<double>::infinity());
  for (const Var& l : logits)
    for (std::size_t u = 0; u < batch; ++u)
      for (double v : l.value().row(u)) mx(u, 0) = std::max(mx(u, 0), v);
  Var shift = tape.constant(std::move(mx));
  Var s;
  for (std::size_t k = 0; k < z.size(); ++k) {
    Var term = ad::mul_row(ad::exp(ad::sub_col(logits[k], shift)), ad::transpose(ad::column(c, k)));
    s = k == 0 ? term : ad::add(s, term);
  }
  Var log_pi = ad::sub_col(ad::log(s), ad::log(ad::sum_rows(s)));
  return ad::clamp_min(log_pi, kLogProbFloor);
}

// sum_j [ln(sigma0/sigma_j) + (sigma_j^2 + mu_j^2)/(2 sigma0^2) - 1/2] per user (B x 1), one prototype.
inline Var kl_term(const Posterior& q, double prior_scale) {
  const double inv = 1.0 / (2.0 * prior_scale * prior_scale);
  Var per = ad::scale(q.b, 0.5) + ad::scale(ad::square(q.sigma) + ad::square(q.mu), inv);
  return ad::add_scalar(ad::sum_rows(per), -0.5 * static_cast<double>(q.mu.cols()));
}

// sum_i r_i log pi_i per user (B x 1).
inline Var reconstruction_loglik(const Var& log_pi, const Var& r) { return ad::sum_rows(r * log_pi); }

struct BranchOutput {
  Var assignment;  // N x K
  std::vector<Posterior> posteriors;
  std::vector<Var> z;
  Var log_pi;   // B x N
  Var loglik;   // B x 1
  Var kl;       // B x 1, summed over prototypes
};

// Full branch forward pass. `eps` holds one B x d standard-normal draw per
// prototype; when null the posterior means are used (z = mu).
inline BranchOutput forward_branch(const Var& r, const Var& prototypes, const BranchVars& p, const SparseMatrix* graph,
                                   const ModelConfig& cfg, const std::vector<DenseTensor>* eps) {
  Tape& tape = r.tape();
  BranchOutput out;
  out.assignment = assign(p.entities, prototypes, cfg.temperature);
  if (eps && eps->size() != cfg.num_prototypes) throw ShapeError("forward_branch: need one noise draw per prototype");
  for (std::size_t k = 0; k < cfg.num_prototypes; ++k) {
    Posterior q = encode(r, out.assignment, k, graph, p, cfg);
    Var z = eps ? reparameterize(q.mu, q.sigma, tape.constant((*eps)[k])) : q.mu;
    Var kl = kl_term(q, cfg.prior_scale);
    out.kl = k == 0 ? kl : ad::add(out.kl, kl);
    out.posteriors.push_back(q);
    out.z.push_back(z);
  }
  out.log_pi = decode(out.z, out.assignment, p.entities, cfg.temperature);
  out.loglik = reconstruction_loglik(out.log_pi, r);
  return out;
}

inline std::vector<DenseTensor> draw_noise(std::size_t k, std::size_t batch, std::size_t d, Rng& rng) {
  std::vector<DenseTensor> eps;
  for (std::size_t j = 0; j < k; ++j) {
    DenseTensor e = DenseTensor::zeros(batch, d);
    for (double& v : e.values()) v = rng.normal();
    eps.push_back(std::move(e));
  }
  return eps;
}

// ---------------------------------------------------------------------------
// Value-level helpers.

struct PrototypeAssignment {
  DenseTensor logits;  // rho = H M^T / tau
  DenseTensor soft;    // C
};

inline PrototypeAssignment prototype_assign(const DenseTensor& entities, const DenseTensor& prototypes,
                                            double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  DenseTensor rho = dense_matmul(entities, transpose(prototypes));
  for (double& v : rho.values()) v /= temperature;
  return {rho, softmax(rho, 1, 1.0)};
}

// Index of the largest logit per row; ties go to the lower prototype.
inline std::vector<std::size_t> hard_assignment(const DenseTensor& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

// Log-probabilities over items for a batch of users using posterior means.
inline DenseTensor score_items(const ModelParams& p, const ModelConfig& cfg, const SparseMatrix* graph,
                               const DenseTensor& ratings) {
  Tape tape;
  ParamVars v = bind_params(tape, p, false);
  Var r = tape.constant(ratings);
  return forward_branch(r, v.prototypes, v.rating, graph, cfg, nullptr).log_pi.value();
}

// ---------------------------------------------------------------------------
// Serialization of config and parameters (embedded in trainer checkpoints).

inline void write_model_config(std::ostream& out, const ModelConfig& c) {
  bin::put_u64(out, c.num_prototypes);
  bin::put_u64(out, c.latent_dim);
  bin::put_u64(out, c.gcn_layers);
  bin::put_f64(out, c.temperature);
  bin::put_f64(out, c.prior_scale);
  bin::put_u32(out, c.word_branch ? 1u : 0u);
}

inline ModelConfig read_model_config(bin::Reader& r) {
  ModelConfig c;
  c.num_prototypes = r.u64();
  c.latent_dim = r.u64();
  c.gcn_layers = r.u64();
  c.temperature = r.f64();
  c.prior_scale = r.f64();
  c.word_branch = r.u32() != 0;
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(r.source() + ": corrupt model config: " + e.what());
  }
  return c;
}

inline void write_params(std::ostream& out, const ModelParams& p) {
  const auto ts = p.tensors();
  bin::put_u32(out, static_cast<std::uint32_t>(ts.size()));
  for (const auto* t : ts) bin::put_tensor(out, *t);
}

inline ModelParams read_params(bin::Reader& r, const ModelConfig& c) {
  const auto n = r.u32();
  const std::uint32_t expected = c.word_branch ? 7 : 4;
  if (n != expected) throw FormatError(r.source() + ": expected " + std::to_string(expected) + " parameter tensors");
  ModelParams p;
  p.prototypes = r.tensor();
  p.rating = {r.tensor(), r.tensor(), r.tensor()};
  if (c.word_branch) p.word = {r.tensor(), r.tensor(), r.tensor()};
  const std::size_t d = c.latent_dim;
  auto check = [&](const DenseTensor& t, std::size_t rows, std::size_t cols, const char* what) {
    if (t.rank() != 2 || t.rows() != rows || t.cols() != cols)
      throw FormatError(r.source() + ": parameter " + what + " has shape " + t.shape_string());
  };
  check(p.prototypes, c.num_prototypes, d, "prototypes");
  for (const BranchParams* b : {&p.rating, c.word_branch ? &p.word : nullptr}) {
    if (!b) continue;
    const std::size_t n_ent = b->entities.rows();
    check(b->entities, n_ent, d, "entities");
    check(b->weight, n_ent, 2 * d, "weight");
    check(b->bias, 1, 2 * d, "bias");
  }
  return p;
}

}  // namespace dgvae
