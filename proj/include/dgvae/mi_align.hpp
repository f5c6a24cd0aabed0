#pragma once

#include <cmath>
#include <vector>

#include "dgvae/error.hpp"
#include "dgvae/numerics/autodiff.hpp"

namespace dgvae {

// Per-prototype latents of one branch: K tensors, each batch x d.
using BranchLatents = std::vector<Var>;

// Attention scores for a batch: entry [i][j] is a batch x 1 column holding A_ij per user.
using AttentionScores = std::vector<std::vector<Var>>;

namespace detail {

inline void check_latents(const BranchLatents& q, const BranchLatents& k) {
  if (q.empty() || q.size() != k.size()) throw ShapeError("mi_align: branches disagree on prototype count");
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i].rows() != k[i].rows() || q[i].cols() != k[i].cols() || q[i].cols() != q[0].cols() ||
        q[i].rows() != q[0].rows())
      throw ShapeError("mi_align: latent shapes disagree");
}

}  // namespace detail

// A_ij = tanh(q_i . k_j / sqrt(d)) * sigmoid(-|q_i - k_j|_1 / sqrt(d)), per user.
inline AttentionScores coda_scores(const BranchLatents& q, const BranchLatents& k) {
  detail::check_latents(q, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q[0].cols()));
  AttentionScores a(q.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) {
      Var dot = ad::sum_rows(q[i] * k[j]);
      Var l1 = ad::sum_rows(ad::abs(q[i] - k[j]));
      a[i].push_back(ad::tanh(ad::scale(dot, scale)) * ad::sigmoid(ad::scale(l1, -scale)));
    }
  return a;
}

// Z'_k = sum_j A_kj Z_j per user.
inline BranchLatents fuse(const AttentionScores& a, const BranchLatents& z) {
  if (a.size() != z.size()) throw ShapeError("fuse: attention is " + std::to_string(a.size()) + "x? but K=" +
                                             std::to_string(z.size()));
  BranchLatents out;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].size() != z.size()) throw ShapeError("fuse: attention row has the wrong length");
    Var acc;
    for (std::size_t j = 0; j < z.size(); ++j) {
      Var term = ad::mul_col(z[j], a[k][j]);
      acc = j == 0 ? term : ad::add(acc, term);
    }
    out.push_back(acc);
  }
  return out;
}

struct FusedLatents {
  BranchLatents rating_given_word;  // Z^{r|w}
  BranchLatents word_given_rating;  // Z^{w|r}
};

// Z^{r|w} attends from word latents (queries) over rating latents (keys and values),
// and symmetrically for Z^{w|r}.
inline FusedLatents cross_fuse(const BranchLatents& zr, const BranchLatents& zw) {
  return {fuse(coda_scores(zw, zr), zr), fuse(coda_scores(zr, zw), zw)};
}

// Jensen-Shannon MI objective: same-prototype pairs are positives, cross-prototype
// pairs negatives, each averaged over the batch.
inline Var mi_loss(const BranchLatents& zr, const BranchLatents& zw) {
  detail::check_latents(zr, zw);
  Var total;
  bool first = true;
  for (std::size_t k = 0; k < zr.size(); ++k)
    for (std::size_t j = 0; j < zw.size(); ++j) {
      Var score = ad::sum_rows(zr[k] * zw[j]);
      Var term = ad::mean(ad::softplus(j == k ? ad::neg(score) : score));
      total = first ? term : ad::add(total, term);
      first = false;
    }
  return total;
}

}  // namespace dgvae
