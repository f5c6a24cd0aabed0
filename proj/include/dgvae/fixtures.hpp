#pragma once

#include <string>
#include <vector>

#include "dgvae/item_graph.hpp"
#include "dgvae/model.hpp"
#include "dgvae/numerics/gradcheck.hpp"
#include "dgvae/trainer.hpp"

namespace dgvae {

// 6 users, 8 items, 10 words; K=3, d=4, L=2. Small enough for exhaustive
// finite-difference checks.
struct TinyFixture {
  ModelConfig model;
  TrainConfig train;
  SparseMatrix ratings;  // 6 x 8 binary
  SparseMatrix words;    // 6 x 10 TF-IDF-like, rows unit norm
  ItemGraph graph;
  ModelParams params;
  BatchNoise noise;
  std::vector<std::uint32_t> users{0, 1, 2, 3, 4, 5};
};

inline TinyFixture tiny_fixture(std::uint64_t seed = 11) {
  TinyFixture f;
  f.model.num_prototypes = 3;
  f.model.latent_dim = 4;
  f.model.gcn_layers = 2;
  f.train.mi_weight = 0.2;

  const int rows[6][8] = {{1, 1, 0, 0, 1, 0, 0, 0}, {0, 1, 1, 0, 0, 0, 1, 0}, {1, 0, 0, 1, 0, 1, 0, 0},
                          {0, 0, 1, 1, 0, 0, 0, 1}, {0, 1, 0, 0, 1, 1, 0, 1}, {1, 0, 1, 0, 0, 0, 1, 1}};
  std::vector<Triplet> t;
  for (std::uint32_t u = 0; u < 6; ++u)
    for (std::uint32_t i = 0; i < 8; ++i)
      if (rows[u][i]) t.push_back({u, i, 1.0});
  f.ratings = SparseMatrix::from_triplets(6, 8, t);

  Rng rng(seed);
  DenseTensor w = DenseTensor::zeros(6, 10);
  for (std::size_t u = 0; u < 6; ++u) {
    for (std::size_t j = 0; j < 10; ++j)
      if (rng.uniform() < 0.4) w(u, j) = 0.2 + rng.uniform();
    w(u, (u * 3) % 10) += 0.5;
  }
  f.words = SparseMatrix::from_dense(l2_normalize(w));

  auto emb = [&](Modality m) {
    ModalityEmbeddings e{m, DenseTensor::zeros(8, 5)};
    for (double& v : e.features.values()) v = rng.normal();
    return e;
  };
  const auto vis = emb(Modality::kVisual);
  const auto txt = emb(Modality::kTextual);
  f.graph = build_item_graph(vis, txt, 0.1, {.k = 3});

  f.params = init_params(f.model, 8, 10, rng);
  // Non-zero biases so every parameter has a generic gradient.
  for (auto* b : {&f.params.rating.bias, &f.params.word.bias})
    for (double& v : b->values()) v = 0.1 * rng.normal();
  f.noise = draw_batch_noise(f.model, true, 6, rng);
  return f;
}

// Full objective on the tiny fixture as a function of the parameter leaves.
inline LossBuilder tiny_loss(const TinyFixture& f) {
  return [&f](Tape&, std::span<const Var> leaves) {
    ParamVars pv = param_vars(leaves);
    const DenseTensor r = f.ratings.to_dense();
    const DenseTensor w = f.words.to_dense();
    return total_loss(pv, r, &w, &f.graph.matrix(), f.model, f.train, f.noise).total;
  };
}

inline GradcheckReport tiny_gradcheck(const TinyFixture& f, GradcheckOptions opt = {}) {
  const auto names = f.params.names();
  return gradcheck(tiny_loss(f), flatten(f.params), names, opt);
}

}  // namespace dgvae
