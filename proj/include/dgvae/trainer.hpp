#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgvae/error.hpp"
#include "dgvae/evaluator.hpp"
#include "dgvae/mi_align.hpp"
#include "dgvae/model.hpp"
#include "dgvae/numerics/adam.hpp"
#include "dgvae/numerics/binary_io.hpp"
#include "dgvae/numerics/rng.hpp"

namespace dgvae {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  double mi_weight = 0.1;  // lambda
  double kl_weight = 0.1;  // beta
  double rating_weight = 1.0;
  double word_weight = 1.0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::size_t monitor_k = 20;
  std::size_t threads = 0;  // evaluation workers, 0 = thread_count()

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
    if (patience == 0) throw ConfigError("patience must be >= 1");
    if (!(mi_weight >= 0.0)) throw ConfigError("mi_weight (lambda) must be >= 0");
    if (!(kl_weight >= 0.0)) throw ConfigError("kl_weight (beta) must be >= 0");
    if (!(rating_weight >= 0.0) || !(word_weight >= 0.0)) throw ConfigError("branch weights must be >= 0");
    if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
    if (monitor_k == 0) throw ConfigError("monitor_k must be >= 1");
  }
};

// Everything the objective reads besides parameters. Matrices are users x entities.
struct TrainData {
  const SparseMatrix* ratings = nullptr;  // train interactions
  const SparseMatrix* words = nullptr;    // user-word TF-IDF, null when the word branch is off
  const SparseMatrix* graph = nullptr;    // fused item graph, null = identity
  std::vector<std::vector<std::uint32_t>> validation;  // sorted item lists per user
};

struct LossTerms {
  Var total;
  Var rating;  // batch-mean negative ELBO, rating branch
  Var word;    // batch-mean negative ELBO, word branch (absent when disabled)
  Var mi;      // absent when lambda = 0 or the word branch is off
};

struct BatchNoise {
  std::vector<DenseTensor> rating;
  std::vector<DenseTensor> word;
};

inline BatchNoise draw_batch_noise(const ModelConfig& cfg, bool word_branch, std::size_t batch, Rng& rng) {
  BatchNoise n;
  n.rating = draw_noise(cfg.num_prototypes, batch, cfg.latent_dim, rng);
  if (word_branch) n.word = draw_noise(cfg.num_prototypes, batch, cfg.latent_dim, rng);
  return n;
}

// rating_w/word_w/lambda weighted sum of batch-mean negative ELBOs and the MI term.
inline LossTerms total_loss(const ParamVars& p, const DenseTensor& ratings, const DenseTensor* words,
                            const SparseMatrix* graph, const ModelConfig& cfg, const TrainConfig& tc,
                            const BatchNoise& noise) {
  Tape& tape = p.prototypes.tape();
  LossTerms t;
  auto neg_elbo = [&](const BranchOutput& o) {
    return ad::mean(ad::scale(o.kl, tc.kl_weight) - o.loglik);
  };
  BranchOutput r = forward_branch(tape.constant(ratings), p.prototypes, p.rating, graph, cfg, &noise.rating);
  t.rating = neg_elbo(r);
  t.total = ad::scale(t.rating, tc.rating_weight);
  if (words) {
    if (!p.has_word) throw ConfigError("word matrix supplied but the model has no word branch");
    BranchOutput w = forward_branch(tape.constant(*words), p.prototypes, p.word, nullptr, cfg, &noise.word);
    t.word = neg_elbo(w);
    t.total = t.total + ad::scale(t.word, tc.word_weight);
    if (tc.mi_weight > 0.0) {
      FusedLatents f = cross_fuse(r.z, w.z);
      t.mi = mi_loss(f.rating_given_word, f.word_given_rating);
      t.total = t.total + ad::scale(t.mi, tc.mi_weight);
    }
  }
  return t;
}

struct LossValues {
  double total = 0.0, rating = 0.0, word = 0.0, mi = 0.0;
};

inline std::vector<DenseTensor> flatten(const ModelParams& p) {
  std::vector<DenseTensor> out;
  for (const auto* t : p.tensors()) out.push_back(*t);
  return out;
}

inline void unflatten(ModelParams& p, std::vector<DenseTensor>&& flat) {
  auto ts = p.tensors();
  if (ts.size() != flat.size()) throw ShapeError("unflatten: parameter count mismatch");
  for (std::size_t i = 0; i < ts.size(); ++i) *ts[i] = std::move(flat[i]);
}

// One Adam update on the given users. Noise is drawn from `rng`.
inline LossValues train_step(ModelParams& params, AdamState& adam, const ModelConfig& cfg, const TrainConfig& tc,
                             const TrainData& data, std::span<const std::uint32_t> users, Rng& rng) {
  const bool word = data.words != nullptr;
  BatchNoise noise = draw_batch_noise(cfg, word, users.size(), rng);
  DenseTensor r = dense_rows(*data.ratings, users);
  std::optional<DenseTensor> w;
  if (word) w = dense_rows(*data.words, users);
  Tape tape;
  ParamVars pv = bind_params(tape, params, true);
  LossTerms t = total_loss(pv, r, word ? &*w : nullptr, data.graph, cfg, tc, noise);
  tape.backward(t.total);
  std::vector<DenseTensor> grads;
  for (const Var& v : pv.leaves()) grads.push_back(tape.grad(v));
  std::vector<DenseTensor> flat = flatten(params);
  adam_step(flat, grads, adam);
  unflatten(params, std::move(flat));
  LossValues lv;
  lv.total = t.total.value().item();
  lv.rating = t.rating.value().item();
  if (t.word.valid()) lv.word = t.word.value().item();
  if (t.mi.valid()) lv.mi = t.mi.value().item();
  return lv;
}

struct EpochLog {
  std::size_t epoch = 0;
  LossValues loss;
  std::optional<double> val_recall;  // R@monitor_k when evaluated this epoch

  bool operator==(const EpochLog& o) const {
    return epoch == o.epoch && loss.total == o.loss.total && loss.rating == o.loss.rating && loss.word == o.loss.word &&
           loss.mi == o.loss.mi && val_recall == o.val_recall;
  }
};

inline nlohmann::json epoch_json(const EpochLog& e, std::size_t monitor_k) {
  nlohmann::json j{{"epoch", e.epoch},
                   {"loss", e.loss.total},
                   {"neg_elbo_rating", e.loss.rating},
                   {"neg_elbo_word", e.loss.word},
                   {"mi", e.loss.mi}};
  j["val_R@" + std::to_string(monitor_k)] = e.val_recall ? nlohmann::json(*e.val_recall) : nlohmann::json(nullptr);
  return j;
}

inline std::string log_jsonl(const std::vector<EpochLog>& log, std::size_t monitor_k) {
  std::string out;
  for (const auto& e : log) out += epoch_json(e, monitor_k).dump() + "\n";
  return out;
}

// Full training state. The same format serves as the best-model artifact.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  ModelParams params;
  AdamState adam;
  std::uint64_t epoch = 0;
  std::string rng_state;
  double best_recall = -1.0;
  std::uint64_t best_epoch = 0;
  ModelParams best_params;
  std::vector<EpochLog> log;
};

inline constexpr char kCheckpointMagic[] = "DGVAECKP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  out.write(kCheckpointMagic, 8);
  bin::put_u32(out, kCheckpointVersion);
  write_model_config(out, c.model);
  const auto& t = c.train;
  for (double v : {t.learning_rate, t.mi_weight, t.kl_weight, t.rating_weight, t.word_weight}) bin::put_f64(out, v);
  for (std::uint64_t v : {std::uint64_t(t.batch_size), std::uint64_t(t.max_epochs), std::uint64_t(t.patience), t.seed,
                          std::uint64_t(t.eval_every), std::uint64_t(t.monitor_k)})
    bin::put_u64(out, v);
  write_params(out, c.params);
  bin::put_u64(out, c.adam.step);
  bin::put_u32(out, static_cast<std::uint32_t>(c.adam.first_moment.size()));
  for (std::size_t i = 0; i < c.adam.first_moment.size(); ++i) {
    bin::put_tensor(out, c.adam.first_moment[i]);
    bin::put_tensor(out, c.adam.second_moment[i]);
  }
  bin::put_u64(out, c.epoch);
  bin::put_string(out, c.rng_state);
  bin::put_f64(out, c.best_recall);
  bin::put_u64(out, c.best_epoch);
  write_params(out, c.best_params);
  bin::put_u64(out, c.log.size());
  for (const auto& e : c.log) {
    bin::put_u64(out, e.epoch);
    for (double v : {e.loss.total, e.loss.rating, e.loss.word, e.loss.mi}) bin::put_f64(out, v);
    bin::put_u32(out, e.val_recall ? 1u : 0u);
    bin::put_f64(out, e.val_recall.value_or(0.0));
  }
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& source = "<checkpoint>") {
  bin::Reader r(in, source);
  r.expect_magic(std::string_view(kCheckpointMagic, 8));
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.model = read_model_config(r);
  auto& t = c.train;
  for (double* v : {&t.learning_rate, &t.mi_weight, &t.kl_weight, &t.rating_weight, &t.word_weight}) *v = r.f64();
  t.batch_size = r.u64();
  t.max_epochs = r.u64();
  t.patience = r.u64();
  t.seed = r.u64();
  t.eval_every = r.u64();
  t.monitor_k = r.u64();
  c.params = read_params(r, c.model);
  c.adam = AdamState(AdamOptions{.learning_rate = t.learning_rate});
  c.adam.step = r.u64();
  const auto moments = r.u32();
  if (moments != 0 && moments != c.params.tensors().size()) throw FormatError(source + ": optimizer state mismatch");
  for (std::uint32_t i = 0; i < moments; ++i) {
    c.adam.first_moment.push_back(r.tensor());
    c.adam.second_moment.push_back(r.tensor());
  }
  c.epoch = r.u64();
  c.rng_state = r.string();
  c.best_recall = r.f64();
  c.best_epoch = r.u64();
  c.best_params = read_params(r, c.model);
  const auto n = r.u64();
  if (n > c.epoch) throw FormatError(source + ": log longer than the epoch counter");
  for (std::uint64_t i = 0; i < n; ++i) {
    EpochLog e;
    e.epoch = r.u64();
    e.loss.total = r.f64();
    e.loss.rating = r.f64();
    e.loss.word = r.f64();
    e.loss.mi = r.f64();
    const bool has = r.u32() != 0;
    const double v = r.f64();
    if (has) e.val_recall = v;
    c.log.push_back(e);
  }
  if (!r.at_end()) throw FormatError(source + ": trailing bytes after checkpoint");
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    write_checkpoint(out, c);
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_checkpoint(in, path.string());
}

struct FitOptions {
  std::optional<std::filesystem::path> checkpoint_dir;  // writes last.ckpt and best.ckpt
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const EpochLog&)> on_epoch;
};

struct FitResult {
  std::vector<EpochLog> log;
  std::vector<double> epoch_seconds;  // only for epochs run in this call
  ModelParams params;                 // final
  ModelParams best_params;
  double best_recall = 0.0;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

namespace detail {

inline void check_resume_config(const Checkpoint& c, const ModelConfig& m, const TrainConfig& t) {
  auto mismatch = [](const std::string& what) {
    throw ConfigError("resume: checkpoint was trained with a different " + what);
  };
  if (!(c.model == m)) mismatch("model configuration (K, d, L, tau, sigma0 or branch flags)");
  if (c.train.learning_rate != t.learning_rate || c.train.batch_size != t.batch_size || c.train.seed != t.seed ||
      c.train.mi_weight != t.mi_weight || c.train.kl_weight != t.kl_weight ||
      c.train.rating_weight != t.rating_weight || c.train.word_weight != t.word_weight ||
      c.train.eval_every != t.eval_every || c.train.monitor_k != t.monitor_k)
    mismatch("training configuration");
}

}  // namespace detail

// Seeded mini-batch training over users with Adam, validation R@monitor_k
// early stopping and per-epoch checkpoints.
inline FitResult fit(const ModelConfig& cfg, const TrainConfig& tc, const TrainData& data, const FitOptions& opt = {}) {
  cfg.validate();
  tc.validate();
  if (!data.ratings) throw ConfigError("fit: no training matrix");
  if (cfg.word_branch != (data.words != nullptr))
    throw ConfigError(cfg.word_branch ? "fit: word branch enabled but no user-word matrix given"
                                      : "fit: user-word matrix given but the word branch is disabled");
  if (data.words && data.words->rows() != data.ratings->rows())
    throw ShapeError("fit: rating and word matrices disagree on user count");
  if (data.validation.size() != data.ratings->rows()) throw ShapeError("fit: validation lists must cover every user");
  const auto val_users = users_with_items(data.validation);
  if (val_users.empty()) throw ConfigError("fit: empty validation set");

  std::vector<std::uint32_t> train_users;
  for (std::uint32_t u = 0; u < data.ratings->rows(); ++u)
    if (data.ratings->row_nnz(u) > 0) train_users.push_back(u);
  if (train_users.empty()) throw ConfigError("fit: no user has training interactions");

  Checkpoint st;
  Rng rng(tc.seed);
  if (opt.resume_from) {
    st = load_checkpoint(*opt.resume_from);
    detail::check_resume_config(st, cfg, tc);
    if (st.params.num_items() != data.ratings->cols() ||
        (cfg.word_branch && st.params.num_words() != data.words->cols()))
      throw ConfigError("resume: checkpoint dimensions do not match the data");
    rng.set_state(st.rng_state);
  } else {
    st.model = cfg;
    st.params = init_params(cfg, data.ratings->cols(), data.words ? data.words->cols() : 0, rng);
    st.adam = AdamState(AdamOptions{.learning_rate = tc.learning_rate});
    st.best_params = st.params;
  }
  st.train = tc;

  FitResult res;
  bool stop = st.epoch >= tc.max_epochs || (st.best_epoch > 0 && st.epoch - st.best_epoch >= tc.patience);
  while (!stop) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t epoch = ++st.epoch;
    std::vector<std::uint32_t> order = train_users;
    rng.shuffle(std::span<std::uint32_t>(order));
    LossValues sum;
    for (std::size_t lo = 0; lo < order.size(); lo += tc.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + tc.batch_size);
      LossValues lv;
      try {
        lv = train_step(st.params, st.adam, cfg, tc, data, std::span(order).subspan(lo, hi - lo), rng);
      } catch (const NumericError& e) {
        std::ostringstream diag;
        diag << "epoch " << epoch << ", batch starting at user position " << lo << ": " << e.what()
             << "; parameter max-abs:";
        const auto names = st.params.names();
        const auto ts = st.params.tensors();
        for (std::size_t i = 0; i < ts.size(); ++i) {
          double m = 0.0;
          for (double v : ts[i]->values()) m = std::max(m, std::fabs(v));
          diag << ' ' << names[i] << '=' << m;
        }
        throw NumericError(diag.str());
      }
      const double w = static_cast<double>(hi - lo);
      sum.total += lv.total * w;
      sum.rating += lv.rating * w;
      sum.word += lv.word * w;
      sum.mi += lv.mi * w;
    }
    const double n = static_cast<double>(order.size());
    EpochLog entry{epoch, {sum.total / n, sum.rating / n, sum.word / n, sum.mi / n}, std::nullopt};

    bool improved = false;
    if (epoch % tc.eval_every == 0 || epoch == tc.max_epochs) {
      auto rankings = rank_items(st.params, cfg, data.graph, *data.ratings, val_users,
                                 {.k = tc.monitor_k, .batch_size = tc.batch_size, .threads = tc.threads});
      const double recall = evaluate_rankings(rankings, val_users, data.validation, std::vector<std::size_t>{tc.monitor_k})
                                .recall.at(tc.monitor_k);
      entry.val_recall = recall;
      if (recall > st.best_recall) {
        st.best_recall = recall;
        st.best_epoch = epoch;
        st.best_params = st.params;
        improved = true;
      }
    }
    st.log.push_back(entry);
    st.rng_state = rng.state();
    if (opt.checkpoint_dir) {
      std::filesystem::create_directories(*opt.checkpoint_dir);
      save_checkpoint(*opt.checkpoint_dir / "last.ckpt", st);
      if (improved) save_checkpoint(*opt.checkpoint_dir / "best.ckpt", st);
    }
    res.epoch_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (opt.on_epoch) opt.on_epoch(entry);

    if (st.best_epoch > 0 && epoch - st.best_epoch >= tc.patience) {
      res.early_stopped = true;
      stop = true;
    }
    if (epoch >= tc.max_epochs) stop = true;
  }
  res.log = st.log;
  res.params = st.params;
  res.best_params = st.best_params;
  res.best_recall = st.best_recall;
  res.best_epoch = st.best_epoch;
  return res;
}

}  // namespace dgvae
