#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <cstdio>
#include <vector>

#include <json.hpp>

#include "dgvae/error.hpp"
#include "dgvae/evaluator.hpp"
#include "dgvae/ingestion.hpp"
#include "dgvae/model.hpp"

namespace dgvae {

struct ScoredWord {
  std::string word;
  double score = 0.0;  // probability under the single-prototype decoder
};

// Word-branch decoder with only prototype k active: the user's word row is
// encoded through prototype k at z = mu and decoded with C^w[:, k] alone,
// renormalized over the vocabulary. Returns up to n_words entries, best first,
// ties to the lower word index.
inline std::vector<ScoredWord> top_words(const ModelParams& params, const ModelConfig& cfg,
                                         const DenseTensor& user_words, std::size_t k, std::size_t n_words,
                                         const std::vector<std::string>& vocabulary) {
  if (params.word.empty()) throw ConfigError("top_words: the model has no word branch");
  if (k >= cfg.num_prototypes) throw ConfigError("top_words: prototype index out of range");
  if (user_words.rows() != 1 || user_words.cols() != params.num_words())
    throw ShapeError("top_words: expected a 1 x " + std::to_string(params.num_words()) + " word row");
  if (vocabulary.size() != params.num_words()) throw ShapeError("top_words: vocabulary size does not match the model");
  Tape tape;
  ParamVars pv = bind_params(tape, params, false);
  Var c = assign(pv.word.entities, pv.prototypes, cfg.temperature);
  double mass = 0.0;
  for (std::size_t i = 0; i < c.rows(); ++i) mass += c.value()(i, k);
  if (!(mass > 0.0)) throw NumericError("top_words: prototype " + std::to_string(k) + " has no word assigned to it");
  Posterior q = encode(tape.constant(user_words), c, k, nullptr, pv.word, cfg);
  Var log_pi = decode({q.mu}, ad::column(c, k), pv.word.entities, cfg.temperature);
  const DenseTensor& lp = log_pi.value();
  std::vector<double> scores(lp.cols());
  for (std::size_t i = 0; i < lp.cols(); ++i) scores[i] = std::exp(lp(0, i));
  std::vector<ScoredWord> out;
  for (auto i : top_k(scores, {}, n_words)) out.push_back({vocabulary[i], scores[i]});
  return out;
}

struct ItemPrototype {
  std::size_t prototype = 0;
  std::vector<double> memberships;
  bool ambiguous = false;  // the top membership is shared
};

inline std::vector<ItemPrototype> item_prototypes(const ModelParams& params, const ModelConfig& cfg) {
  auto a = prototype_assign(params.rating.entities, params.prototypes, cfg.temperature);
  std::vector<ItemPrototype> out(a.soft.rows());
  for (std::size_t i = 0; i < a.soft.rows(); ++i) {
    auto row = a.soft.row(i);
    auto& ip = out[i];
    ip.memberships.assign(row.begin(), row.end());
    ip.prototype = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    ip.ambiguous = std::count(row.begin(), row.end(), row[ip.prototype]) > 1;
  }
  return out;
}

// Mean of the assignment rows of the user's train items, renormalized.
inline std::vector<double> user_prototype_weights(const std::vector<ItemPrototype>& items,
                                                  const std::vector<std::uint32_t>& train_items) {
  if (train_items.empty()) throw ConfigError("user has no training items");
  std::vector<double> w(items.at(train_items[0]).memberships.size(), 0.0);
  for (auto i : train_items)
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += items.at(i).memberships[k];
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

struct Explanation {
  std::string user_id;
  std::string item_id;
  std::vector<double> prototype_weights;
  std::size_t item_prototype = 0;
  std::vector<std::vector<ScoredWord>> prototype_words;  // per prototype
  std::vector<std::vector<std::string>> overlap;         // item words among each prototype's top words
  bool item_has_tokens = true;
};

struct ExplainContext {
  const ModelParams* params = nullptr;
  const ModelConfig* config = nullptr;
  const DatasetSplit* split = nullptr;
  const UserWordMatrix* words = nullptr;
  const std::vector<Document>* documents = nullptr;  // by item index
};

inline Explanation explain(const ExplainContext& ctx, std::uint32_t user, std::uint32_t item, std::size_t n_words,
                           const std::vector<ItemPrototype>& items) {
  const auto& split = *ctx.split;
  if (user >= split.num_users()) throw ConfigError("explain: unknown user index " + std::to_string(user));
  if (item >= split.num_items()) throw ConfigError("explain: unknown item index " + std::to_string(item));
  std::vector<std::uint32_t> train;
  for (const auto& e : split.train)
    if (e.user == user) train.push_back(e.item);
  Explanation ex;
  ex.user_id = split.user_ids[user];
  ex.item_id = split.item_ids[item];
  ex.prototype_weights = user_prototype_weights(items, train);
  ex.item_prototype = items.at(item).prototype;
  const DenseTensor row = dense_rows(ctx.words->weights, std::vector<std::uint32_t>{user});
  const auto& doc = ctx.documents->at(item);
  ex.item_has_tokens = !doc.empty();
  const std::set<std::string> item_words(doc.begin(), doc.end());
  for (std::size_t k = 0; k < ctx.config->num_prototypes; ++k) {
    auto words = top_words(*ctx.params, *ctx.config, row, k, n_words, ctx.words->vocabulary);
    std::vector<std::string> hits;
    for (const auto& w : words)
      if (item_words.count(w.word)) hits.push_back(w.word);
    ex.prototype_words.push_back(std::move(words));
    ex.overlap.push_back(std::move(hits));
  }
  return ex;
}

inline nlohmann::json words_json(const std::vector<ScoredWord>& words) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& w : words) j.push_back({{"word", w.word}, {"score", w.score}});
  return j;
}

inline nlohmann::json explanation_json(const Explanation& e) {
  nlohmann::json j{{"user", e.user_id},
                   {"item", e.item_id},
                   {"prototype_weights", e.prototype_weights},
                   {"item_prototype", e.item_prototype},
                   {"item_has_tokens", e.item_has_tokens}};
  j["prototypes"] = nlohmann::json::array();
  for (std::size_t k = 0; k < e.prototype_words.size(); ++k)
    j["prototypes"].push_back({{"prototype", k}, {"top_words", words_json(e.prototype_words[k])}, {"overlap", e.overlap[k]}});
  return j;
}

// word <TAB> prototype <TAB> score, for external word-cloud tools.
inline std::string word_frequency_tsv(const std::vector<std::vector<ScoredWord>>& per_prototype) {
  std::string out = "word\tprototype\tscore\n";
  char buf[64];
  for (std::size_t k = 0; k < per_prototype.size(); ++k)
    for (const auto& w : per_prototype[k]) {
      std::snprintf(buf, sizeof buf, "\t%zu\t%.10g\n", k, w.score);
      out += w.word + buf;
    }
  return out;
}

}  // namespace dgvae
