#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgvae/error.hpp"
#include "dgvae/ingestion.hpp"
#include "dgvae/numerics/rng.hpp"

namespace dgvae {

struct SynthConfig {
  std::size_t users = 300;
  std::size_t items = 200;
  std::size_t words = 150;
  std::size_t prototypes = 3;  // K*
  std::size_t interactions_per_user = 12;
  std::size_t text_tokens_per_item = 6;
  std::size_t visual_tokens_per_item = 3;
  double noise = 0.1;             // eta
  double one_hot_fraction = 0.5;  // users whose mixture is a single prototype
  std::size_t embedding_dim = 16;
  double embedding_noise = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (prototypes < 2) throw ConfigError("synth: need at least 2 prototypes");
    if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("synth: noise rate must lie in [0, 1)");
    if (interactions_per_user < 5) throw ConfigError("synth: interactions_per_user must be >= 5 for the 5-core filter");
    if (items < prototypes || words < prototypes) throw ConfigError("synth: need at least one item and word per prototype");
    if (interactions_per_user > items / prototypes)
      throw ConfigError("synth: interactions_per_user exceeds the items available per prototype");
    if (std::max(text_tokens_per_item, visual_tokens_per_item) > words / prototypes)
      throw ConfigError("synth: more tokens per item than words in a prototype pool");
    if (embedding_dim < prototypes) throw ConfigError("synth: embedding_dim must be >= prototypes (orthogonal centroids)");
    if (!(one_hot_fraction >= 0.0 && one_hot_fraction <= 1.0)) throw ConfigError("synth: one_hot_fraction must lie in [0, 1]");
    if (users < 5) throw ConfigError("synth: need at least 5 users");
  }
};

struct SynthTruth {
  std::vector<std::size_t> item_labels;  // by generated item index
  std::vector<std::size_t> word_labels;  // by generated word index
  std::vector<std::vector<double>> user_mixtures;
  std::vector<std::string> user_ids, item_ids, words;

  std::map<std::string, std::size_t> item_label_map() const {
    std::map<std::string, std::size_t> m;
    for (std::size_t i = 0; i < item_ids.size(); ++i) m[item_ids[i]] = item_labels[i];
    return m;
  }
  std::map<std::string, std::size_t> word_label_map() const {
    std::map<std::string, std::size_t> m;
    for (std::size_t i = 0; i < words.size(); ++i) m[words[i]] = word_labels[i];
    return m;
  }
  // Users whose mixture puts all weight on one prototype.
  std::vector<std::size_t> one_hot_users() const {
    std::vector<std::size_t> out;
    for (std::size_t u = 0; u < user_mixtures.size(); ++u)
      if (*std::max_element(user_mixtures[u].begin(), user_mixtures[u].end()) == 1.0) out.push_back(u);
    return out;
  }
};

struct SynthDataset {
  RawInteractions interactions;
  ModalityEmbeddings visual, textual;  // rows follow `tokens` order
  std::vector<ItemTokens> tokens;
  SynthTruth truth;
};

namespace detail {

inline std::string padded(char prefix, std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  return std::string(1, prefix) + std::string(width - std::min(width, digits.size()), '0') + digits;
}

// `count` distinct draws from `pool` (count <= pool.size()).
inline std::vector<std::size_t> sample_distinct(std::vector<std::size_t> pool, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
  pool.resize(count);
  return pool;
}

inline std::vector<std::string> draw_tokens(std::size_t count, const std::vector<std::size_t>& own_pool,
                                            std::size_t num_words, double noise, const std::vector<std::string>& words,
                                            Rng& rng) {
  std::vector<std::size_t> own = sample_distinct(own_pool, count, rng);
  std::vector<std::string> out;
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t w = rng.uniform() < noise ? rng.index(num_words) : own[t];
    out.push_back(words[w]);
  }
  return out;
}

}  // namespace detail

// Planted-prototype dataset. Items are balanced across prototypes; each user has
// a primary prototype and, unless one-hot, a secondary one with weight in [0.1, 0.4].
inline SynthDataset generate(const SynthConfig& c) {
  c.validate();
  Rng rng(c.seed);
  SynthDataset d;
  auto& t = d.truth;
  for (std::size_t u = 0; u < c.users; ++u) t.user_ids.push_back(detail::padded('u', u, c.users));
  for (std::size_t i = 0; i < c.items; ++i) t.item_ids.push_back(detail::padded('i', i, c.items));
  for (std::size_t w = 0; w < c.words; ++w) t.words.push_back(detail::padded('w', w, c.words));

  t.item_labels.resize(c.items);
  for (std::size_t i = 0; i < c.items; ++i) t.item_labels[i] = i % c.prototypes;
  rng.shuffle(std::span<std::size_t>(t.item_labels));
  t.word_labels.resize(c.words);
  const std::size_t pool_size = c.words / c.prototypes;
  std::vector<std::vector<std::size_t>> word_pool(c.prototypes), item_pool(c.prototypes);
  for (std::size_t w = 0; w < c.words; ++w) {
    t.word_labels[w] = std::min(w / pool_size, c.prototypes - 1);
    word_pool[t.word_labels[w]].push_back(w);
  }
  for (std::size_t i = 0; i < c.items; ++i) item_pool[t.item_labels[i]].push_back(i);

  auto embed = [&](Modality m) {
    ModalityEmbeddings e{m, DenseTensor::zeros(c.items, c.embedding_dim)};
    for (std::size_t i = 0; i < c.items; ++i) {
      for (std::size_t j = 0; j < c.embedding_dim; ++j) e.features(i, j) = c.embedding_noise * rng.normal();
      e.features(i, t.item_labels[i]) += 1.0;
    }
    return e;
  };
  d.visual = embed(Modality::kVisual);
  d.textual = embed(Modality::kTextual);

  for (std::size_t i = 0; i < c.items; ++i) {
    const auto& pool = word_pool[t.item_labels[i]];
    ItemTokens it{t.item_ids[i], {}, {}};
    it.text_tokens = detail::draw_tokens(c.text_tokens_per_item, pool, c.words, c.noise, t.words, rng);
    it.visual_tokens = detail::draw_tokens(c.visual_tokens_per_item, pool, c.words, c.noise, t.words, rng);
    d.tokens.push_back(std::move(it));
  }

  // Interactions; redrawn until every item clears the 5-core threshold.
  for (int attempt = 0;; ++attempt) {
    if (attempt == 100) throw ConfigError("synth: could not generate a 5-core interaction set; raise interactions_per_user");
    t.user_mixtures.assign(c.users, std::vector<double>(c.prototypes, 0.0));
    std::vector<Interaction> pairs;
    std::vector<std::size_t> item_count(c.items, 0);
    for (std::size_t u = 0; u < c.users; ++u) {
      auto& mix = t.user_mixtures[u];
      const std::size_t primary = rng.index(c.prototypes);
      if (rng.uniform() < c.one_hot_fraction) {
        mix[primary] = 1.0;
      } else {
        const std::size_t secondary = (primary + 1 + rng.index(c.prototypes - 1)) % c.prototypes;
        const double w2 = 0.1 + 0.3 * rng.uniform();
        mix[primary] = 1.0 - w2;
        mix[secondary] = w2;
      }
      std::set<std::size_t> chosen;
      while (chosen.size() < c.interactions_per_user) {
        std::size_t item;
        if (rng.uniform() < c.noise) {
          item = rng.index(c.items);
        } else {
          double x = rng.uniform();
          std::size_t k = 0;
          while (k + 1 < c.prototypes && x >= mix[k]) x -= mix[k++];
          item = item_pool[k][rng.index(item_pool[k].size())];
        }
        chosen.insert(item);
      }
      for (auto i : chosen) {
        pairs.push_back({t.user_ids[u], t.item_ids[i]});
        ++item_count[i];
      }
    }
    if (*std::min_element(item_count.begin(), item_count.end()) >= 5) {
      d.interactions = dedupe(std::move(pairs));
      break;
    }
  }
  return d;
}

inline nlohmann::json truth_json(const SynthTruth& t) {
  nlohmann::json j;
  j["item_labels"] = nlohmann::json::object();
  for (std::size_t i = 0; i < t.item_ids.size(); ++i) j["item_labels"][t.item_ids[i]] = t.item_labels[i];
  j["word_labels"] = nlohmann::json::object();
  for (std::size_t w = 0; w < t.words.size(); ++w) j["word_labels"][t.words[w]] = t.word_labels[w];
  j["user_mixtures"] = nlohmann::json::object();
  for (std::size_t u = 0; u < t.user_ids.size(); ++u) j["user_mixtures"][t.user_ids[u]] = t.user_mixtures[u];
  return j;
}

inline SynthTruth truth_from_json(const nlohmann::json& j) {
  SynthTruth t;
  try {
    for (auto& [id, label] : j.at("item_labels").items()) {
      t.item_ids.push_back(id);
      t.item_labels.push_back(label.get<std::size_t>());
    }
    for (auto& [w, label] : j.at("word_labels").items()) {
      t.words.push_back(w);
      t.word_labels.push_back(label.get<std::size_t>());
    }
    for (auto& [id, mix] : j.at("user_mixtures").items()) {
      t.user_ids.push_back(id);
      t.user_mixtures.push_back(mix.get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("truth.json: ") + e.what());
  }
  return t;
}

// interactions.tsv, visual.emb, textual.emb, tokens.jsonl, truth.json
inline void write_synth(const std::filesystem::path& dir, const SynthDataset& d) {
  std::filesystem::create_directories(dir);
  write_interactions(dir / "interactions.tsv", d.interactions);
  write_embeddings(dir / "visual.emb", d.visual);
  write_embeddings(dir / "textual.emb", d.textual);
  write_tokens(dir / "tokens.jsonl", d.tokens);
  auto out = detail::open_output(dir / "truth.json");
  out << truth_json(d.truth).dump(1) << '\n';
}

inline SynthTruth read_truth(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  try {
    return truth_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Best fraction of matching labels over every relabeling of `learned`.
inline double prototype_purity(const std::vector<std::size_t>& learned, const std::vector<std::size_t>& truth,
                               std::size_t k) {
  if (learned.size() != truth.size()) throw ShapeError("purity: label vectors differ in length");
  if (learned.empty()) throw ConfigError("purity: no items");
  if (k < 2 || k > 8) throw ConfigError("purity: prototype count must be in [2, 8]");
  for (std::size_t i = 0; i < learned.size(); ++i)
    if (learned[i] >= k || truth[i] >= k)
      throw ConfigError("purity: learned prototype count does not match the planted count");
  std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < learned.size(); ++i) ++confusion[learned[i]][truth[i]];
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t a = 0; a < k; ++a) hits += confusion[a][perm[a]];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(learned.size());
}

}  // namespace dgvae
