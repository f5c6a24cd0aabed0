#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dgvae/error.hpp"
#include "dgvae/ingestion.hpp"

namespace dgvae {

struct ColdStartOptions {
  double item_fraction = 0.2;
  std::size_t keep_per_item = 2;
};

struct PrepareOptions {
  SplitRatios ratios;
  std::uint64_t seed = 0;
  bool strict = false;
  std::optional<ColdStartOptions> cold_start;
  std::size_t top_v = 5;
  std::size_t core = 5;
  VocabularyOptions vocabulary;
};

// Everything the model stages need, indexed by dataset user/item index.
struct PreparedData {
  DatasetSplit split;
  UserWordMatrix words;
  std::vector<Document> documents;
  ModalityEmbeddings visual, textual;
  DatasetStats stats;
  std::vector<std::string> warnings;
};

// Embedding rows follow the order of `tokens`; they are reordered to the
// dataset's item indices. Items absent from the token catalog are an error
// because they have no embedding row.
inline PreparedData prepare(const RawInteractions& raw, const std::vector<ItemTokens>& tokens,
                            const ModalityEmbeddings& visual, const ModalityEmbeddings& textual,
                            const PrepareOptions& opt) {
  for (const auto* e : {&visual, &textual})
    if (e->num_items() != tokens.size())
      throw ShapeError(std::string(modality_name(e->modality)) + " embeddings have " + std::to_string(e->num_items()) +
                       " rows but the token catalog lists " + std::to_string(tokens.size()) + " items");
  PreparedData p;
  const RawInteractions core = five_core_filter(raw, opt.core);
  if (core.empty()) throw ConfigError("no interactions survive the " + std::to_string(opt.core) + "-core filter");
  p.split = opt.cold_start ? cold_start_split(core, opt.cold_start->item_fraction, opt.cold_start->keep_per_item, opt.seed)
                           : random_split(core, opt.ratios, opt.seed, opt.strict);
  p.warnings = p.split.warnings;

  std::unordered_map<std::string, std::size_t> catalog;
  for (std::size_t i = 0; i < tokens.size(); ++i) catalog.emplace(tokens[i].item_id, i);
  std::vector<std::size_t> order;
  for (const auto& id : p.split.item_ids) {
    auto it = catalog.find(id);
    if (it == catalog.end()) throw ConfigError("item '" + id + "' has no token record and no embedding row");
    order.push_back(it->second);
  }
  p.visual = select_rows(visual, order);
  p.textual = select_rows(textual, order);
  p.documents = align_documents(p.split, tokens, opt.top_v, &p.warnings);
  p.words = build_user_word_matrix(p.documents, p.split, opt.vocabulary);
  p.stats = dataset_stats(p.split);
  return p;
}

inline nlohmann::json stats_json(const DatasetStats& s) {
  return {{"users", s.users},
          {"items", s.items},
          {"interactions", s.interactions},
          {"sparsity", format_percent(s.sparsity)}};
}

inline std::string stats_table(const DatasetStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %-8s %-14s %s\n%-8zu %-8zu %-14zu %s\n", "#User", "#Item", "#Interaction",
                "Sparsity", s.users, s.items, s.interactions, format_percent(s.sparsity).c_str());
  return buf;
}

// split.tsv, users.tsv, items.tsv, words.tsv, user_word.tsv, documents.jsonl,
// visual.emb, textual.emb, stats.json
inline void write_prepared(const std::filesystem::path& dir, const PreparedData& p) {
  std::filesystem::create_directories(dir);
  write_split(dir, p.split);
  write_user_word_matrix(dir, p.words);
  write_documents(dir / "documents.jsonl", p.documents);
  write_embeddings(dir / "visual.emb", p.visual);
  write_embeddings(dir / "textual.emb", p.textual);
  auto out = detail::open_output(dir / "stats.json");
  out << stats_json(p.stats).dump(1) << '\n';
  if (!out) throw IoError("failed writing stats.json");
}

inline PreparedData load_prepared(const std::filesystem::path& dir) {
  PreparedData p;
  p.split = read_split(dir);
  p.words = read_user_word_matrix(dir);
  p.documents = read_documents(dir / "documents.jsonl");
  p.visual = load_embeddings(dir / "visual.emb", Modality::kVisual);
  p.textual = load_embeddings(dir / "textual.emb", Modality::kTextual);
  p.stats = dataset_stats(p.split);
  const std::size_t n = p.split.num_items();
  if (p.documents.size() != n || p.visual.num_items() != n || p.textual.num_items() != n)
    throw FormatError(dir.string() + ": prepared files disagree on the item count");
  if (p.words.weights.rows() != p.split.num_users())
    throw FormatError(dir.string() + ": user_word.tsv rows do not match users.tsv");
  return p;
}

}  // namespace dgvae
