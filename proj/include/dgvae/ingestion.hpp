#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dgvae/error.hpp"
#include "dgvae/numerics/functions.hpp"
#include "dgvae/numerics/rng.hpp"
#include "dgvae/numerics/tensor.hpp"

namespace dgvae {

// ---------------------------------------------------------------------------
// Interactions

struct Interaction {
  std::string user;
  std::string item;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Implicit-feedback interactions with duplicate (user, item) pairs removed,
// in first-occurrence order.
struct RawInteractions {
  std::vector<Interaction> pairs;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
};

namespace detail {

struct PairHash {
  std::size_t operator()(const std::pair<std::string, std::string>& p) const noexcept {
    const std::size_t h1 = std::hash<std::string>{}(p.first);
    return h1 ^ (std::hash<std::string>{}(p.second) + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
  }
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace detail

inline RawInteractions dedupe(std::vector<Interaction> pairs) {
  RawInteractions out;
  std::unordered_set<std::pair<std::string, std::string>, detail::PairHash> seen;
  seen.reserve(pairs.size());
  for (auto& p : pairs) {
    if (seen.insert({p.user, p.item}).second) out.pairs.push_back(std::move(p));
  }
  return out;
}

// TSV `user_id<TAB>item_id[<TAB>ignored...]`; blank and `#` lines are skipped.
inline RawInteractions parse_interactions(std::istream& in, std::string_view source = "<stream>") {
  std::vector<Interaction> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(std::string(source) + ":" + std::to_string(line_no) + ": expected user_id<TAB>item_id");
    }
    const std::size_t tab2 = line.find('\t', tab + 1);
    std::string user(detail::trim(std::string_view(line).substr(0, tab)));
    std::string item(detail::trim(std::string_view(line).substr(tab + 1, tab2 == std::string::npos ? std::string::npos : tab2 - tab - 1)));
    if (user.empty() || item.empty()) {
      throw FormatError(std::string(source) + ":" + std::to_string(line_no) + ": empty user or item id");
    }
    pairs.push_back({std::move(user), std::move(item)});
  }
  if (pairs.empty()) throw FormatError(std::string(source) + ": no interactions");
  return dedupe(std::move(pairs));
}

inline RawInteractions load_interactions(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_interactions(in, path.string());
}

inline void write_interactions(const std::filesystem::path& path, const RawInteractions& r) {
  auto out = detail::open_output(path);
  for (const auto& p : r.pairs) out << p.user << '\t' << p.item << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Repeatedly drops users and items with fewer than `min_count` interactions
// until nothing changes.
inline RawInteractions five_core_filter(const RawInteractions& r, std::size_t min_count = 5) {
  std::vector<Interaction> cur = r.pairs;
  while (true) {
    std::unordered_map<std::string, std::size_t> uc, ic;
    for (const auto& p : cur) {
      ++uc[p.user];
      ++ic[p.item];
    }
    std::vector<Interaction> next;
    next.reserve(cur.size());
    for (const auto& p : cur)
      if (uc[p.user] >= min_count && ic[p.item] >= min_count) next.push_back(p);
    if (next.size() == cur.size()) break;
    cur = std::move(next);
  }
  return RawInteractions{std::move(cur)};
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitPart : std::uint8_t { kTrain, kValidation, kTest };

inline const char* split_name(SplitPart p) {
  switch (p) {
    case SplitPart::kTrain:
      return "train";
    case SplitPart::kValidation:
      return "val";
    case SplitPart::kTest:
      return "test";
  }
  return "?";
}

struct IndexedInteraction {
  std::uint32_t user;
  std::uint32_t item;

  friend bool operator==(const IndexedInteraction&, const IndexedInteraction&) = default;
  friend auto operator<=>(const IndexedInteraction&, const IndexedInteraction&) = default;
};

struct DatasetSplit {
  std::vector<std::string> user_ids;  // index -> opaque id
  std::vector<std::string> item_ids;
  std::vector<IndexedInteraction> train;
  std::vector<IndexedInteraction> validation;
  std::vector<IndexedInteraction> test;
  std::vector<std::string> warnings;

  std::size_t num_users() const noexcept { return user_ids.size(); }
  std::size_t num_items() const noexcept { return item_ids.size(); }
  std::size_t num_interactions() const noexcept { return train.size() + validation.size() + test.size(); }

  const std::vector<IndexedInteraction>& part(SplitPart p) const {
    return p == SplitPart::kTrain ? train : (p == SplitPart::kValidation ? validation : test);
  }

  // Binary user x item matrix of one part.
  SparseMatrix matrix(SplitPart p) const {
    std::vector<Triplet> t;
    t.reserve(part(p).size());
    for (const auto& e : part(p)) t.push_back({e.user, e.item, 1.0});
    return SparseMatrix::from_triplets(num_users(), num_items(), std::move(t));
  }

  // Item lists per user for one part, in stored order.
  std::vector<std::vector<std::uint32_t>> items_by_user(SplitPart p) const {
    std::vector<std::vector<std::uint32_t>> out(num_users());
    for (const auto& e : part(p)) out[e.user].push_back(e.item);
    for (auto& items : out) std::sort(items.begin(), items.end());
    return out;
  }
};

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct IndexedDataset {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<IndexedInteraction> pairs;
};

// Dense indices by first appearance.
inline IndexedDataset index_interactions(const RawInteractions& r) {
  IndexedDataset out;
  std::unordered_map<std::string, std::uint32_t> users, items;
  out.pairs.reserve(r.size());
  for (const auto& p : r.pairs) {
    auto [u, nu] = users.try_emplace(p.user, static_cast<std::uint32_t>(out.user_ids.size()));
    if (nu) out.user_ids.push_back(p.user);
    auto [i, ni] = items.try_emplace(p.item, static_cast<std::uint32_t>(out.item_ids.size()));
    if (ni) out.item_ids.push_back(p.item);
    out.pairs.push_back({u->second, i->second});
  }
  return out;
}

struct PerUserCounts {
  std::size_t train, validation, test;
};

// Per-user allocation: train = round(r_t n), val = round(r_v n), test takes
// the remainder; when that leaves test empty, one interaction moves over from
// validation (or from train if validation is empty). Train keeps at least one.
inline PerUserCounts split_counts(std::size_t n, const SplitRatios& ratios) {
  if (n == 0) return {0, 0, 0};
  if (n == 1) return {1, 0, 0};
  if (n == 2) return {1, 0, 1};
  auto rnd = [](double x) { return static_cast<std::size_t>(std::llround(x)); };
  std::size_t tr = std::clamp<std::size_t>(rnd(ratios.train * static_cast<double>(n)), 1, n);
  std::size_t va = std::min(rnd(ratios.validation * static_cast<double>(n)), n - tr);
  std::size_t te = n - tr - va;
  if (te == 0) {
    if (va > 0) {
      --va;
    } else {
      --tr;
    }
    te = 1;
  }
  return {tr, va, te};
}

// Per-user random 8:1:1-style split of each user's interaction history.
inline DatasetSplit random_split(const RawInteractions& r, SplitRatios ratios, std::uint64_t seed, bool strict = false) {
  const double total = ratios.train + ratios.validation + ratios.test;
  if (std::fabs(total - 1.0) > 1e-9 || ratios.train <= 0 || ratios.validation < 0 || ratios.test < 0) {
    throw ConfigError("random_split: ratios must be nonnegative and sum to 1");
  }
  IndexedDataset ds = index_interactions(r);
  DatasetSplit split;
  split.user_ids = std::move(ds.user_ids);
  split.item_ids = std::move(ds.item_ids);
  std::vector<std::vector<std::uint32_t>> by_user(split.num_users());
  for (const auto& p : ds.pairs) by_user[p.user].push_back(p.item);
  Rng rng(seed);
  for (std::uint32_t u = 0; u < by_user.size(); ++u) {
    auto& items = by_user[u];
    if (items.size() < 3) {
      if (strict) {
        throw ConfigError("random_split: user '" + split.user_ids[u] + "' has " + std::to_string(items.size()) +
                          " interactions (< 3)");
      }
      split.warnings.push_back("user '" + split.user_ids[u] + "' has fewer than 3 interactions");
    }
    rng.shuffle(std::span<std::uint32_t>(items));
    const PerUserCounts c = split_counts(items.size(), ratios);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const IndexedInteraction e{u, items[i]};
      if (i < c.train) {
        split.train.push_back(e);
      } else if (i < c.train + c.validation) {
        split.validation.push_back(e);
      } else {
        split.test.push_back(e);
      }
    }
  }
  return split;
}

// Item cold-start protocol. floor(item_fraction * N) items are sampled; each
// keeps `keep_per_item` random interactions in train (0 gives the zero-shot
// variant). The sampled items are divided into two halves whose remaining
// interactions form the validation and the test set respectively. All
// interactions of unsampled items stay in train.
inline DatasetSplit cold_start_split(const RawInteractions& r, double item_fraction, std::size_t keep_per_item,
                                     std::uint64_t seed) {
  if (!(item_fraction > 0.0 && item_fraction < 1.0)) throw ConfigError("cold_start_split: item_fraction must be in (0, 1)");
  if (keep_per_item != 0 && keep_per_item != 2) throw ConfigError("cold_start_split: keep_per_item must be 0 or 2");
  IndexedDataset ds = index_interactions(r);
  DatasetSplit split;
  split.user_ids = std::move(ds.user_ids);
  split.item_ids = std::move(ds.item_ids);
  const std::size_t n_items = split.num_items();

  Rng rng(seed);
  std::vector<std::uint32_t> order(n_items);
  for (std::uint32_t i = 0; i < n_items; ++i) order[i] = i;
  rng.shuffle(std::span<std::uint32_t>(order));
  const auto n_sampled = static_cast<std::size_t>(std::floor(item_fraction * static_cast<double>(n_items)));
  const std::size_t n_val = n_sampled / 2;

  std::vector<std::vector<std::uint32_t>> users_of(n_items);
  for (const auto& p : ds.pairs) users_of[p.item].push_back(p.user);

  // 0 = unsampled, 1 = validation pool, 2 = test pool
  std::vector<std::uint8_t> role(n_items, 0);
  for (std::size_t s = 0; s < n_sampled; ++s) {
    const std::uint32_t item = order[s];
    if (users_of[item].size() < keep_per_item) {
      split.warnings.push_back("cold-start: item '" + split.item_ids[item] + "' has fewer than " +
                               std::to_string(keep_per_item) + " interactions; skipped");
      continue;
    }
    role[item] = s < n_val ? 1 : 2;
  }
  std::vector<std::vector<std::uint32_t>> kept(n_items);
  for (std::uint32_t i = 0; i < n_items; ++i) {
    if (role[i] == 0) continue;
    auto users = users_of[i];
    rng.shuffle(std::span<std::uint32_t>(users));
    users.resize(keep_per_item);
    std::sort(users.begin(), users.end());
    kept[i] = std::move(users);
  }
  for (const auto& p : ds.pairs) {
    const std::uint8_t ro = role[p.item];
    if (ro == 0 || std::binary_search(kept[p.item].begin(), kept[p.item].end(), p.user)) {
      split.train.push_back(p);
    } else if (ro == 1) {
      split.validation.push_back(p);
    } else {
      split.test.push_back(p);
    }
  }
  return split;
}

inline void write_split(const std::filesystem::path& dir, const DatasetSplit& s) {
  {
    auto out = detail::open_output(dir / "split.tsv");
    for (SplitPart p : {SplitPart::kTrain, SplitPart::kValidation, SplitPart::kTest})
      for (const auto& e : s.part(p)) out << e.user << '\t' << e.item << '\t' << split_name(p) << '\n';
    if (!out) throw IoError("failed writing split.tsv");
  }
  auto write_ids = [&](const char* name, const std::vector<std::string>& ids) {
    auto out = detail::open_output(dir / name);
    for (std::size_t i = 0; i < ids.size(); ++i) out << i << '\t' << ids[i] << '\n';
    if (!out) throw IoError(std::string("failed writing ") + name);
  };
  write_ids("users.tsv", s.user_ids);
  write_ids("items.tsv", s.item_ids);
}

inline DatasetSplit read_split(const std::filesystem::path& dir) {
  DatasetSplit s;
  auto read_ids = [&](const char* name) {
    auto in = detail::open_input(dir / name);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos || std::stoul(line.substr(0, tab)) != ids.size()) {
        throw FormatError((dir / name).string() + ": malformed index line " + std::to_string(ids.size() + 1));
      }
      ids.push_back(line.substr(tab + 1));
    }
    return ids;
  };
  s.user_ids = read_ids("users.tsv");
  s.item_ids = read_ids("items.tsv");
  auto in = detail::open_input(dir / "split.tsv");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::uint64_t u = 0, i = 0;
    std::string part;
    if (!(ls >> u >> i >> part) || u >= s.num_users() || i >= s.num_items()) {
      throw FormatError("split.tsv:" + std::to_string(line_no) + ": malformed line");
    }
    const IndexedInteraction e{static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i)};
    if (part == "train") {
      s.train.push_back(e);
    } else if (part == "val") {
      s.validation.push_back(e);
    } else if (part == "test") {
      s.test.push_back(e);
    } else {
      throw FormatError("split.tsv:" + std::to_string(line_no) + ": unknown split '" + part + "'");
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Dataset statistics

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double sparsity = 0.0;  // fraction in [0, 1]
};

inline double sparsity(std::size_t users, std::size_t items, std::size_t interactions) {
  return 1.0 - static_cast<double>(interactions) / (static_cast<double>(users) * static_cast<double>(items));
}

// Percentage with two decimals, e.g. "99.88%".
inline std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
  return buf;
}

inline DatasetStats dataset_stats(const DatasetSplit& s) {
  return {s.num_users(), s.num_items(), s.num_interactions(), sparsity(s.num_users(), s.num_items(), s.num_interactions())};
}

// ---------------------------------------------------------------------------
// Modality embeddings

enum class Modality : std::uint8_t { kVisual, kTextual };

inline const char* modality_name(Modality m) { return m == Modality::kVisual ? "visual" : "textual"; }

struct ModalityEmbeddings {
  Modality modality = Modality::kTextual;
  DenseTensor features;  // N x d_m

  std::size_t num_items() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

// Header `N d`, then N rows of d whitespace-separated reals.
inline ModalityEmbeddings parse_embeddings(std::istream& in, Modality m, std::string_view source = "<stream>") {
  std::size_t n = 0, d = 0;
  if (!(in >> n >> d) || n == 0 || d == 0) throw FormatError(std::string(source) + ": bad header, expected 'N d'");
  std::vector<double> values(n * d);
  for (std::size_t i = 0; i < n * d; ++i) {
    std::string tok;
    if (!(in >> tok)) {
      throw FormatError(std::string(source) + ": expected " + std::to_string(n) + " rows of " + std::to_string(d) +
                        " values, got " + std::to_string(i) + " values");
    }
    char* end = nullptr;
    values[i] = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || !std::isfinite(values[i])) {
      throw FormatError(std::string(source) + ": row " + std::to_string(i / d + 1) + ": invalid value '" + tok + "'");
    }
  }
  std::string extra;
  if (in >> extra) throw FormatError(std::string(source) + ": trailing data after " + std::to_string(n) + " rows");
  return {m, DenseTensor({n, d}, std::move(values))};
}

inline ModalityEmbeddings load_embeddings(const std::filesystem::path& path, Modality m) {
  auto in = detail::open_input(path);
  return parse_embeddings(in, m, path.string());
}

inline void write_embeddings(const std::filesystem::path& path, const ModalityEmbeddings& e) {
  auto out = detail::open_output(path);
  out << e.features.rows() << ' ' << e.features.cols() << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < e.features.rows(); ++i) {
    for (std::size_t j = 0; j < e.features.cols(); ++j) out << (j ? " " : "") << e.features(i, j);
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Rows picked in `order` (output row r = input row order[r]).
inline ModalityEmbeddings select_rows(const ModalityEmbeddings& e, const std::vector<std::size_t>& order) {
  DenseTensor out = DenseTensor::zeros(order.size(), e.dim());
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (order[r] >= e.num_items()) throw ShapeError("select_rows: index out of range");
    std::copy(e.features.row(order[r]).begin(), e.features.row(order[r]).end(), out.row(r).begin());
  }
  return {e.modality, std::move(out)};
}

// ---------------------------------------------------------------------------
// Item tokens and user-word matrix

struct ItemTokens {
  std::string item_id;
  std::vector<std::string> text_tokens;
  std::vector<std::string> visual_tokens;  // rank-ordered, most relevant first
};

inline std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// JSON Lines: {"item_id": str, "text_tokens": [str], "visual_tokens": [str]}.
// Tokens are lowercased; empty tokens are dropped.
inline std::vector<ItemTokens> parse_tokens(std::istream& in, std::string_view source = "<stream>") {
  std::vector<ItemTokens> out;
  std::string line;
  std::size_t line_no = 0;
  auto tokens_of = [&](const nlohmann::json& j, const char* key) {
    std::vector<std::string> toks;
    if (!j.contains(key)) return toks;
    for (const auto& t : j.at(key)) {
      std::string s = lowercase(std::string(detail::trim(t.get<std::string>())));
      if (!s.empty()) toks.push_back(std::move(s));
    }
    return toks;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("item_id").get<std::string>(), tokens_of(j, "text_tokens"), tokens_of(j, "visual_tokens")});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<ItemTokens> load_tokens(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_tokens(in, path.string());
}

inline void write_tokens(const std::filesystem::path& path, const std::vector<ItemTokens>& tokens) {
  auto out = detail::open_output(path);
  for (const auto& t : tokens) {
    nlohmann::json j{{"item_id", t.item_id}, {"text_tokens", t.text_tokens}, {"visual_tokens", t.visual_tokens}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

using Document = std::vector<std::string>;

// Textual tokens followed by the first `top_v` visual tokens (all of them when fewer).
inline Document merge_visual_tokens(const ItemTokens& t, std::size_t top_v) {
  Document doc = t.text_tokens;
  const std::size_t take = std::min(top_v, t.visual_tokens.size());
  doc.insert(doc.end(), t.visual_tokens.begin(), t.visual_tokens.begin() + static_cast<std::ptrdiff_t>(take));
  return doc;
}

inline std::vector<Document> merge_visual_tokens(const std::vector<ItemTokens>& tokens, std::size_t top_v) {
  std::vector<Document> docs;
  docs.reserve(tokens.size());
  for (const auto& t : tokens) docs.push_back(merge_visual_tokens(t, top_v));
  return docs;
}

// Item documents aligned to split item indices; items with no token record get an empty document.
inline std::vector<Document> align_documents(const DatasetSplit& split, const std::vector<ItemTokens>& tokens,
                                             std::size_t top_v, std::vector<std::string>* warnings = nullptr) {
  std::unordered_map<std::string, const ItemTokens*> by_id;
  for (const auto& t : tokens) by_id.emplace(t.item_id, &t);
  std::vector<Document> docs(split.num_items());
  for (std::size_t i = 0; i < split.num_items(); ++i) {
    auto it = by_id.find(split.item_ids[i]);
    if (it == by_id.end()) {
      if (warnings) warnings->push_back("item '" + split.item_ids[i] + "' has no token record");
      continue;
    }
    docs[i] = merge_visual_tokens(*it->second, top_v);
  }
  return docs;
}

struct VocabularyOptions {
  std::size_t min_df = 2;
  double max_df_ratio = 0.5;
};

struct UserWordMatrix {
  SparseMatrix weights;                 // M x W TF-IDF, rows L2-normalized
  std::vector<std::string> vocabulary;  // index -> word, lexicographic order

  std::size_t num_words() const noexcept { return vocabulary.size(); }

  std::unordered_map<std::string, std::uint32_t> word_index() const {
    std::unordered_map<std::string, std::uint32_t> m;
    for (std::uint32_t i = 0; i < vocabulary.size(); ++i) m.emplace(vocabulary[i], i);
    return m;
  }
};

// A user's document is the concatenation of the documents of their train
// items. tf is the raw count in that document, idf(w) = ln(M / df(w)) with df
// counted over user documents. Words outside [min_df, max_df_ratio * M] or
// with zero idf are dropped, then rows are L2-normalized.
inline UserWordMatrix build_user_word_matrix(const std::vector<Document>& item_docs, const DatasetSplit& split,
                                             const VocabularyOptions& opt = {}) {
  if (item_docs.size() != split.num_items()) throw ShapeError("build_user_word_matrix: one document per item required");
  if (opt.max_df_ratio <= 0.0 || opt.max_df_ratio > 1.0) throw ConfigError("max_df_ratio must be in (0, 1]");
  if (split.train.empty()) throw ConfigError("build_user_word_matrix: split has no train interactions");
  const std::size_t m = split.num_users();
  std::vector<std::map<std::string, std::size_t>> counts(m);
  for (const auto& e : split.train)
    for (const auto& w : item_docs[e.item]) ++counts[e.user][w];
  std::map<std::string, std::size_t> df;
  for (const auto& c : counts)
    for (const auto& kv : c) ++df[kv.first];

  UserWordMatrix out;
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<double> idf;
  for (const auto& [word, d] : df) {  // std::map iterates lexicographically
    if (d < opt.min_df || static_cast<double>(d) > opt.max_df_ratio * static_cast<double>(m) || d >= m) continue;
    index.emplace(word, static_cast<std::uint32_t>(out.vocabulary.size()));
    out.vocabulary.push_back(word);
    idf.push_back(std::log(static_cast<double>(m) / static_cast<double>(d)));
  }
  if (out.vocabulary.empty()) throw ConfigError("build_user_word_matrix: empty vocabulary after frequency filtering");

  std::vector<Triplet> t;
  for (std::uint32_t u = 0; u < m; ++u) {
    const std::size_t start = t.size();
    for (const auto& [word, tf] : counts[u]) {
      auto it = index.find(word);
      if (it == index.end()) continue;
      t.push_back({u, it->second, static_cast<double>(tf) * idf[it->second]});
    }
    double norm = 0.0;
    for (std::size_t p = start; p < t.size(); ++p) norm += t[p].value * t[p].value;
    norm = std::sqrt(norm);
    if (norm >= kNormEpsilon)
      for (std::size_t p = start; p < t.size(); ++p) t[p].value /= norm;
  }
  out.weights = SparseMatrix::from_triplets(m, out.vocabulary.size(), std::move(t));
  return out;
}

inline void write_user_word_matrix(const std::filesystem::path& dir, const UserWordMatrix& w) {
  {
    auto out = detail::open_output(dir / "words.tsv");
    for (std::size_t i = 0; i < w.vocabulary.size(); ++i) out << i << '\t' << w.vocabulary[i] << '\n';
    if (!out) throw IoError("failed writing words.tsv");
  }
  auto out = detail::open_output(dir / "user_word.tsv");
  out << w.weights.rows() << '\t' << w.weights.cols() << '\n' << std::setprecision(17);
  for (const auto& e : w.weights.triplets()) out << e.row << '\t' << e.col << '\t' << e.value << '\n';
  if (!out) throw IoError("failed writing user_word.tsv");
}

inline UserWordMatrix read_user_word_matrix(const std::filesystem::path& dir) {
  UserWordMatrix w;
  {
    auto in = detail::open_input(dir / "words.tsv");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw FormatError("words.tsv: malformed line");
      w.vocabulary.push_back(line.substr(tab + 1));
    }
  }
  auto in = detail::open_input(dir / "user_word.tsv");
  std::size_t rows = 0, cols = 0;
  if (!(in >> rows >> cols) || cols != w.vocabulary.size()) throw FormatError("user_word.tsv: bad header");
  std::vector<Triplet> t;
  std::uint64_t r = 0, c = 0;
  double v = 0.0;
  while (in >> r >> c >> v) t.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), v});
  if (!in.eof()) throw FormatError("user_word.tsv: malformed entry");
  w.weights = SparseMatrix::from_triplets(rows, cols, std::move(t));
  return w;
}

inline void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs) {
  auto out = detail::open_output(path);
  for (std::size_t i = 0; i < docs.size(); ++i) out << nlohmann::json{{"item_idx", i}, {"tokens", docs[i]}}.dump() << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::vector<Document> read_documents(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<Document> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.at("item_idx").get<std::size_t>() != docs.size()) throw FormatError(path.string() + ": item_idx out of order");
      docs.push_back(j.at("tokens").get<Document>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return docs;
}

}  // namespace dgvae
