#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dgvae/pipeline.hpp"
#include "dgvae/synth.hpp"

using namespace dgvae;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dgvae_synth_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fraction of generated text tokens that come from the item's own pool.
double token_purity(const SynthDataset& d) {
  const auto words = d.truth.word_label_map();
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < d.tokens.size(); ++i)
    for (const auto& w : d.tokens[i].text_tokens) {
      hits += words.at(w) == d.truth.item_labels[i];
      ++total;
    }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST(Synth, SameSeedWritesIdenticalFiles) {
  SynthConfig c;
  c.seed = 42;
  const auto a = temp_dir("a"), b = temp_dir("b");
  write_synth(a, generate(c));
  write_synth(b, generate(c));
  for (const char* f : {"interactions.tsv", "visual.emb", "textual.emb", "tokens.jsonl", "truth.json"}) {
    const std::string x = slurp(a / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(b / f)) << f;
  }
  c.seed = 43;
  const auto other = temp_dir("c");
  write_synth(other, generate(c));
  EXPECT_NE(slurp(a / "interactions.tsv"), slurp(other / "interactions.tsv"));
}

TEST(Synth, NoiselessOneHotUsersStayInTheirPrototype) {
  SynthConfig c;
  c.prototypes = 2;
  c.noise = 0.0;
  c.one_hot_fraction = 1.0;
  c.seed = 3;
  const auto d = generate(c);
  const auto labels = d.truth.item_label_map();
  std::map<std::string, std::set<std::size_t>> seen;
  for (const auto& p : d.interactions.pairs) seen[p.user].insert(labels.at(p.item));
  ASSERT_EQ(seen.size(), c.users);
  for (std::size_t u = 0; u < c.users; ++u) {
    const auto& mix = d.truth.user_mixtures[u];
    const std::size_t dominant = std::max_element(mix.begin(), mix.end()) - mix.begin();
    EXPECT_EQ(seen[d.truth.user_ids[u]], std::set<std::size_t>{dominant});
  }
  EXPECT_DOUBLE_EQ(token_purity(d), 1.0);
}

TEST(Synth, TruthInvariants) {
  const auto d = generate({});
  for (auto l : d.truth.item_labels) EXPECT_LT(l, 3u);
  for (auto l : d.truth.word_labels) EXPECT_LT(l, 3u);
  for (const auto& m : d.truth.user_mixtures) {
    EXPECT_NEAR(std::accumulate(m.begin(), m.end(), 0.0), 1.0, 1e-15);
    for (double v : m) EXPECT_GE(v, 0.0);
  }
  // Balanced items, disjoint word pools.
  std::vector<std::size_t> count(3, 0);
  for (auto l : d.truth.item_labels) ++count[l];
  EXPECT_EQ(count, (std::vector<std::size_t>{67, 67, 66}));
  EXPECT_GT(d.truth.one_hot_users().size(), 100u);
  EXPECT_LT(d.truth.one_hot_users().size(), 200u);
}

TEST(Synth, DefaultConfigLoadsCleanlyThroughIngestion) {
  const auto dir = temp_dir("default");
  write_synth(dir, generate({}));
  const auto raw = load_interactions(dir / "interactions.tsv");
  EXPECT_EQ(raw.size(), 300u * 12u);
  const auto core = five_core_filter(raw);
  EXPECT_EQ(core.pairs, raw.pairs);
  const auto tokens = load_tokens(dir / "tokens.jsonl");
  const auto vis = load_embeddings(dir / "visual.emb", Modality::kVisual);
  const auto txt = load_embeddings(dir / "textual.emb", Modality::kTextual);
  const auto p = prepare(raw, tokens, vis, txt, {});
  EXPECT_TRUE(p.warnings.empty()) << p.warnings.front();
  EXPECT_EQ(p.split.num_users(), 300u);
  EXPECT_EQ(p.split.num_items(), 200u);
  EXPECT_GT(p.words.num_words(), 100u);

  const auto truth = read_truth(dir / "truth.json");
  EXPECT_EQ(truth.item_label_map(), generate({}).truth.item_label_map());
}

TEST(Synth, NoiseLowersTokenPurity) {
  std::vector<double> mean;
  for (double eta : {0.0, 0.2, 0.5}) {
    double s = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SynthConfig c;
      c.noise = eta;
      c.seed = seed;
      s += token_purity(generate(c));
    }
    mean.push_back(s / 20.0);
  }
  EXPECT_DOUBLE_EQ(mean[0], 1.0);
  EXPECT_GT(mean[0], mean[1]);
  EXPECT_GT(mean[1], mean[2]);
}

TEST(Synth, InfeasibleConfigsAreRejected) {
  SynthConfig c;
  c.text_tokens_per_item = 51;
  EXPECT_THROW(generate(c), ConfigError);
  c = {};
  c.prototypes = 1;
  EXPECT_THROW(generate(c), ConfigError);
  c = {};
  c.noise = 1.0;
  EXPECT_THROW(generate(c), ConfigError);
  c = {};
  c.interactions_per_user = 4;
  EXPECT_THROW(generate(c), ConfigError);
}

TEST(Purity, Examples) {
  const std::vector<std::size_t> truth{0, 0, 1, 1, 2, 2, 0};
  EXPECT_DOUBLE_EQ(prototype_purity(truth, truth, 3), 1.0);
  const std::vector<std::size_t> permuted{2, 2, 0, 0, 1, 1, 2};
  EXPECT_DOUBLE_EQ(prototype_purity(permuted, truth, 3), 1.0);
  EXPECT_DOUBLE_EQ(prototype_purity(truth, permuted, 3), 1.0);
  const std::vector<std::size_t> one_off{0, 0, 1, 1, 2, 2, 1};
  EXPECT_DOUBLE_EQ(prototype_purity(one_off, truth, 3), 6.0 / 7.0);
  EXPECT_THROW(prototype_purity({0, 3}, {0, 1}, 3), ConfigError);
  EXPECT_THROW(prototype_purity({0}, {0, 1}, 3), ShapeError);
}

TEST(Purity, RandomAssignmentIsNearChance) {
  Rng rng(5);
  std::vector<std::size_t> a(30000), b(30000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.index(3);
    b[i] = rng.index(3);
  }
  EXPECT_NEAR(prototype_purity(a, b, 3), 1.0 / 3.0, 0.01);
}
