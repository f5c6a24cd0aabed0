#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dgvae/fixtures.hpp"
#include "dgvae/interpret.hpp"

using namespace dgvae;

namespace {

std::vector<std::string> vocab10() {
  std::vector<std::string> v;
  for (int i = 0; i < 10; ++i) v.push_back("w" + std::to_string(i));
  return v;
}

struct ExplainFixture {
  TinyFixture f = tiny_fixture();
  DatasetSplit split;
  UserWordMatrix words;
  std::vector<Document> docs;

  ExplainFixture() {
    for (int u = 0; u < 6; ++u) split.user_ids.push_back("u" + std::to_string(u));
    for (int i = 0; i < 8; ++i) split.item_ids.push_back("i" + std::to_string(i));
    for (const auto& t : f.ratings.triplets()) split.train.push_back({t.row, t.col});
    words = {f.words, vocab10()};
    docs.assign(8, {});
    for (int i = 0; i < 8; ++i) docs[i] = {"w" + std::to_string(i), "w" + std::to_string((i + 3) % 10), "zz"};
    docs[5].clear();
  }
  ExplainContext ctx() const { return {&f.params, &f.model, &split, &words, &docs}; }
};

DenseTensor word_row(const TinyFixture& f, std::uint32_t u) {
  return dense_rows(f.words, std::vector<std::uint32_t>{u});
}

}  // namespace

TEST(TopWords, CollapsedAssignmentMatchesFullDecoder) {
  // Every word strongly in prototype 0: restricting the decoder to prototype 0
  // must reproduce the full word-branch ranking.
  auto f = tiny_fixture();
  DenseTensor& m = f.params.prototypes;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    m(0, j) = 5.0;
    m(1, j) = m(2, j) = -5.0;
  }
  for (double& v : f.params.word.entities.values()) v = std::fabs(v) + 0.05;
  const auto vocab = vocab10();
  for (std::uint32_t u = 0; u < 6; ++u) {
    const DenseTensor row = word_row(f, u);
    Tape tape;
    ParamVars pv = bind_params(tape, f.params, false);
    const DenseTensor lp = forward_branch(tape.constant(row), pv.prototypes, pv.word, nullptr, f.model, nullptr).log_pi.value();
    std::vector<double> full(lp.cols());
    for (std::size_t i = 0; i < full.size(); ++i) full[i] = std::exp(lp(0, i));
    const auto expect = top_k(full, {}, 10);
    const auto got = top_words(f.params, f.model, row, 0, 10, vocab);
    ASSERT_EQ(got.size(), 10u);
    for (std::size_t p = 0; p < 10; ++p) {
      EXPECT_EQ(got[p].word, vocab[expect[p]]);
      EXPECT_NEAR(got[p].score, full[expect[p]], 1e-9);
    }
  }
}

TEST(TopWords, RankedDeterministicAndBounded) {
  const auto f = tiny_fixture();
  const auto vocab = vocab10();
  const DenseTensor row = word_row(f, 2);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto a = top_words(f.params, f.model, row, k, 4, vocab);
    ASSERT_EQ(a.size(), 4u);
    for (std::size_t p = 1; p < a.size(); ++p) EXPECT_GE(a[p - 1].score, a[p].score);
    const auto b = top_words(f.params, f.model, row, k, 4, vocab);
    for (std::size_t p = 0; p < a.size(); ++p) {
      EXPECT_EQ(a[p].word, b[p].word);
      EXPECT_EQ(a[p].score, b[p].score);
    }
    // More words than the vocabulary: all of them, probabilities summing to 1.
    const auto all = top_words(f.params, f.model, row, k, 50, vocab);
    EXPECT_EQ(all.size(), 10u);
    double total = 0;
    std::set<std::string> seen;
    for (const auto& w : all) {
      total += w.score;
      seen.insert(w.word);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(seen.size(), 10u);
  }
}

TEST(TopWords, Errors) {
  auto f = tiny_fixture();
  const auto vocab = vocab10();
  const DenseTensor row = word_row(f, 0);
  EXPECT_THROW(top_words(f.params, f.model, row, 3, 5, vocab), ConfigError);
  EXPECT_THROW(top_words(f.params, f.model, DenseTensor::zeros(1, 9), 0, 5, vocab), ShapeError);

  // A prototype whose assignment column underflows to zero everywhere.
  auto zeroed = f;
  for (std::size_t j = 0; j < zeroed.params.prototypes.cols(); ++j) zeroed.params.prototypes(2, j) = -1e4;
  for (double& v : zeroed.params.word.entities.values()) v = 0.5;
  EXPECT_THROW(top_words(zeroed.params, zeroed.model, row, 2, 5, vocab), NumericError);
  EXPECT_NO_THROW(top_words(zeroed.params, zeroed.model, row, 0, 5, vocab));

  ModelConfig no_words = f.model;
  no_words.word_branch = false;
  Rng rng(1);
  const auto p = init_params(no_words, 8, 0, rng);
  EXPECT_THROW(top_words(p, no_words, row, 0, 5, vocab), ConfigError);
}

TEST(ItemPrototype, ArgmaxAndAmbiguity) {
  auto f = tiny_fixture();
  f.model.temperature = 1.0;
  DenseTensor& m = f.params.prototypes;
  DenseTensor& h = f.params.rating.entities;
  for (double& v : m.values()) v = 0.0;
  for (std::size_t k = 0; k < 3; ++k) m(k, k) = 1.0;
  for (double& v : h.values()) v = 0.0;
  // Row 0 stays zero: uniform memberships.
  const double target[3] = {0.7, 0.2, 0.1};
  for (std::size_t k = 0; k < 3; ++k) h(1, k) = std::log(target[k]);
  h(2, 2) = 3.0;
  const auto items = item_prototypes(f.params, f.model);
  ASSERT_EQ(items.size(), 8u);
  EXPECT_EQ(items[0].prototype, 0u);
  EXPECT_TRUE(items[0].ambiguous);
  for (double c : items[0].memberships) EXPECT_NEAR(c, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(items[1].prototype, 0u);
  EXPECT_FALSE(items[1].ambiguous);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(items[1].memberships[k], target[k], 1e-12);
  EXPECT_EQ(items[2].prototype, 2u);
}

TEST(Explain, WeightsOverlapAndFlags) {
  ExplainFixture x;
  const auto items = item_prototypes(x.f.params, x.f.model);
  const auto ex = explain(x.ctx(), 1, 3, 4, items);
  EXPECT_EQ(ex.user_id, "u1");
  EXPECT_EQ(ex.item_id, "i3");
  ASSERT_EQ(ex.prototype_weights.size(), 3u);
  double total = 0;
  for (double w : ex.prototype_weights) {
    EXPECT_GE(w, 0.0);
    total += w;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_TRUE(ex.item_has_tokens);
  ASSERT_EQ(ex.prototype_words.size(), 3u);
  const std::set<std::string> vocab(x.words.vocabulary.begin(), x.words.vocabulary.end());
  const std::set<std::string> doc(x.docs[3].begin(), x.docs[3].end());
  for (std::size_t k = 0; k < 3; ++k) {
    std::set<std::string> expect;
    for (const auto& w : ex.prototype_words[k])
      if (doc.count(w.word)) expect.insert(w.word);
    EXPECT_EQ(std::set<std::string>(ex.overlap[k].begin(), ex.overlap[k].end()), expect);
    for (const auto& w : ex.overlap[k]) EXPECT_TRUE(vocab.count(w)) << w;
  }

  // Item without tokens: flagged, empty overlap, weights still reported.
  const auto bare = explain(x.ctx(), 1, 5, 4, items);
  EXPECT_FALSE(bare.item_has_tokens);
  for (const auto& o : bare.overlap) EXPECT_TRUE(o.empty());

  // Document disjoint from every top word.
  x.docs[4] = {"zz", "yy"};
  const auto disjoint = explain(x.ctx(), 0, 4, 10, items);
  EXPECT_TRUE(disjoint.item_has_tokens);
  for (const auto& o : disjoint.overlap) EXPECT_TRUE(o.empty());

  EXPECT_THROW(explain(x.ctx(), 6, 0, 4, items), ConfigError);
  EXPECT_THROW(explain(x.ctx(), 0, 8, 4, items), ConfigError);
}

TEST(Explain, SingleTrainItemWeightsEqualItsRow) {
  ExplainFixture x;
  x.split.train = {{0, 2}, {1, 0}, {1, 1}};
  const auto items = item_prototypes(x.f.params, x.f.model);
  const auto ex = explain(x.ctx(), 0, 1, 3, items);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(ex.prototype_weights[k], items[2].memberships[k], 1e-15);
  EXPECT_THROW(explain(x.ctx(), 4, 1, 3, items), ConfigError);  // no train items
}

TEST(Explain, JsonAndTsv) {
  ExplainFixture x;
  const auto items = item_prototypes(x.f.params, x.f.model);
  const auto ex = explain(x.ctx(), 2, 6, 3, items);
  const auto j = explanation_json(ex);
  EXPECT_EQ(j.at("user"), "u2");
  EXPECT_EQ(j.at("item"), "i6");
  EXPECT_EQ(j.at("prototypes").size(), 3u);
  EXPECT_EQ(j.at("prototypes")[0].at("top_words").size(), 3u);
  const std::string tsv = word_frequency_tsv(ex.prototype_words);
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "word\tprototype\tscore");
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 10);
}
