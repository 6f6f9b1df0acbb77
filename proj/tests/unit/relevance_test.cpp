#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "wse/errors.hpp"
#include "wse/relevance.hpp"
#include "wse/segmentation.hpp"
#include "wse_testing.hpp"

namespace wse {
namespace {

using testing::FunctionBackend;

std::unique_ptr<SimilarityProvider> fixed(double s_c, double s_l,
                                          std::vector<TextPair>* seen = nullptr) {
  auto b = std::make_shared<FunctionBackend>([=](const TextPair& p) {
    if (seen) seen->push_back(p);
    return SimilarityResult::from(s_c, s_l);
  });
  return std::make_unique<SimilarityProvider>(ProviderConfig{}, b);
}

QASample one_response(const GenerationRecord& r, const std::string& question = "Why?") {
  QASample s;
  s.id = "t";
  s.question = question;
  s.references = {"x"};
  s.most_likely = r;
  s.responses = {r};
  return s;
}

TEST(Relevance, WordRelevanceFromProvider) {
  const auto rec = testing::words_record({{"alpha", -1}, {"beta", -1}});
  const auto s = one_response(rec);
  const auto al = align_record(rec);
  EXPECT_EQ(word_relevance(s, 0, al, *fixed(1.0, 1.0)).scores, (std::vector<double>{0, 0}));
  const auto r = word_relevance(s, 0, al, *fixed(0.9, 0.7)).scores;
  EXPECT_NEAR(r[0], 0.3, 1e-15);
  EXPECT_NEAR(r[1], 0.3, 1e-15);
}

TEST(Relevance, SingleWordIsFullyRelevant) {
  const auto rec = testing::cut_record("Paris.", {5}, {-1, -1});
  std::vector<TextPair> seen;
  EXPECT_EQ(word_relevance(one_response(rec), 0, align_record(rec), *fixed(0.2, 0.2, &seen)).scores,
            (std::vector<double>{1.0}));
  EXPECT_TRUE(seen.empty());
}

TEST(Relevance, AblationPairsUseQuestionPrefix) {
  const auto rec = testing::words_record({{"It", -1}, {"is", -1}, {"insulin.", -1}});
  auto s = one_response(rec, "Which hormone?");
  s.context = "Diabetes notes";
  std::vector<TextPair> seen;
  word_relevance(s, 0, align_record(rec), *fixed(0.5, 0.5, &seen));
  ASSERT_EQ(seen.size(), 3u);
  EXPECT_EQ(seen[0].a, "Which hormone? It is insulin.");
  EXPECT_EQ(seen[0].b, "Which hormone? is insulin.");
  EXPECT_EQ(seen[1].b, "Which hormone? It insulin.");
  EXPECT_EQ(seen[2].b, "Which hormone? It is.");

  seen.clear();
  word_relevance(s, 0, align_record(rec), *fixed(0.5, 0.5, &seen), RelevanceOptions{true});
  EXPECT_EQ(seen[0].a, "Diabetes notes Which hormone? It is insulin.");
}

TEST(Relevance, SpliceCollapsesWhitespaceAndIsInvertible) {
  EXPECT_EQ(remove_span("a b c", {2, 3}).text, "a c");
  EXPECT_EQ(remove_span("a b c", {4, 5}).text, "a b");
  EXPECT_EQ(remove_span("a b c", {0, 1}).text, "b c");
  EXPECT_EQ(remove_span("a  b, c", {3, 4}).text, "a, c");

  std::mt19937 rng(11);
  const std::vector<std::string> atoms = {"w", "xy", " ", "  ", ".", "\t", "-", "z!"};
  for (int i = 0; i < 500; ++i) {
    std::string text;
    for (int k = 0; k < 8; ++k) text += atoms[rng() % atoms.size()];
    for (const auto& w : segment_words(text)) {
      const auto a = remove_span(text, w.span);
      ASSERT_EQ(a.restore(), text);
      ASSERT_EQ(a.text.size() + a.removed.size(), text.size());
    }
  }
}

TEST(Relevance, TokenRelevanceFollowsOwner) {
  const auto rec = testing::cut_record("COVID vaccine", {3, 5}, {-1, -1, -1});
  const auto al = align_record(rec);
  WordRelevance wr{{0.4, 0.9}};
  EXPECT_EQ(token_relevance(wr, al, false).scores, (std::vector<double>{0.4, 0.4, 0.9}));

  WordRelevance two{{0.2, 0.6}};
  const auto norm = token_relevance(two, al, true).scores;
  EXPECT_NEAR(norm[0], 0.25, 1e-15);
  EXPECT_NEAR(norm[1], 0.25, 1e-15);
  EXPECT_NEAR(norm[2], 0.75, 1e-15);

  WordRelevance zero{{0.0, 0.0}};
  EXPECT_EQ(token_relevance(zero, al, true).scores, (std::vector<double>{0, 0, 0}));
}

SimilarityMatrix matrix(std::size_t k, const std::vector<double>& v) {
  return SimilarityMatrix{k, v};
}

TEST(Relevance, SequenceRelevanceHandExample) {
  // at(l, i) = S(s_l, s_i)
  const auto m = matrix(3, {1.0, 0.0, 0.0,  //
                            0.8, 1.0, 0.0,  //
                            0.5, 0.0, 1.0});
  const std::vector<double> lp = {std::log(0.3), std::log(0.1), std::log(0.2)};
  const auto r = sequence_relevance(m, lp);
  EXPECT_NEAR(r.value(0), 0.18, 1e-15);
  EXPECT_EQ(r.value(1), 0.0);
  EXPECT_EQ(r.log_scores[1], -INFINITY);
}

TEST(Relevance, SequenceRelevanceZeroAndIdentical) {
  const auto zero = sequence_relevance(matrix(2, {1, 0, 0, 1}), std::vector<double>{-1, -2});
  EXPECT_EQ(zero.values(), (std::vector<double>{0, 0}));

  QASample s;
  s.id = "k2";
  s.question = "q";
  s.references = {"r"};
  const auto a = testing::words_record({{"same", std::log(0.5)}, {"text", std::log(0.5)}});
  s.most_likely = a;
  s.responses = {a, a};
  auto prov = testing::lexical_provider();
  const auto r = sequence_relevance(s, *prov, ProbSource::kRaw);
  EXPECT_NEAR(r.value(0), 0.25, 1e-15);

  s.responses = {a};
  EXPECT_THROW(sequence_relevance(s, *prov, ProbSource::kRaw), DataError);
}

TEST(Relevance, CalibratedSourceUsesWordLevelUncertainty) {
  QASample s;
  s.id = "c";
  s.question = "q";
  s.references = {"r"};
  const auto a = testing::words_record({{"x", -3.0}});
  s.most_likely = a;
  s.responses = {a, a};
  auto prov = testing::lexical_provider();
  const std::vector<double> u = {0.5, 2.0};
  const auto r = sequence_relevance(s, *prov, ProbSource::kCalibrated, u);
  EXPECT_NEAR(r.value(0), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(r.value(1), std::exp(-0.5), 1e-15);
}

TEST(Relevance, SequenceRelevanceMonotoneInSimilarity) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int iter = 0; iter < 500; ++iter) {
    const std::size_t k = 2 + rng() % 6;
    SimilarityMatrix m{k, std::vector<double>(k * k, 1.0)};
    std::vector<double> lp(k);
    for (auto& x : lp) x = -20.0 * u(rng);
    for (std::size_t l = 0; l < k; ++l) {
      for (std::size_t i = 0; i < k; ++i) {
        if (l != i) m.at(l, i) = u(rng) < 0.2 ? 0.0 : u(rng);
      }
    }
    const auto before = sequence_relevance(m, lp).values();
    const std::size_t l = rng() % k;
    std::size_t i = rng() % k;
    if (i == l) i = (i + 1) % k;
    m.at(l, i) = std::min(1.0, m.at(l, i) + u(rng));
    const auto after = sequence_relevance(m, lp).values();
    for (std::size_t j = 0; j < k; ++j) ASSERT_GE(after[j], before[j]);
  }
}

TEST(Relevance, PairwiseSimilarityOrders) {
  std::vector<TextPair> seen;
  auto prov = fixed(0.5, 0.5, &seen);
  std::vector<GenerationRecord> rs = {testing::words_record({{"a", -1}}),
                                      testing::words_record({{"b", -1}}),
                                      testing::words_record({{"c", -1}})};
  const auto un = pairwise_similarity(rs, *prov, PairOrder::kUnordered);
  EXPECT_EQ(seen.size(), 3u);
  EXPECT_EQ(seen[0].a, "a");
  EXPECT_EQ(seen[0].b, "b");
  EXPECT_EQ(un.at(1, 0), 0.5);
  EXPECT_EQ(un.at(2, 2), 1.0);
  std::vector<TextPair> both;
  auto fresh = fixed(0.5, 0.5, &both);
  pairwise_similarity(rs, *fresh, PairOrder::kOrdered);
  EXPECT_EQ(both.size(), 6u);
}

TEST(Relevance, HistogramBins) {
  EXPECT_EQ(RelevanceHistogram::bin_of(0.0), 0u);
  EXPECT_EQ(RelevanceHistogram::bin_of(0.05), 0u);
  EXPECT_EQ(RelevanceHistogram::bin_of(0.1), 1u);
  EXPECT_EQ(RelevanceHistogram::bin_of(0.95), 9u);
  EXPECT_EQ(RelevanceHistogram::bin_of(1.0), 9u);
  EXPECT_EQ(RelevanceHistogram::bin_of(3.5), 9u);
  RelevanceHistogram h;
  h.add(0.95, 2.0);
  h.add(0.91, 4.0);
  EXPECT_EQ(h.bins()[9].count, 2u);
  EXPECT_EQ(h.bins()[9].mean(), 3.0);
  EXPECT_EQ(h.bins().size(), 10u);
}

TEST(Relevance, ProportionProfileExamples) {
  QASample s;
  s.id = "p";
  s.question = "q";
  s.references = {"r"};
  const auto a = testing::words_record({{"low", -1.0}, {"high", -3.0}});
  const auto b = testing::words_record({{"other", -2.0}, {"words", -2.0}});
  s.most_likely = a;
  s.responses = {a, b};
  std::vector<WordAlignment> al = {align_record(a), align_record(b)};
  std::vector<WordRelevance> wr = {WordRelevance{{0.95, 0.0}}, WordRelevance{{0.5, 0.5}}};
  const auto m = matrix(2, {1.0, 0.0, 0.0, 1.0});
  const auto p = proportion_profile(s, al, wr, sequence_relevance(m, std::vector<double>{-4, -4}));
  EXPECT_EQ(p.responses[0].word_proportion, (std::vector<double>{0.25, 0.75}));
  EXPECT_EQ(p.sequence_proportion, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(p.word.bins()[9].count, 1u);
  EXPECT_EQ(p.word.bins()[9].uncertainty_sum, 1.0);
  EXPECT_EQ(p.word.bins()[0].uncertainty_sum, 3.0);
  EXPECT_FALSE(p.zero_total_entropy);
  EXPECT_EQ(p.sequence.bins()[0].count, 2u);

  std::ostringstream csv;
  write_histogram_csv(csv, p);
  const std::string text = csv.str();
  EXPECT_EQ(text.rfind("level,bin_lo,bin_hi,count,uncertainty_sum,uncertainty_mean\n", 0), 0u);
  EXPECT_NE(text.find("word,0.9,1.0,1,1,1\n"), std::string::npos) << text;
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 41);
}

TEST(Relevance, ZeroEntropyIsFlaggedNotNaN) {
  QASample s;
  s.id = "z";
  s.question = "q";
  s.references = {"r"};
  const auto a = testing::words_record({{"sure", 0.0}, {"thing", 0.0}});
  s.most_likely = a;
  s.responses = {a, a};
  std::vector<WordAlignment> al = {align_record(a), align_record(a)};
  std::vector<WordRelevance> wr = {WordRelevance{{0.1, 0.1}}, WordRelevance{{0.1, 0.1}}};
  const auto p = proportion_profile(s, al, wr,
                                    sequence_relevance(matrix(2, {1, 1, 1, 1}), std::vector<double>{0, 0}));
  EXPECT_TRUE(p.zero_total_entropy);
  EXPECT_TRUE(p.responses[0].zero_entropy);
  EXPECT_EQ(p.responses[0].word_proportion, (std::vector<double>{0, 0}));
  EXPECT_EQ(p.sequence_proportion, (std::vector<double>{0, 0}));
}

}  // namespace
}  // namespace wse
