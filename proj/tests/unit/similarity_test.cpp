#include <thread>

#include <gtest/gtest.h>

#include "wse/errors.hpp"
#include "wse/similarity.hpp"
#include "wse_testing.hpp"

namespace wse {
namespace {

using testing::FunctionBackend;

std::shared_ptr<FunctionBackend> asymmetric_backend(const std::string& id = "stub") {
  // Depends on direction so that swapped pairs are distinguishable.
  return std::make_shared<FunctionBackend>(
      [](const TextPair& p) {
        const double x =
            static_cast<double>(p.a.size()) / static_cast<double>(p.a.size() + p.b.size());
        return SimilarityResult::from(x, 1.0 - x);
      },
      id);
}

TEST(Similarity, LexicalExamples) {
  auto prov = testing::lexical_provider();
  const auto same = prov->score_pair("mask use reduces spread", "mask use reduces spread");
  EXPECT_EQ(same, SimilarityResult::from(1.0, 1.0));
  const auto r = prov->score_pair("alpha beta gamma", "alpha beta");
  EXPECT_DOUBLE_EQ(r.s_c, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.s_l, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.min_sim, 2.0 / 3.0);
  EXPECT_EQ(prov->score_pair("Alpha, beta.", "beta alpha"), SimilarityResult::from(1, 1));
  EXPECT_EQ(jaccard_similarity("...", "!!"), 1.0);
  EXPECT_EQ(jaccard_similarity("a", "..."), 0.0);
}

TEST(Similarity, LexicalIsSymmetric) {
  auto prov = testing::lexical_provider();
  const std::vector<std::string> t = {"a b c", "b c d e", "x", "A a b", "the cat sat"};
  for (const auto& a : t) {
    for (const auto& b : t) EXPECT_EQ(prov->score_pair(a, b), prov->score_pair(b, a));
  }
}

TEST(Similarity, MinRule) {
  const auto r = SimilarityResult::from(0.9, 0.6);
  EXPECT_EQ(r.min_sim, 0.6);
  EXPECT_LE(r.min_sim, r.s_c);
  EXPECT_LE(r.min_sim, r.s_l);
}

TEST(Similarity, BatchSendsOnlyMisses) {
  auto backend = asymmetric_backend();
  SimilarityProvider prov(ProviderConfig{}, backend);
  prov.score_pair("a", "b");
  prov.score_pair("c", "d");
  EXPECT_EQ(prov.pairs_sent(), 2u);
  const std::vector<TextPair> batch = {{"a", "b"}, {"c", "d"}, {"e", "f"}};
  const auto out = prov.score_batch(batch);
  EXPECT_EQ(prov.pairs_sent(), 3u);
  EXPECT_EQ(prov.backend_calls(), 3u);
  EXPECT_EQ(out[2], backend->score(std::span(&batch[2], 1), 1.0)[0]);

  prov.score_batch(batch);
  EXPECT_EQ(prov.backend_calls(), 3u);  // all cached
}

TEST(Similarity, DuplicatesScoredOnce) {
  auto backend = asymmetric_backend();
  SimilarityProvider prov(ProviderConfig{}, backend);
  const std::vector<TextPair> batch = {{"aa", "b"}, {"b", "aa"}, {"aa", "b"}};
  const auto out = prov.score_batch(batch);
  EXPECT_EQ(prov.pairs_sent(), 2u);
  EXPECT_EQ(out[0], out[2]);
  EXPECT_NE(out[0], out[1]);
}

TEST(Similarity, MaxBatchSplitsCalls) {
  ProviderConfig cfg;
  cfg.max_batch = 2;
  auto backend = asymmetric_backend();
  SimilarityProvider prov(cfg, backend);
  std::vector<TextPair> batch;
  for (int i = 0; i < 5; ++i) batch.push_back({"a" + std::to_string(i), "b"});
  prov.score_batch(batch);
  EXPECT_EQ(prov.backend_calls(), 3u);
}

TEST(Similarity, CacheKeyIsDirectionalAndSeparated) {
  const auto k1 = similarity_cache_key("remote", "m", 1.0, "a", "b");
  EXPECT_NE(k1, similarity_cache_key("remote", "m", 1.0, "b", "a"));
  EXPECT_NE(k1, similarity_cache_key("remote", "m", 2.0, "a", "b"));
  EXPECT_NE(k1, similarity_cache_key("lexical", "m", 1.0, "a", "b"));
  EXPECT_NE(similarity_cache_key("p", "m", 1.0, "ab", "c"),
            similarity_cache_key("p", "m", 1.0, "a", "bc"));
  EXPECT_EQ(k1.size(), 64u);
}

TEST(Similarity, PersistentCacheIsTransparent) {
  const auto dir = testing::scratch_dir("cache");
  ProviderConfig cfg;
  cfg.cache_path = dir / "c.jsonl";
  std::vector<SimilarityResult> first;
  const std::vector<TextPair> batch = {{"x y", "y"}, {"first", "second one"}};
  {
    SimilarityProvider prov(cfg, asymmetric_backend());
    first = prov.score_batch(batch);
  }
  // A cache-only provider reading the same file, attributed to the same id.
  ProviderConfig cached = cfg;
  cached.kind = ProviderKind::kCache;
  cached.model_id = "stub-model";
  auto backend = asymmetric_backend();
  SimilarityProvider again(cfg, backend);
  EXPECT_EQ(again.score_batch(batch), first);
  EXPECT_EQ(backend->calls, 0u);

  // Unknown provider id: cache-only misses.
  SimilarityProvider cache_only(cached, nullptr);
  try {
    cache_only.score_batch(batch);
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.code(), "provider.cache_miss");
  }
}

TEST(Similarity, CacheOnlyServesRemoteEntries) {
  const auto dir = testing::scratch_dir("cache-remote");
  ProviderConfig cfg;
  cfg.cache_path = dir / "c.jsonl";
  const std::vector<TextPair> batch = {{"p q", "q"}};
  std::vector<SimilarityResult> first;
  {
    SimilarityProvider prov(cfg, asymmetric_backend("remote"));
    first = prov.score_batch(batch);
  }
  ProviderConfig cached = cfg;
  cached.kind = ProviderKind::kCache;
  cached.model_id = "stub-model";
  SimilarityProvider cache_only(cached, nullptr);
  EXPECT_EQ(cache_only.score_batch(batch), first);
}

TEST(Similarity, TruncatedTailDroppedAndRepaired) {
  const auto dir = testing::scratch_dir("cache-trunc");
  const auto path = dir / "c.jsonl";
  ProviderConfig cfg;
  cfg.cache_path = path;
  {
    SimilarityProvider prov(cfg, asymmetric_backend());
    prov.score_batch(std::vector<TextPair>{{"a", "b"}, {"c", "d"}});
  }
  auto data = testing::read_file(path);
  const auto cut = data.rfind('\n', data.size() - 2);
  testing::write_file(path, data.substr(0, cut + 20));  // half of the second line

  SimilarityCache cache(path);
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_EQ(cache.dropped_lines(), 1u);
  {
    auto backend = asymmetric_backend();
    SimilarityProvider prov(cfg, backend);
    prov.score_batch(std::vector<TextPair>{{"a", "b"}, {"c", "d"}});
    EXPECT_EQ(backend->calls, 1u);
  }
  SimilarityCache repaired(path);
  EXPECT_EQ(repaired.size(), 2u);
  EXPECT_EQ(repaired.dropped_lines(), 0u);
}

TEST(Similarity, CorruptMiddleLineIsError) {
  const auto dir = testing::scratch_dir("cache-corrupt");
  const auto path = dir / "c.jsonl";
  ProviderConfig cfg;
  cfg.cache_path = path;
  {
    SimilarityProvider prov(cfg, asymmetric_backend());
    prov.score_batch(std::vector<TextPair>{{"a", "b"}, {"c", "d"}});
  }
  testing::write_file(path, "{not json\n" + testing::read_file(path));
  try {
    SimilarityCache cache(path);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), "data.cache");
  }
}

TEST(Similarity, FailedBatchWritesNothing) {
  const auto dir = testing::scratch_dir("cache-atomic");
  ProviderConfig cfg;
  cfg.cache_path = dir / "c.jsonl";
  cfg.max_batch = 1;
  int seen = 0;
  auto backend = std::make_shared<FunctionBackend>([&](const TextPair&) {
    if (++seen == 2) throw TransportError("down");
    return SimilarityResult::from(0.5, 0.5);
  });
  SimilarityProvider prov(cfg, backend);
  EXPECT_THROW(prov.score_batch(std::vector<TextPair>{{"a", "b"}, {"c", "d"}}), TransportError);
  EXPECT_FALSE(std::filesystem::exists(*cfg.cache_path) &&
               std::filesystem::file_size(*cfg.cache_path) > 0);
  // Nothing was cached in memory either: both pairs are sent again.
  prov.score_batch(std::vector<TextPair>{{"a", "b"}, {"c", "d"}});
  EXPECT_EQ(prov.pairs_sent(), 4u);
}

TEST(Similarity, SymmetrizeAveragesDirections) {
  ProviderConfig cfg;
  cfg.symmetrize = true;
  SimilarityProvider prov(cfg, asymmetric_backend());
  const auto r = prov.score_pair("aaa", "b");
  EXPECT_DOUBLE_EQ(r.s_c, 0.5);
  EXPECT_DOUBLE_EQ(r.s_l, 0.5);
  EXPECT_EQ(prov.score_pair("b", "aaa"), r);
}

TEST(Similarity, EmptyTextRejected) {
  auto prov = testing::lexical_provider();
  EXPECT_THROW(prov->score_pair("", "a"), ProviderError);
}

TEST(Similarity, ConfigValidation) {
  ProviderConfig cfg;
  cfg.c = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.kind = ProviderKind::kRemote;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.kind = ProviderKind::kCache;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(provider_kind_from_string("remote"), ProviderKind::kRemote);
  EXPECT_THROW(provider_kind_from_string("nli"), ConfigError);
}

TEST(Similarity, ConcurrentScoringAgrees) {
  const auto dir = testing::scratch_dir("cache-threads");
  ProviderConfig cfg;
  cfg.cache_path = dir / "c.jsonl";
  SimilarityProvider prov(cfg, std::make_shared<LexicalBackend>());
  std::vector<std::thread> threads;
  std::vector<std::vector<SimilarityResult>> results(8);
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      std::vector<TextPair> batch;
      for (int i = 0; i < 50; ++i) batch.push_back({"w" + std::to_string(i) + " x", "x"});
      results[t] = prov.score_batch(batch);
    });
  }
  for (auto& th : threads) th.join();
  for (int t = 1; t < 8; ++t) EXPECT_EQ(results[t], results[0]);
  SimilarityCache reloaded(*cfg.cache_path);
  EXPECT_EQ(reloaded.size(), 50u);
}

}  // namespace
}  // namespace wse
