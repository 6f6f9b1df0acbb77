#include <cstdlib>

#include <gtest/gtest.h>

#include "wse/config.hpp"
#include "wse/errors.hpp"
#include "wse/pipeline.hpp"
#include "wse_testing.hpp"

namespace wse {
namespace {

std::string config_code(const std::string& yaml) {
  try {
    parse_run_config(yaml, "/base").validate();
  } catch (const ConfigError& e) {
    return e.code();
  }
  return "";
}

TEST(Config, Defaults) {
  const auto cfg = parse_run_config("", "/base");
  EXPECT_EQ(cfg.similarity.kind, ProviderKind::kLexical);
  EXPECT_EQ(cfg.estimator.wse.d, 0.001);
  EXPECT_EQ(cfg.estimator.baseline.entail_threshold, 0.5);
  EXPECT_EQ(cfg.estimator.baseline.t_sar, 0.001);
  EXPECT_EQ(cfg.correctness.rs_threshold, 0.5);
  EXPECT_EQ(cfg.metrics.deep_auroc_groups, 3u);
  EXPECT_EQ(cfg.estimators.size(), all_estimators().size());
  EXPECT_FALSE(cfg.estimator.relevance.include_context);
  EXPECT_EQ(cfg.scores_file(), std::filesystem::path("wse-out") / "scores.jsonl");
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, ParsesAndResolvesPaths) {
  const auto cfg = parse_run_config(R"(
dataset: data/x.jsonl
output_dir: /abs/out
estimators: [pe, wse_c]
similarity: {provider: cache, cache_path: c.jsonl, cache_source: remote, model_id: m1}
wse: {d: 0.01}
metrics: {deep_auroc_groups: 2, sweep: {thresholds: [0.4], criterion: ss, k_values: [3]}}
jobs: 4
)",
                                    "/base");
  EXPECT_EQ(cfg.dataset, std::filesystem::path("/base/data/x.jsonl"));
  EXPECT_EQ(cfg.output_dir, std::filesystem::path("/abs/out"));
  EXPECT_EQ(cfg.estimators, (std::vector{EstimatorId::kPredictiveEntropy, EstimatorId::kWseCombined}));
  EXPECT_EQ(cfg.similarity.kind, ProviderKind::kCache);
  EXPECT_EQ(*cfg.similarity.cache_path, std::filesystem::path("/base/c.jsonl"));
  EXPECT_EQ(cfg.estimator.wse.d, 0.01);
  EXPECT_EQ(cfg.metrics.sweep.criterion, SweepCriterion::kSs);
  EXPECT_EQ(cfg.metrics.sweep.k_values, (std::vector<std::size_t>{3}));
  EXPECT_EQ(cfg.jobs, 4u);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_EQ(config_code("bogus: 1"), "config.unknown_key");
  EXPECT_EQ(config_code("wse: {dd: 1}"), "config.unknown_key");
  EXPECT_EQ(config_code("metrics: {sweep: {thresh: [1]}}"), "config.unknown_key");
  EXPECT_EQ(config_code("key: [unclosed"), "config.parse");
  EXPECT_NE(config_code("wse: {d: 0}"), "");
  EXPECT_NE(config_code("jobs: 0"), "");
  EXPECT_NE(config_code("estimators: []"), "");
  EXPECT_NE(config_code("estimators: [foo]"), "");
  EXPECT_NE(config_code("metrics: {sweep: {thresholds: [1.5]}}"), "");
  EXPECT_NE(config_code("similarity: {provider: remote}"), "");
  EXPECT_NE(config_code("wse: {d: abc}"), "");
}

TEST(Config, CacheDirFromEnvironment) {
  auto cfg = parse_run_config("", "/base");
  ::setenv("WSE_CACHE_DIR", "/tmp/wse-cache-env", 1);
  apply_environment(cfg);
  ::unsetenv("WSE_CACHE_DIR");
  EXPECT_EQ(*cfg.similarity.cache_path,
            std::filesystem::path("/tmp/wse-cache-env/similarity-cache.jsonl"));
}

TEST(Config, FingerprintIgnoresTransport) {
  auto a = parse_run_config("", "/base");
  auto b = a;
  b.similarity.endpoint = "http://elsewhere:1";
  b.similarity.cache_path = "/x/y.jsonl";
  b.jobs = 8;
  b.output_dir = "/other";
  EXPECT_EQ(config_fingerprint(a, "abc"), config_fingerprint(b, "abc"));
  EXPECT_EQ(config_fingerprint(a, "abc").size(), 16u);
  EXPECT_NE(config_fingerprint(a, "abc"), config_fingerprint(a, "abd"));
  b.estimator.wse.d = 0.01;
  EXPECT_NE(config_fingerprint(a, "abc"), config_fingerprint(b, "abc"));
}

TEST(Config, CacheModeSharesRemoteFingerprint) {
  auto remote = parse_run_config("similarity: {provider: remote, endpoint: 'http://h:1', model_id: m}",
                                 "/base");
  auto cache = parse_run_config("similarity: {provider: cache, cache_path: c.jsonl, model_id: m}",
                                "/base");
  EXPECT_EQ(canonical_settings(remote), canonical_settings(cache));
}

TEST(Config, GoldenConfigLoads) {
  const auto cfg = load_run_config(testing::fixture("golden.yaml"));
  EXPECT_EQ(cfg.dataset.filename(), "golden.jsonl");
  EXPECT_EQ(cfg.metrics.sweep.k_values, (std::vector<std::size_t>{2, 3, 4, 5}));
  EXPECT_NO_THROW(cfg.validate());
}

}  // namespace
}  // namespace wse
