#pragma once

// Run configuration. Loaded from a YAML file; every hyperparameter has a
// default and the CLI flags override individual fields.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wse/correctness.hpp"
#include "wse/estimators.hpp"
#include "wse/metrics.hpp"
#include "wse/similarity.hpp"

namespace wse {

struct SweepOptions {
  std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  SweepCriterion criterion = SweepCriterion::kRs;
  std::vector<std::size_t> k_values = {2, 3, 4, 5};
};

struct MetricOptions {
  std::size_t deep_auroc_groups = 3;
  SweepOptions sweep;
};

// Generation settings of the upstream sampler. Recorded in artifacts, never
// applied here.
struct GenerationFacts {
  std::size_t k = 5;
  std::size_t max_length = 128;
  double temperature = 0.5;
  std::string most_likely = "greedy";
};

struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path output_dir = "wse-out";
  std::optional<std::filesystem::path> scores_path;  // defaults to <out>/scores.jsonl
  std::optional<std::filesystem::path> labels_path;  // defaults to <out>/labels.jsonl
  std::vector<EstimatorId> estimators{all_estimators().begin(), all_estimators().end()};
  ProviderConfig similarity;
  EstimatorConfig estimator;
  CorrectnessConfig correctness;
  MetricOptions metrics;
  GenerationFacts generation;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;  // reserved; every stage is deterministic

  void validate() const;
  std::filesystem::path scores_file() const;
  std::filesystem::path labels_file() const;
};

// Throws ConfigError on unknown keys or bad values. Relative paths resolve
// against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& yaml_text, const std::filesystem::path& base_dir);

// Canonical JSON of every setting that can change an artifact. Transport
// details (endpoint, cache location, jobs, output paths) are excluded.
std::string canonical_settings(const RunConfig& cfg);

// 16 hex chars identifying (settings, dataset bytes).
std::string config_fingerprint(const RunConfig& cfg, const std::string& dataset_digest);

}  // namespace wse
