#pragma once

// Dataset-level orchestration behind the `wse` command line: scoring,
// labelling, evaluation, analysis, resampling and sweeps, plus the artifact
// file formats. Every artifact carries the run fingerprint and rows are
// ordered by sample id.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "wse/config.hpp"
#include "wse/correctness.hpp"
#include "wse/estimators.hpp"
#include "wse/records.hpp"
#include "wse/similarity.hpp"

namespace wse {

// WSE_CACHE_DIR, when set and non-empty, moves the similarity cache to
// $WSE_CACHE_DIR/similarity-cache.jsonl.
void apply_environment(RunConfig& cfg);

struct ScoreTable {
  std::string fingerprint;
  std::vector<EstimatorId> estimators;
  // Sample-major: rows[s * estimators.size() + e], samples sorted by id.
  std::vector<EstimatorScore> rows;

  std::vector<EstimatorScore> column(EstimatorId id) const;
};

struct LabelTable {
  std::string fingerprint;
  std::vector<CorrectnessLabel> labels;  // sorted by sample id
};

// Runs `fn(i)` for i in [0, n) on up to `jobs` threads. The first exception
// thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

// Indices of `dataset.samples` in sample-id order.
std::vector<std::size_t> id_order(const DatasetManifest& dataset);

ScoreTable score_dataset(const DatasetManifest& dataset, SimilarityProvider& provider,
                         const RunConfig& cfg, const std::string& fingerprint);
LabelTable label_dataset(const DatasetManifest& dataset, SimilarityProvider& provider,
                         const RunConfig& cfg, const std::string& fingerprint);

void write_scores(std::ostream& out, const ScoreTable& table);
ScoreTable read_scores(const std::filesystem::path& path);
void write_labels(std::ostream& out, const LabelTable& table);
LabelTable read_labels(const std::filesystem::path& path);

// printf-style "%.17g"; NaN and infinities are never written.
std::string format_double(double v);

// Subcommands: validate, score, label, evaluate, analyze, resample, sweep.
// Returns the process exit code; a JSON error record goes to `err`.
int run_command(const std::string& command, const RunConfig& cfg, std::ostream& out,
                std::ostream& err);

}  // namespace wse
