#pragma once

// Discrimination metrics for uncertainty scores, threshold and K sweeps, and
// the lowest-uncertainty resampling evaluation.
//
// Positives are INCORRECT generations: a good estimator ranks them higher.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wse/correctness.hpp"
#include "wse/estimators.hpp"
#include "wse/records.hpp"
#include "wse/similarity.hpp"

namespace wse {

// Mann-Whitney AUROC with half credit for ties. `incorrect[i]` marks positives.
// Throws UndefinedMetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const bool> incorrect);

struct DeepAurocResult {
  double value = 0.0;
  std::size_t groups = 0;
  std::vector<std::size_t> used_groups;
  std::vector<std::size_t> skipped_groups;  // single-class or empty
  std::vector<double> group_auroc;          // parallel to used_groups
};

// Mean AUROC over `n_groups` equal-size quantile groups of the score. This is
// an approximation of deep ROC analysis: groups of predicted risk, each
// evaluated where both classes are present.
DeepAurocResult deep_auroc_detail(std::span<const double> scores, std::span<const bool> incorrect,
                                  std::size_t n_groups);
double deep_auroc(std::span<const double> scores, std::span<const bool> incorrect,
                  std::size_t n_groups);

struct EvaluationRun {
  EstimatorId estimator = EstimatorId::kPredictiveEntropy;
  std::optional<double> auroc;
  std::optional<double> deep_auroc;
  std::size_t n_samples = 0;
  std::size_t n_positive = 0;
  std::size_t groups = 0;
  std::size_t groups_used = 0;
};

EvaluationRun evaluate_estimator(EstimatorId estimator, std::span<const double> scores,
                                 std::span<const bool> incorrect, std::size_t deep_groups);

enum class SweepCriterion { kRs, kSs, kEither };

std::string to_string(SweepCriterion c);
SweepCriterion sweep_criterion_from_string(const std::string& s);

struct SweepRow {
  EstimatorId estimator = EstimatorId::kPredictiveEntropy;
  std::string axis;  // "threshold" or "k"
  double value = 0.0;
  std::optional<double> auroc;  // nullopt: undefined (one class only)
};

// Per estimator, scores aligned with `labels` (same sample order).
struct EstimatorColumn {
  EstimatorId estimator;
  std::vector<double> scores;
};

// Relabels from the stored RS/SS values at each threshold.
std::vector<SweepRow> threshold_sweep(std::span<const EstimatorColumn> columns,
                                      std::span<const CorrectnessLabel> labels,
                                      std::span<const double> thresholds,
                                      SweepCriterion criterion);

// Rescores every sample using only its first K responses. `labels` are aligned
// with `dataset.samples`.
std::vector<SweepRow> k_sweep(const DatasetManifest& dataset, SimilarityProvider& provider,
                              const EstimatorConfig& cfg, std::span<const EstimatorId> estimators,
                              std::span<const CorrectnessLabel> labels,
                              std::span<const std::size_t> ks);

// First `k` responses of a sample.
QASample truncate_responses(const QASample& sample, std::size_t k);

struct ResampleReport {
  EstimatorId estimator = EstimatorId::kPredictiveEntropy;
  std::size_t n_samples = 0;
  double initial_accuracy = 0.0;
  double calibrated_accuracy = 0.0;
  double delta = 0.0;
  std::vector<std::size_t> chosen;  // argmin response per sample
};

// Index of the smallest value; ties go to the lower index.
std::size_t argmin_response(std::span<const double> per_sequence);

// `scores` must hold one entry per dataset sample (matched by id) with
// per-sequence uncertainties.
ResampleReport resample_accuracy(const DatasetManifest& dataset,
                                 std::span<const EstimatorScore> scores,
                                 SimilarityProvider& provider, const CorrectnessConfig& cfg);

}  // namespace wse
