#include "wse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <unordered_map>

#include "wse/errors.hpp"

namespace wse {

namespace {

void check_inputs(std::span<const double> scores, std::span<const bool> incorrect) {
  if (scores.size() != incorrect.size()) {
    throw DataError("metric: " + std::to_string(scores.size()) + " scores but " +
                        std::to_string(incorrect.size()) + " labels",
                    "data.precondition");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw DataError("metric: non-finite score", "data.precondition");
  }
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return idx;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const bool> incorrect) {
  check_inputs(scores, incorrect);
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(incorrect.begin(), incorrect.end(), true));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("AUROC undefined: " + std::to_string(n_pos) + " incorrect, " +
                               std::to_string(n_neg) + " correct");
  }
  const auto idx = order_by_score(scores);
  // Average ranks are multiples of 0.5, so the rank sum is exact.
  double pos_rank_sum = 0.0;
  std::size_t lo = 0;
  while (lo < n) {
    std::size_t hi = lo;
    while (hi + 1 < n && scores[idx[hi + 1]] == scores[idx[lo]]) ++hi;
    const double rank = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      if (incorrect[idx[k]]) pos_rank_sum += rank;
    }
    lo = hi + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

DeepAurocResult deep_auroc_detail(std::span<const double> scores, std::span<const bool> incorrect,
                                  std::size_t n_groups) {
  check_inputs(scores, incorrect);
  if (n_groups == 0) throw ConfigError("deep AUROC needs at least one group");
  const std::size_t n = scores.size();
  const auto idx = order_by_score(scores);

  DeepAurocResult out;
  out.groups = n_groups;
  double sum = 0.0;
  for (std::size_t g = 0; g < n_groups; ++g) {
    const std::size_t lo = g * n / n_groups;
    const std::size_t hi = (g + 1) * n / n_groups;
    const std::size_t size = hi - lo;
    std::vector<double> gs(size);
    std::unique_ptr<bool[]> gl(new bool[size]);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < size; ++k) {
      gs[k] = scores[idx[lo + k]];
      gl[k] = incorrect[idx[lo + k]];
      pos += gl[k] ? 1 : 0;
    }
    if (pos == 0 || pos == size) {
      out.skipped_groups.push_back(g);
      continue;
    }
    const double a = auroc(gs, std::span<const bool>(gl.get(), size));
    out.used_groups.push_back(g);
    out.group_auroc.push_back(a);
    sum += a;
  }
  if (out.used_groups.empty()) {
    std::string skipped;
    for (std::size_t g : out.skipped_groups) {
      if (!skipped.empty()) skipped += ",";
      skipped += std::to_string(g);
    }
    throw UndefinedMetricError("deep AUROC undefined: every group is single-class (skipped " +
                               skipped + ")");
  }
  out.value = sum / static_cast<double>(out.used_groups.size());
  return out;
}

double deep_auroc(std::span<const double> scores, std::span<const bool> incorrect,
                  std::size_t n_groups) {
  return deep_auroc_detail(scores, incorrect, n_groups).value;
}

EvaluationRun evaluate_estimator(EstimatorId estimator, std::span<const double> scores,
                                 std::span<const bool> incorrect, std::size_t deep_groups) {
  EvaluationRun run;
  run.estimator = estimator;
  run.n_samples = scores.size();
  run.n_positive = static_cast<std::size_t>(std::count(incorrect.begin(), incorrect.end(), true));
  run.groups = deep_groups;
  try {
    run.auroc = auroc(scores, incorrect);
  } catch (const UndefinedMetricError&) {
  }
  try {
    const auto d = deep_auroc_detail(scores, incorrect, deep_groups);
    run.deep_auroc = d.value;
    run.groups_used = d.used_groups.size();
  } catch (const UndefinedMetricError&) {
  }
  return run;
}

std::string to_string(SweepCriterion c) {
  switch (c) {
    case SweepCriterion::kRs:
      return "rs";
    case SweepCriterion::kSs:
      return "ss";
    case SweepCriterion::kEither:
      return "either";
  }
  return "unknown";
}

SweepCriterion sweep_criterion_from_string(const std::string& s) {
  if (s == "rs") return SweepCriterion::kRs;
  if (s == "ss") return SweepCriterion::kSs;
  if (s == "either") return SweepCriterion::kEither;
  throw ConfigError("unknown sweep criterion '" + s + "' (expected rs, ss or either)");
}

std::vector<SweepRow> threshold_sweep(std::span<const EstimatorColumn> columns,
                                      std::span<const CorrectnessLabel> labels,
                                      std::span<const double> thresholds,
                                      SweepCriterion criterion) {
  std::vector<SweepRow> rows;
  for (const auto& col : columns) {
    if (col.scores.size() != labels.size()) {
      throw DataError("threshold sweep: " + to_string(col.estimator) + " has " +
                          std::to_string(col.scores.size()) + " scores for " +
                          std::to_string(labels.size()) + " labels",
                      "data.precondition");
    }
    for (double t : thresholds) {
      std::unique_ptr<bool[]> incorrect(new bool[labels.size()]);
      for (std::size_t s = 0; s < labels.size(); ++s) {
        const bool rs_ok = labels[s].rs > t;
        const bool ss_ok = labels[s].ss > t;
        const bool ok = criterion == SweepCriterion::kRs   ? rs_ok
                        : criterion == SweepCriterion::kSs ? ss_ok
                                                           : (rs_ok || ss_ok);
        incorrect[s] = !ok;
      }
      SweepRow row{col.estimator, "threshold", t, std::nullopt};
      try {
        row.auroc = auroc(col.scores, std::span<const bool>(incorrect.get(), labels.size()));
      } catch (const UndefinedMetricError&) {
      }
      rows.push_back(row);
    }
  }
  return rows;
}

QASample truncate_responses(const QASample& sample, std::size_t k) {
  if (k > sample.k()) {
    throw DataError("sample '" + sample.id + "' has " + std::to_string(sample.k()) +
                        " responses, sweep needs " + std::to_string(k),
                    "data.precondition");
  }
  QASample out = sample;
  out.responses.resize(k);
  return out;
}

std::vector<SweepRow> k_sweep(const DatasetManifest& dataset, SimilarityProvider& provider,
                              const EstimatorConfig& cfg, std::span<const EstimatorId> estimators,
                              std::span<const CorrectnessLabel> labels,
                              std::span<const std::size_t> ks) {
  if (labels.size() != dataset.samples.size()) {
    throw DataError("K sweep: labels do not cover the dataset", "data.precondition");
  }
  std::unique_ptr<bool[]> incorrect(new bool[labels.size()]);
  for (std::size_t s = 0; s < labels.size(); ++s) incorrect[s] = !labels[s].correct;
  const std::span<const bool> inc(incorrect.get(), labels.size());

  std::vector<SweepRow> rows;
  std::vector<std::vector<std::vector<double>>> by_k;  // [k][estimator][sample]
  for (std::size_t k : ks) {
    std::vector<std::vector<double>> cols(estimators.size());
    for (const auto& sample : dataset.samples) {
      const auto scores = score_sample(truncate_responses(sample, k), provider, cfg, estimators);
      for (std::size_t e = 0; e < estimators.size(); ++e) cols[e].push_back(scores[e].score);
    }
    by_k.push_back(std::move(cols));
  }
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      SweepRow row{estimators[e], "k", static_cast<double>(ks[ki]), std::nullopt};
      try {
        row.auroc = auroc(by_k[ki][e], inc);
      } catch (const UndefinedMetricError&) {
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::size_t argmin_response(std::span<const double> per_sequence) {
  if (per_sequence.empty()) throw DataError("argmin over zero responses", "data.precondition");
  std::size_t best = 0;
  for (std::size_t i = 1; i < per_sequence.size(); ++i) {
    if (per_sequence[i] < per_sequence[best]) best = i;
  }
  return best;
}

ResampleReport resample_accuracy(const DatasetManifest& dataset,
                                 std::span<const EstimatorScore> scores,
                                 SimilarityProvider& provider, const CorrectnessConfig& cfg) {
  if (dataset.samples.empty()) throw DataError("resample: empty dataset", "data.precondition");
  if (scores.empty()) throw DataError("resample: no estimator scores", "data.precondition");
  std::unordered_map<std::string, const EstimatorScore*> by_id;
  for (const auto& s : scores) by_id[s.sample_id] = &s;

  ResampleReport rep;
  rep.estimator = scores.front().estimator;
  rep.n_samples = dataset.samples.size();
  std::size_t initial = 0;
  std::size_t calibrated = 0;
  for (const auto& sample : dataset.samples) {
    auto it = by_id.find(sample.id);
    if (it == by_id.end()) {
      throw DataError("resample: no " + to_string(rep.estimator) + " score for sample '" +
                          sample.id + "'",
                      "data.precondition");
    }
    const EstimatorScore& sc = *it->second;
    if (!sc.per_sequence) {
      throw DataError("resample: estimator " + to_string(sc.estimator) +
                          " exports no per-sequence uncertainties",
                      "data.missing_per_sequence");
    }
    if (sc.per_sequence->size() != sample.k()) {
      throw DataError("resample: per-sequence length mismatch for sample '" + sample.id + "'",
                      "data.precondition");
    }
    const std::size_t pick = argmin_response(*sc.per_sequence);
    rep.chosen.push_back(pick);
    if (label(sample, provider, cfg).correct) ++initial;
    if (label_text(sample.id, sample.responses[pick].text, sample.references, provider, cfg)
            .correct) {
      ++calibrated;
    }
  }
  const double n = static_cast<double>(rep.n_samples);
  rep.initial_accuracy = static_cast<double>(initial) / n;
  rep.calibrated_accuracy = static_cast<double>(calibrated) / n;
  rep.delta = rep.calibrated_accuracy - rep.initial_accuracy;
  return rep;
}

}  // namespace wse
