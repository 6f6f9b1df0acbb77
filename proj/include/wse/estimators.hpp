#pragma once

// Uncertainty estimators over a set of sampled responses. Every score is
// oriented so that higher means more uncertain. Scores of the consensus-based
// estimators (WSE_S, WSE_C, Sent-SAR, SAR) can be negative; only their
// ordering is meaningful.
//
// SE, LS and the SAR family are approximations of the published baselines and
// are labelled as such in reports.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wse/records.hpp"
#include "wse/relevance.hpp"
#include "wse/similarity.hpp"

namespace wse {

enum class EstimatorId {
  kPredictiveEntropy,
  kLexicalSimilarity,
  kSemanticEntropy,
  kTokenSar,
  kSentSar,
  kSar,
  kWseWord,
  kWseSequence,
  kWseCombined,
};

// Short ids used on the command line and in output files: pe, ls, se,
// token_sar, sent_sar, sar, wse_w, wse_s, wse_c.
std::string to_string(EstimatorId id);
EstimatorId estimator_from_string(const std::string& s);
std::span<const EstimatorId> all_estimators();
bool is_baseline_approximation(EstimatorId id);

struct EstimatorScore {
  EstimatorId estimator = EstimatorId::kPredictiveEntropy;
  std::string sample_id;
  double score = 0.0;
  std::optional<std::vector<double>> per_sequence;
};

struct WseConfig {
  double d = 0.001;
  bool normalize_word_relevance = false;
  bool length_normalize_pe = false;

  void validate() const;
};

struct BaselineConfig {
  double entail_threshold = 0.5;  // SE clustering, both directions
  double t_sar = 0.001;

  void validate() const;
};

struct EstimatorConfig {
  WseConfig wse;
  BaselineConfig baseline;
  RelevanceOptions relevance;
};

// E_T per token: -log p.
std::vector<double> token_entropies(const GenerationRecord& record);

EstimatorScore predictive_entropy(const QASample& sample, const WseConfig& cfg = {});

EstimatorScore wse_word(const QASample& sample, std::span<const TokenRelevance> relevance,
                        const WseConfig& cfg = {});

// `relevance` must be built from raw sequence probabilities.
EstimatorScore wse_sequence(const QASample& sample, const SequenceRelevance& relevance,
                            const WseConfig& cfg = {});

EstimatorScore wse_combined(const QASample& sample, std::span<const TokenRelevance> relevance,
                            const SimilarityMatrix& sims, const WseConfig& cfg = {});
EstimatorScore wse_combined(const QASample& sample, std::span<const TokenRelevance> relevance,
                            SimilarityProvider& provider, const WseConfig& cfg = {});

// `sims` must hold both directions (PairOrder::kOrdered).
EstimatorScore semantic_entropy(const QASample& sample, const SimilarityMatrix& sims,
                                double entail_threshold = 0.5);
EstimatorScore semantic_entropy(const QASample& sample, SimilarityProvider& provider,
                                double entail_threshold = 0.5);

EstimatorScore lexical_similarity(const QASample& sample, const SimilarityMatrix& sims);
EstimatorScore lexical_similarity(const QASample& sample, SimilarityProvider& provider);

// Raw per-token relevance 1 - S(text, text without the token).
std::vector<double> token_sar_relevance(const GenerationRecord& record,
                                        SimilarityProvider& provider);

struct SarScores {
  EstimatorScore token_sar;
  EstimatorScore sent_sar;
  EstimatorScore sar;
};

SarScores sar_family(const QASample& sample, std::span<const std::vector<double>> token_relevance,
                     const SimilarityMatrix& sims, double t_sar = 0.001);
SarScores sar_family(const QASample& sample, SimilarityProvider& provider, double t_sar = 0.001);

// -log(p_i + sum_{l != i} S(s_l, s_i) p_l / d) per response, from log p.
std::vector<double> consensus_uncertainty(std::span<const double> log_probs,
                                          const SimilarityMatrix& sims, double d);

// Scores one sample with the requested estimators, in the order given.
// Shared intermediates (alignments, relevance, similarity matrices) are
// computed at most once.
std::vector<EstimatorScore> score_sample(const QASample& sample, SimilarityProvider& provider,
                                         const EstimatorConfig& cfg,
                                         std::span<const EstimatorId> estimators);

}  // namespace wse
