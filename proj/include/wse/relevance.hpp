#pragma once

// Semantic relevance at word, token and sequence level, plus the
// uncertainty-proportion analytics that relate relevance to entropy.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wse/records.hpp"
#include "wse/segmentation.hpp"
#include "wse/similarity.hpp"

namespace wse {

struct RelevanceOptions {
  // Prefix the question with the sample context when building ablation pairs.
  bool include_context = false;
};

// Text with one word spliced out. `restore()` re-inserts `removed` at `at`.
struct Ablation {
  std::string text;
  std::size_t at = 0;
  std::string removed;

  std::string restore() const;
};

// Removes the word plus one adjacent whitespace run (the following run if the
// word is directly followed by whitespace, otherwise the preceding run).
Ablation remove_span(std::string_view text, Span word);

// The prompt side of an ablation pair: question, optionally with context.
std::string prompt_prefix(const QASample& sample, const RelevanceOptions& options);

struct WordRelevance {
  std::vector<double> scores;  // R_W per word, each in [0,1]

  // Scores divided by their sum; all zeros when the sum is 0.
  std::vector<double> normalized() const;
};

struct TokenRelevance {
  std::vector<double> scores;  // R_T per token
};

WordRelevance word_relevance(const QASample& sample, std::size_t response,
                             const WordAlignment& alignment, SimilarityProvider& provider,
                             const RelevanceOptions& options = {});

TokenRelevance token_relevance(const WordRelevance& word_rel, const WordAlignment& alignment,
                               bool normalize);

// min-similarity between responses; at(l, i) = S(s_l, s_i). Diagonal is 1.
struct SimilarityMatrix {
  std::size_t k = 0;
  std::vector<double> values;

  double at(std::size_t l, std::size_t i) const { return values[l * k + i]; }
  double& at(std::size_t l, std::size_t i) { return values[l * k + i]; }
};

enum class PairOrder {
  // One call per unordered pair {l < i}, scored as (s_l, s_i) and mirrored.
  kUnordered,
  // Every ordered pair scored separately.
  kOrdered,
};

SimilarityMatrix pairwise_similarity(std::span<const GenerationRecord> responses,
                                     SimilarityProvider& provider, PairOrder order);

// R_S(s_i) = sum_{l != i} S(s_l, s_i) p(s_l), kept in log space.
struct SequenceRelevance {
  std::vector<double> log_scores;  // -inf where R_S = 0

  double value(std::size_t i) const;
  std::vector<double> values() const;
};

// `log_probs[l]` is log p(s_l): raw sequence log-probability, or -U_S for the
// calibrated variant.
SequenceRelevance sequence_relevance(const SimilarityMatrix& sims,
                                     std::span<const double> log_probs);

enum class ProbSource { kRaw, kCalibrated };

// Raw uses each response's sequence log-probability. Calibrated uses exp(-U_S)
// and requires `word_level_uncertainty` (one U_S per response).
SequenceRelevance sequence_relevance(const QASample& sample, SimilarityProvider& provider,
                                     ProbSource source,
                                     std::span<const double> word_level_uncertainty = {});

// Ten equal-width bins on [0,1]; the last bin is right-closed and also takes
// values above 1.
class RelevanceHistogram {
 public:
  static constexpr std::size_t kBins = 10;

  struct Bin {
    std::size_t count = 0;
    double uncertainty_sum = 0.0;

    double mean() const { return count ? uncertainty_sum / static_cast<double>(count) : 0.0; }
  };

  static std::size_t bin_of(double relevance);
  void add(double relevance, double uncertainty);
  void merge(const RelevanceHistogram& other);
  const std::array<Bin, kBins>& bins() const { return bins_; }

 private:
  std::array<Bin, kBins> bins_{};
};

struct ResponseProfile {
  std::vector<double> word_entropy;      // E_W
  std::vector<double> word_proportion;   // P_W; zeros when E_S = 0
  double sequence_entropy = 0.0;         // E_S
  bool zero_entropy = false;
};

struct ProportionProfile {
  std::vector<ResponseProfile> responses;
  std::vector<double> sequence_proportion;  // P_S; zeros when total entropy is 0
  bool zero_total_entropy = false;

  RelevanceHistogram word;
  RelevanceHistogram word_normalized;
  RelevanceHistogram sequence;
  RelevanceHistogram sequence_normalized;

  void merge_histograms(const ProportionProfile& other);
};

ProportionProfile proportion_profile(const QASample& sample,
                                     std::span<const WordAlignment> alignments,
                                     std::span<const WordRelevance> word_relevances,
                                     const SequenceRelevance& sequence_rel);

// CSV: level,bin_lo,bin_hi,count,uncertainty_sum,uncertainty_mean
void write_histogram_csv(std::ostream& out, const ProportionProfile& profile);

}  // namespace wse
