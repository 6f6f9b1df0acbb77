#pragma once

// Correctness labels for a generation against its references: Rouge-L F1 (RS)
// and cross-encoder sentence similarity (SS). A generation is correct when
// either metric strictly exceeds its threshold.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wse/records.hpp"
#include "wse/similarity.hpp"

namespace wse {

struct CorrectnessConfig {
  double rs_threshold = 0.5;
  double ss_threshold = 0.5;

  void validate() const;
};

struct CorrectnessLabel {
  std::string sample_id;
  double rs = 0.0;
  double ss = 0.0;
  bool correct = false;
  std::size_t best_rs_reference = 0;
  std::size_t best_ss_reference = 0;
};

// Length of the longest common subsequence of two word sequences.
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// F1 of LCS precision and recall over lowercased words; 0 for empty input.
double rouge_l(std::string_view candidate, std::string_view reference);

bool is_correct(double rs, double ss, const CorrectnessConfig& cfg);

// Labels an arbitrary candidate text against the sample's references.
CorrectnessLabel label_text(const std::string& sample_id, const std::string& candidate,
                            std::span<const std::string> references, SimilarityProvider& provider,
                            const CorrectnessConfig& cfg);

// Labels the sample's most-likely generation.
CorrectnessLabel label(const QASample& sample, SimilarityProvider& provider,
                       const CorrectnessConfig& cfg);

}  // namespace wse
