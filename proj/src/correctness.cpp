#include "wse/correctness.hpp"

#include <algorithm>

#include "wse/errors.hpp"
#include "wse/segmentation.hpp"

namespace wse {

void CorrectnessConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(rs_threshold) || !unit(ss_threshold)) {
    throw ConfigError("correctness thresholds must lie in [0,1]");
  }
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  // Two-row DP.
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = lowercase_words(candidate);
  const auto r = lowercase_words(reference);
  if (c.empty() || r.empty()) return 0.0;
  const auto l = static_cast<double>(lcs_length(c, r));
  const double p = l / static_cast<double>(c.size());
  const double rec = l / static_cast<double>(r.size());
  if (p + rec == 0.0) return 0.0;
  return 2.0 * p * rec / (p + rec);
}

bool is_correct(double rs, double ss, const CorrectnessConfig& cfg) {
  return rs > cfg.rs_threshold || ss > cfg.ss_threshold;
}

CorrectnessLabel label_text(const std::string& sample_id, const std::string& candidate,
                            std::span<const std::string> references, SimilarityProvider& provider,
                            const CorrectnessConfig& cfg) {
  if (references.empty()) {
    throw DataError("sample '" + sample_id + "': no references to label against",
                    "data.precondition");
  }
  CorrectnessLabel out;
  out.sample_id = sample_id;
  std::vector<TextPair> pairs;
  std::vector<std::size_t> ref_index;
  for (std::size_t r = 0; r < references.size(); ++r) {
    const double rs = rouge_l(candidate, references[r]);
    if (r == 0 || rs > out.rs) {
      out.rs = rs;
      out.best_rs_reference = r;
    }
    if (!references[r].empty()) {
      pairs.push_back({candidate, references[r]});
      ref_index.push_back(r);
    }
  }
  if (!pairs.empty() && !candidate.empty()) {
    const auto sims = provider.score_batch(pairs);
    for (std::size_t p = 0; p < sims.size(); ++p) {
      if (p == 0 || sims[p].s_c > out.ss) {
        out.ss = sims[p].s_c;
        out.best_ss_reference = ref_index[p];
      }
    }
  }
  out.correct = is_correct(out.rs, out.ss, cfg);
  return out;
}

CorrectnessLabel label(const QASample& sample, SimilarityProvider& provider,
                       const CorrectnessConfig& cfg) {
  return label_text(sample.id, sample.most_likely.text, sample.references, provider, cfg);
}

}  // namespace wse
