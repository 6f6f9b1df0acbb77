#include "wse/relevance.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "wse/errors.hpp"
#include "wse/logmath.hpp"

namespace wse {

namespace {

bool is_ws(char ch) {
  return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' || ch == '\f';
}

std::string join_nonempty(std::string_view a, std::string_view b) {
  if (a.empty()) return std::string(b);
  if (b.empty()) return std::string(a);
  std::string out;
  out.reserve(a.size() + b.size() + 1);
  out.append(a).push_back(' ');
  out.append(b);
  return out;
}

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string Ablation::restore() const {
  std::string out = text;
  out.insert(at, removed);
  return out;
}

Ablation remove_span(std::string_view text, Span word) {
  std::size_t lo = word.start;
  std::size_t hi = word.end;
  if (hi < text.size() && is_ws(text[hi])) {
    while (hi < text.size() && is_ws(text[hi])) ++hi;
  } else {
    while (lo > 0 && is_ws(text[lo - 1])) --lo;
  }
  Ablation a;
  a.at = lo;
  a.removed = std::string(text.substr(lo, hi - lo));
  a.text = std::string(text.substr(0, lo));
  a.text.append(text.substr(hi));
  return a;
}

std::string prompt_prefix(const QASample& sample, const RelevanceOptions& options) {
  if (options.include_context && sample.context && !sample.context->empty()) {
    return join_nonempty(*sample.context, sample.question);
  }
  return sample.question;
}

std::vector<double> WordRelevance::normalized() const {
  double sum = 0.0;
  for (double s : scores) sum += s;
  std::vector<double> out(scores.size(), 0.0);
  if (sum > 0.0) {
    for (std::size_t j = 0; j < scores.size(); ++j) out[j] = scores[j] / sum;
  }
  return out;
}

WordRelevance word_relevance(const QASample& sample, std::size_t response,
                             const WordAlignment& alignment, SimilarityProvider& provider,
                             const RelevanceOptions& options) {
  const GenerationRecord& rec = sample.responses.at(response);
  const std::size_t n = alignment.word_count();
  if (n == 0) {
    throw DataError("sample '" + sample.id + "' response " + std::to_string(response) +
                        ": word relevance needs at least one word",
                    "data.precondition");
  }
  WordRelevance out;
  if (n == 1) {
    // Removing the only word leaves nothing to compare against.
    out.scores.assign(1, 1.0);
    return out;
  }
  const std::string prefix = prompt_prefix(sample, options);
  const std::string original = join_nonempty(prefix, rec.text);
  std::vector<TextPair> pairs;
  pairs.reserve(n);
  for (const auto& w : alignment.words) {
    pairs.push_back({original, join_nonempty(prefix, remove_span(rec.text, w.span).text)});
  }
  const auto sims = provider.score_batch(pairs);
  out.scores.reserve(n);
  for (const auto& s : sims) out.scores.push_back(1.0 - s.min_sim);
  return out;
}

TokenRelevance token_relevance(const WordRelevance& word_rel, const WordAlignment& alignment,
                               bool normalize) {
  if (word_rel.scores.size() != alignment.word_count()) {
    throw DataError("token relevance: word score count does not match alignment",
                    "data.precondition");
  }
  const std::vector<double> per_word = normalize ? word_rel.normalized() : word_rel.scores;
  TokenRelevance out;
  out.scores.resize(alignment.token_count());
  for (std::size_t t = 0; t < alignment.token_count(); ++t) {
    out.scores[t] = per_word[alignment.token_owner[t]];
  }
  return out;
}

SimilarityMatrix pairwise_similarity(std::span<const GenerationRecord> responses,
                                     SimilarityProvider& provider, PairOrder order) {
  const std::size_t k = responses.size();
  SimilarityMatrix m;
  m.k = k;
  m.values.assign(k * k, 1.0);
  std::vector<TextPair> pairs;
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t i = 0; i < k; ++i) {
      if (l == i) continue;
      if (order == PairOrder::kUnordered && l > i) continue;
      pairs.push_back({responses[l].text, responses[i].text});
      slots.emplace_back(l, i);
    }
  }
  if (pairs.empty()) return m;
  const auto sims = provider.score_batch(pairs);
  for (std::size_t p = 0; p < slots.size(); ++p) {
    const auto [l, i] = slots[p];
    m.at(l, i) = sims[p].min_sim;
    if (order == PairOrder::kUnordered) m.at(i, l) = sims[p].min_sim;
  }
  return m;
}

double SequenceRelevance::value(std::size_t i) const { return std::exp(log_scores.at(i)); }

std::vector<double> SequenceRelevance::values() const {
  std::vector<double> out;
  out.reserve(log_scores.size());
  for (double v : log_scores) out.push_back(std::exp(v));
  return out;
}

SequenceRelevance sequence_relevance(const SimilarityMatrix& sims,
                                     std::span<const double> log_probs) {
  const std::size_t k = sims.k;
  if (log_probs.size() != k) {
    throw DataError("sequence relevance: probability count does not match response count",
                    "data.precondition");
  }
  SequenceRelevance out;
  out.log_scores.assign(k, kNegInf);
  std::vector<double> terms;
  for (std::size_t i = 0; i < k; ++i) {
    terms.clear();
    for (std::size_t l = 0; l < k; ++l) {
      if (l == i) continue;
      const double s = sims.at(l, i);
      if (s > 0.0) terms.push_back(std::log(s) + log_probs[l]);
    }
    out.log_scores[i] = logsumexp(terms);
  }
  return out;
}

SequenceRelevance sequence_relevance(const QASample& sample, SimilarityProvider& provider,
                                     ProbSource source,
                                     std::span<const double> word_level_uncertainty) {
  const std::size_t k = sample.k();
  if (k < 2) {
    throw DataError("sample '" + sample.id + "': sequence relevance needs K >= 2",
                    "data.precondition");
  }
  std::vector<double> log_probs(k);
  if (source == ProbSource::kRaw) {
    for (std::size_t l = 0; l < k; ++l) log_probs[l] = sequence_logprob(sample.responses[l]).logprob;
  } else {
    if (word_level_uncertainty.size() != k) {
      throw DataError("calibrated sequence relevance needs one U_S per response",
                      "data.precondition");
    }
    for (std::size_t l = 0; l < k; ++l) log_probs[l] = -word_level_uncertainty[l];
  }
  const auto sims = pairwise_similarity(sample.responses, provider, PairOrder::kUnordered);
  return sequence_relevance(sims, log_probs);
}

std::size_t RelevanceHistogram::bin_of(double relevance) {
  if (!(relevance > 0.0)) return 0;
  const auto b = static_cast<std::size_t>(std::floor(relevance * static_cast<double>(kBins)));
  return std::min(b, kBins - 1);
}

void RelevanceHistogram::add(double relevance, double uncertainty) {
  Bin& b = bins_[bin_of(relevance)];
  ++b.count;
  b.uncertainty_sum += uncertainty;
}

void RelevanceHistogram::merge(const RelevanceHistogram& other) {
  for (std::size_t b = 0; b < kBins; ++b) {
    bins_[b].count += other.bins_[b].count;
    bins_[b].uncertainty_sum += other.bins_[b].uncertainty_sum;
  }
}

void ProportionProfile::merge_histograms(const ProportionProfile& other) {
  word.merge(other.word);
  word_normalized.merge(other.word_normalized);
  sequence.merge(other.sequence);
  sequence_normalized.merge(other.sequence_normalized);
}

ProportionProfile proportion_profile(const QASample& sample,
                                     std::span<const WordAlignment> alignments,
                                     std::span<const WordRelevance> word_relevances,
                                     const SequenceRelevance& sequence_rel) {
  const std::size_t k = sample.k();
  if (alignments.size() != k || word_relevances.size() != k ||
      sequence_rel.log_scores.size() != k) {
    throw DataError("proportion profile: inputs must cover every response", "data.precondition");
  }
  ProportionProfile p;
  p.responses.resize(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& rec = sample.responses[i];
    const auto& al = alignments[i];
    const auto& wr = word_relevances[i];
    ResponseProfile& rp = p.responses[i];
    rp.word_entropy.assign(al.word_count(), 0.0);
    for (std::size_t t = 0; t < rec.tokens.size(); ++t) {
      rp.word_entropy[al.token_owner[t]] += -rec.tokens[t].logprob;
    }
    for (double e : rp.word_entropy) rp.sequence_entropy += e;
    rp.zero_entropy = !(rp.sequence_entropy > 0.0);
    rp.word_proportion.assign(al.word_count(), 0.0);
    if (!rp.zero_entropy) {
      for (std::size_t j = 0; j < al.word_count(); ++j) {
        rp.word_proportion[j] = rp.word_entropy[j] / rp.sequence_entropy;
      }
    }
    const auto norm = wr.normalized();
    for (std::size_t j = 0; j < al.word_count(); ++j) {
      p.word.add(wr.scores[j], rp.word_entropy[j]);
      p.word_normalized.add(norm[j], rp.word_entropy[j]);
    }
    total += rp.sequence_entropy;
  }
  p.zero_total_entropy = !(total > 0.0);
  p.sequence_proportion.assign(k, 0.0);
  if (!p.zero_total_entropy) {
    for (std::size_t i = 0; i < k; ++i) {
      p.sequence_proportion[i] = p.responses[i].sequence_entropy / total;
    }
  }
  const double log_total_rel = logsumexp(sequence_rel.log_scores);
  for (std::size_t i = 0; i < k; ++i) {
    const double e = p.responses[i].sequence_entropy;
    p.sequence.add(sequence_rel.value(i), e);
    const double normalized =
        log_total_rel == kNegInf ? 0.0 : std::exp(sequence_rel.log_scores[i] - log_total_rel);
    p.sequence_normalized.add(normalized, e);
  }
  return p;
}

void write_histogram_csv(std::ostream& out, const ProportionProfile& profile) {
  out << "level,bin_lo,bin_hi,count,uncertainty_sum,uncertainty_mean\n";
  const std::pair<const char*, const RelevanceHistogram*> levels[] = {
      {"word", &profile.word},
      {"word_normalized", &profile.word_normalized},
      {"sequence", &profile.sequence},
      {"sequence_normalized", &profile.sequence_normalized},
  };
  for (const auto& [name, hist] : levels) {
    for (std::size_t b = 0; b < RelevanceHistogram::kBins; ++b) {
      const auto& bin = hist->bins()[b];
      char range[32];
      std::snprintf(range, sizeof range, "%.1f,%.1f", static_cast<double>(b) / 10.0,
                    static_cast<double>(b + 1) / 10.0);
      out << name << ',' << range << ',' << bin.count << ',' << fmt_real(bin.uncertainty_sum)
          << ',' << fmt_real(bin.mean()) << '\n';
    }
  }
}

}  // namespace wse
